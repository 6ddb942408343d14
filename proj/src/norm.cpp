#include "fednorm/norm.hpp"

#include <cmath>
#include <cstdio>
#include <tuple>
#include <string>

namespace fednorm {

const char* norm_algo_name(NormAlgo a) {
    switch (a) {
        case NormAlgo::BatchNorm: return "batch";
        case NormAlgo::GroupNorm: return "group";
        case NormAlgo::InstanceNorm: return "instance";
        case NormAlgo::LayerNorm: return "layer";
        case NormAlgo::BatchRenorm: return "batch_renorm";
    }
    return "?";
}

std::size_t default_group_count(std::size_t channels, std::size_t wanted) {
    if (channels == 0) throw ValueError("default_group_count: zero channels");
    for (std::size_t g = std::min(wanted, channels); g >= 1; --g)
        if (channels % g == 0) return g;
    return 1;
}

std::size_t NormKind::effective_groups(std::size_t channels) const {
    switch (algo) {
        case NormAlgo::GroupNorm:
            if (groups == 0 || channels % groups != 0)
                throw ShapeError("group norm: group count " + std::to_string(groups) +
                                 " does not divide channel count " + std::to_string(channels));
            return groups;
        case NormAlgo::InstanceNorm: return channels;
        case NormAlgo::LayerNorm: return 1;
        default: return 0;  // batch-statistics kinds have no per-sample groups
    }
}

NormState NormState::init(std::size_t channels, double momentum, double epsilon) {
    NormState s;
    s.gamma = Tensor::full({channels}, 1.0);
    s.beta = Tensor::zeros({channels});
    s.running_mean = Tensor::zeros({channels});
    s.running_var = Tensor::full({channels}, 1.0);
    s.momentum = momentum;
    s.epsilon = epsilon;
    return s;
}

std::pair<Tensor, Tensor> brn_correction(const Tensor& batch_mu, const Tensor& batch_sigma,
                                         const NormState& state, double r_max, double d_max) {
    const std::size_t C = batch_mu.size();
    if (batch_sigma.size() != C || state.running_mean.size() != C)
        throw ShapeError("brn_correction: channel count mismatch");
    Tensor r({C});
    Tensor d({C});
    for (std::size_t c = 0; c < C; ++c) {
        const double run_sigma = std::sqrt(state.running_var[c] + state.epsilon);
        double rc = batch_sigma[c] / run_sigma;
        rc = std::min(std::max(rc, 1.0 / r_max), r_max);
        double dc = (batch_mu[c] - state.running_mean[c]) / run_sigma;
        dc = std::min(std::max(dc, -d_max), d_max);
        r[c] = rc;
        d[c] = dc;
    }
    return {r, d};
}

namespace {

bool uses_batch_stats(NormAlgo a) {
    return a == NormAlgo::BatchNorm || a == NormAlgo::BatchRenorm;
}

void warn_uninitialized_eval() {
    static bool warned = false;
    if (!warned) {
        std::fprintf(stderr,
                     "fednorm: warning: eval-mode batch norm with never-trained running stats "
                     "(mean 0, var 1)\n");
        warned = true;
    }
}

}  // namespace

Tensor norm_forward(const NormKind& kind, const Tensor& x, NormState& state, NormCache* cache) {
    if (x.rank() != 4) throw ShapeError("norm_forward: input must be N*C*H*W");
    const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    if (state.gamma.size() != C) throw ShapeError("norm_forward: state channel count mismatch");
    if (N == 0) throw ValueError("norm_forward: empty batch");
    const std::size_t HW = H * W;

    Tensor y(x.shape);
    Tensor normalized(x.shape);
    std::vector<double> mu, inv_std;
    Tensor r = Tensor::full({C}, 1.0);
    std::size_t group_count = 0;

    if (uses_batch_stats(kind.algo)) {
        const std::size_t m = N * HW;
        group_count = C;
        mu.assign(C, 0.0);
        inv_std.assign(C, 0.0);

        if (state.mode == Mode::Train) {
            if (m < 2) throw ValueError("norm_forward: batch stats need N*H*W >= 2");
            std::vector<double> var(C, 0.0);
            for (std::size_t c = 0; c < C; ++c) {
                double s = 0.0, s2 = 0.0;
                for (std::size_t n = 0; n < N; ++n) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        const double v = x[base + i];
                        s += v;
                        s2 += v * v;
                    }
                }
                mu[c] = s / static_cast<double>(m);
                var[c] = std::max(s2 / static_cast<double>(m) - mu[c] * mu[c], 0.0);
                inv_std[c] = 1.0 / std::sqrt(var[c] + state.epsilon);
            }

            Tensor d = Tensor::zeros({C});
            if (kind.algo == NormAlgo::BatchRenorm) {
                Tensor bmu({C}), bsigma({C});
                for (std::size_t c = 0; c < C; ++c) {
                    bmu[c] = mu[c];
                    bsigma[c] = std::sqrt(var[c] + state.epsilon);
                }
                std::tie(r, d) = brn_correction(bmu, bsigma, state, kind.r_max, kind.d_max);
            }

            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        const double xhat = (x[base + i] - mu[c]) * inv_std[c];
                        const double nrm = xhat * r[c] + d[c];
                        normalized[base + i] = nrm;
                        y[base + i] = state.gamma[c] * nrm + state.beta[c];
                    }
                }

            // running <- momentum*running + (1-momentum)*batch
            for (std::size_t c = 0; c < C; ++c) {
                state.running_mean[c] = state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mu[c];
                state.running_var[c] = state.momentum * state.running_var[c] + (1.0 - state.momentum) * var[c];
            }
            state.stats_initialized = true;
        } else {
            if (!state.stats_initialized) warn_uninitialized_eval();
            for (std::size_t c = 0; c < C; ++c) {
                mu[c] = state.running_mean[c];
                inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.epsilon);
            }
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        const double xhat = (x[base + i] - mu[c]) * inv_std[c];
                        normalized[base + i] = xhat;
                        y[base + i] = state.gamma[c] * xhat + state.beta[c];
                    }
                }
        }
    } else {
        // GN/IN/LN: per-sample statistics, identical in Train and Eval mode.
        const std::size_t G = kind.effective_groups(C);
        const std::size_t cpg = C / G;
        const std::size_t m = cpg * HW;
        group_count = N * G;
        mu.assign(group_count, 0.0);
        inv_std.assign(group_count, 0.0);

        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t g = 0; g < G; ++g) {
                double s = 0.0, s2 = 0.0;
                for (std::size_t c = g * cpg; c < (g + 1) * cpg; ++c) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        const double v = x[base + i];
                        s += v;
                        s2 += v * v;
                    }
                }
                const std::size_t gi = n * G + g;
                mu[gi] = s / static_cast<double>(m);
                const double var = std::max(s2 / static_cast<double>(m) - mu[gi] * mu[gi], 0.0);
                inv_std[gi] = 1.0 / std::sqrt(var + state.epsilon);
                for (std::size_t c = g * cpg; c < (g + 1) * cpg; ++c) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        const double xhat = (x[base + i] - mu[gi]) * inv_std[gi];
                        normalized[base + i] = xhat;
                        y[base + i] = state.gamma[c] * xhat + state.beta[c];
                    }
                }
            }
    }

    if (cache) {
        cache->kind = kind;
        cache->mode = state.mode;
        cache->x = x;
        cache->normalized = std::move(normalized);
        cache->mu = std::move(mu);
        cache->inv_std = std::move(inv_std);
        cache->gamma = state.gamma;
        cache->r = std::move(r);
        cache->group_count = group_count;
    }
    return y;
}

NormGrads norm_backward(const NormCache& cache, const Tensor& dy) {
    if (cache.mode != Mode::Train) throw ValueError("norm_backward: cache was produced in Eval mode");
    if (!cache.x.same_shape(dy)) throw ShapeError("norm_backward: dy shape mismatch");
    const std::size_t N = cache.x.shape[0], C = cache.x.shape[1];
    const std::size_t HW = cache.x.shape[2] * cache.x.shape[3];

    NormGrads g{Tensor(cache.x.shape), Tensor({C}), Tensor({C})};

    // dgamma/dbeta are shared across kinds.
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                g.dgamma[c] += dy[base + i] * cache.normalized[base + i];
                g.dbeta[c] += dy[base + i];
            }
        }

    if (uses_batch_stats(cache.kind.algo)) {
        const std::size_t m = N * HW;
        for (std::size_t c = 0; c < C; ++c) {
            // dxhat includes the per-channel BRN scale r (constant in backward).
            const double scale = cache.gamma[c] * cache.r[c];
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const std::size_t base = (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) {
                    const double dxhat = dy[base + i] * scale;
                    const double xhat = (cache.x[base + i] - cache.mu[c]) * cache.inv_std[c];
                    s1 += dxhat;
                    s2 += dxhat * xhat;
                }
            }
            const double inv_m = 1.0 / static_cast<double>(m);
            for (std::size_t n = 0; n < N; ++n) {
                const std::size_t base = (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) {
                    const double dxhat = dy[base + i] * scale;
                    const double xhat = (cache.x[base + i] - cache.mu[c]) * cache.inv_std[c];
                    g.dx[base + i] = cache.inv_std[c] * (dxhat - inv_m * s1 - xhat * inv_m * s2);
                }
            }
        }
    } else {
        const std::size_t G = cache.kind.effective_groups(C);
        const std::size_t cpg = C / G;
        const std::size_t m = cpg * HW;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t grp = 0; grp < G; ++grp) {
                const std::size_t gi = n * G + grp;
                double s1 = 0.0, s2 = 0.0;
                for (std::size_t c = grp * cpg; c < (grp + 1) * cpg; ++c) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        const double dxhat = dy[base + i] * cache.gamma[c];
                        s1 += dxhat;
                        s2 += dxhat * cache.normalized[base + i];
                    }
                }
                const double inv_m = 1.0 / static_cast<double>(m);
                for (std::size_t c = grp * cpg; c < (grp + 1) * cpg; ++c) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        const double dxhat = dy[base + i] * cache.gamma[c];
                        const double xhat = cache.normalized[base + i];
                        g.dx[base + i] = cache.inv_std[gi] * (dxhat - inv_m * s1 - xhat * inv_m * s2);
                    }
                }
            }
    }
    return g;
}

}  // namespace fednorm
