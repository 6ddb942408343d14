#include "fednorm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fednorm {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding, Conv2dCache* cache) {
    require(x.rank() == 4, "conv2d: input must be N*C*H*W");
    require(kernels.rank() == 4, "conv2d: kernels must be F*C*k*k");
    const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t F = kernels.shape[0], k = kernels.shape[2];
    require(kernels.shape[1] == C, "conv2d: kernel channels do not match input channels");
    require(kernels.shape[3] == k, "conv2d: kernels must be square");
    require(bias.size() == F, "conv2d: bias length must equal filter count");
    if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
    require(k <= H + 2 * padding && k <= W + 2 * padding, "conv2d: kernel larger than padded input");

    const std::size_t Ho = (H + 2 * padding - k) / stride + 1;
    const std::size_t Wo = (W + 2 * padding - k) / stride + 1;
    Tensor y({N, F, Ho, Wo});

    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double acc = bias[f];
                    const long h0 = static_cast<long>(oh * stride) - static_cast<long>(padding);
                    const long w0 = static_cast<long>(ow * stride) - static_cast<long>(padding);
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t kh = 0; kh < k; ++kh) {
                            const long ih = h0 + static_cast<long>(kh);
                            if (ih < 0 || ih >= static_cast<long>(H)) continue;
                            for (std::size_t kw = 0; kw < k; ++kw) {
                                const long iw = w0 + static_cast<long>(kw);
                                if (iw < 0 || iw >= static_cast<long>(W)) continue;
                                acc += x.at4(n, c, ih, iw) * kernels.at4(f, c, kh, kw);
                            }
                        }
                    y.at4(n, f, oh, ow) = acc;
                }

    if (cache) {
        cache->x = x;
        cache->kernels = kernels;
        cache->stride = stride;
        cache->padding = padding;
    }
    return y;
}

Conv2dGrads conv2d_backward(const Conv2dCache& cache, const Tensor& dy) {
    const Tensor& x = cache.x;
    const Tensor& kernels = cache.kernels;
    const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::size_t F = kernels.shape[0], k = kernels.shape[2];
    require(dy.rank() == 4 && dy.shape[0] == N && dy.shape[1] == F, "conv2d_backward: dy shape mismatch");
    const std::size_t Ho = dy.shape[2], Wo = dy.shape[3];

    Conv2dGrads g{Tensor({N, C, H, W}), Tensor({F, C, k, k}), Tensor({F})};

    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    const double d = dy.at4(n, f, oh, ow);
                    if (d == 0.0) continue;
                    g.dbias[f] += d;
                    const long h0 = static_cast<long>(oh * cache.stride) - static_cast<long>(cache.padding);
                    const long w0 = static_cast<long>(ow * cache.stride) - static_cast<long>(cache.padding);
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t kh = 0; kh < k; ++kh) {
                            const long ih = h0 + static_cast<long>(kh);
                            if (ih < 0 || ih >= static_cast<long>(H)) continue;
                            for (std::size_t kw = 0; kw < k; ++kw) {
                                const long iw = w0 + static_cast<long>(kw);
                                if (iw < 0 || iw >= static_cast<long>(W)) continue;
                                g.dkernels.at4(f, c, kh, kw) += d * x.at4(n, c, ih, iw);
                                g.dx.at4(n, c, ih, iw) += d * kernels.at4(f, c, kh, kw);
                            }
                        }
                }
    return g;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias, DenseCache* cache) {
    require(x.rank() == 2 && w.rank() == 2, "dense: x must be N*D, w must be D*M");
    const std::size_t N = x.shape[0], D = x.shape[1], M = w.shape[1];
    require(w.shape[0] == D, "dense: weight rows do not match input width");
    require(bias.size() == M, "dense: bias length mismatch");

    Tensor y({N, M});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t d = 0; d < D; ++d) {
            const double xv = x[n * D + d];
            if (xv == 0.0) continue;
            for (std::size_t m = 0; m < M; ++m) y[n * M + m] += xv * w[d * M + m];
        }
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) y[n * M + m] += bias[m];

    if (cache) {
        cache->x = x;
        cache->w = w;
    }
    return y;
}

DenseGrads dense_backward(const DenseCache& cache, const Tensor& dy) {
    const std::size_t N = cache.x.shape[0], D = cache.x.shape[1], M = cache.w.shape[1];
    require(dy.rank() == 2 && dy.shape[0] == N && dy.shape[1] == M, "dense_backward: dy shape mismatch");

    DenseGrads g{Tensor({N, D}), Tensor({D, M}), Tensor({M})};
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
            const double d = dy[n * M + m];
            g.dbias[m] += d;
            for (std::size_t j = 0; j < D; ++j) {
                g.dx[n * D + j] += d * cache.w[j * M + m];
                g.dw[j * M + m] += d * cache.x[n * D + j];
            }
        }
    return g;
}

Tensor relu(const Tensor& x, ReluCache* cache) {
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    if (cache) cache->x = x;
    return y;
}

Tensor relu_backward(const ReluCache& cache, const Tensor& dy) {
    require(cache.x.same_shape(dy), "relu_backward: dy shape mismatch");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (cache.x[i] <= 0.0) dx[i] = 0.0;
    return dx;
}

Tensor maxpool2(const Tensor& x, MaxPool2Cache* cache) {
    require(x.rank() == 4, "maxpool2: input must be N*C*H*W");
    const std::size_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    require(H % 2 == 0 && W % 2 == 0, "maxpool2: H and W must be even");
    const std::size_t Ho = H / 2, Wo = W / 2;

    Tensor y({N, C, Ho, Wo});
    std::vector<std::size_t> argmax(y.size());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_idx = 0;
                    for (std::size_t dh = 0; dh < 2; ++dh)
                        for (std::size_t dw = 0; dw < 2; ++dw) {
                            const std::size_t idx = x.idx4(n, c, 2 * oh + dh, 2 * ow + dw);
                            if (x[idx] > best) {  // strict: first maximum wins ties
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    const std::size_t out_idx = y.idx4(n, c, oh, ow);
                    y[out_idx] = best;
                    argmax[out_idx] = best_idx;
                }

    if (cache) {
        cache->argmax = std::move(argmax);
        cache->in_shape = x.shape;
    }
    return y;
}

Tensor maxpool2_backward(const MaxPool2Cache& cache, const Tensor& dy) {
    require(dy.size() == cache.argmax.size(), "maxpool2_backward: dy size mismatch");
    Tensor dx(cache.in_shape);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[cache.argmax[i]] += dy[i];
    return dx;
}

Tensor global_avg_pool(const Tensor& x, GapCache* cache) {
    require(x.rank() == 4, "global_avg_pool: input must be N*C*H*W");
    const std::size_t N = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3];
    Tensor y({N, C});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            double acc = 0.0;
            const std::size_t base = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) acc += x[base + i];
            y[n * C + c] = acc / static_cast<double>(HW);
        }
    if (cache) cache->in_shape = x.shape;
    return y;
}

Tensor global_avg_pool_backward(const GapCache& cache, const Tensor& dy) {
    const std::size_t N = cache.in_shape[0], C = cache.in_shape[1];
    const std::size_t HW = cache.in_shape[2] * cache.in_shape[3];
    require(dy.rank() == 2 && dy.shape[0] == N && dy.shape[1] == C, "global_avg_pool_backward: dy mismatch");
    Tensor dx(cache.in_shape);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const double d = dy[n * C + c] / static_cast<double>(HW);
            const std::size_t base = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) dx[base + i] = d;
        }
    return dx;
}

double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             SoftmaxXentCache* cache) {
    require(logits.rank() == 2, "softmax_cross_entropy: logits must be N*K");
    const std::size_t N = logits.shape[0], K = logits.shape[1];
    if (N == 0) throw ValueError("softmax_cross_entropy: empty batch");
    if (labels.size() != N) throw ShapeError("softmax_cross_entropy: label count mismatch");

    Tensor probs({N, K});
    double loss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        const int y = labels[n];
        if (y < 0 || static_cast<std::size_t>(y) >= K)
            throw ValueError("softmax_cross_entropy: label " + std::to_string(y) + " out of range");
        double mx = logits[n * K];
        for (std::size_t j = 1; j < K; ++j) mx = std::max(mx, logits[n * K + j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            probs[n * K + j] = std::exp(logits[n * K + j] - mx);
            denom += probs[n * K + j];
        }
        for (std::size_t j = 0; j < K; ++j) probs[n * K + j] /= denom;
        loss -= std::log(std::max(probs[n * K + static_cast<std::size_t>(y)], 1e-300));
    }
    loss /= static_cast<double>(N);

    if (cache) {
        cache->probs = std::move(probs);
        cache->labels = labels;
    }
    return loss;
}

Tensor softmax_cross_entropy_backward(const SoftmaxXentCache& cache) {
    const std::size_t N = cache.probs.shape[0], K = cache.probs.shape[1];
    Tensor dlogits = cache.probs;
    for (std::size_t n = 0; n < N; ++n) dlogits[n * K + static_cast<std::size_t>(cache.labels[n])] -= 1.0;
    const double inv_n = 1.0 / static_cast<double>(N);
    for (double& v : dlogits.data) v *= inv_n;
    return dlogits;
}

AdamState AdamState::init(const std::vector<const Tensor*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
        s.m.emplace_back(Tensor(p->shape));
        s.v.emplace_back(Tensor(p->shape));
    }
    return s;
}

void adam_step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads,
               AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: parameter/gradient/state count mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, state.t);
    const double bc2 = 1.0 - std::pow(state.beta2, state.t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g)) throw ShapeError("adam_step: gradient shape mismatch");
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& loss_fn, const Tensor& x,
                              double h) {
    Tensor grad(x.shape);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = loss_fn(probe);
        probe[i] = orig - h;
        const double fm = loss_fn(probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace fednorm
