#pragma once

#include <cstddef>
#include <utility>

#include "fednorm/tensor.hpp"

namespace fednorm {

enum class NormAlgo { BatchNorm, GroupNorm, InstanceNorm, LayerNorm, BatchRenorm };

const char* norm_algo_name(NormAlgo a);

/// Which normalization to apply, plus its per-kind knobs.
struct NormKind {
    NormAlgo algo = NormAlgo::BatchNorm;
    std::size_t groups = 32;  // GroupNorm only; must divide C
    double r_max = 3.0;       // BatchRenorm clip limits
    double d_max = 5.0;

    static NormKind batch_norm() { return {NormAlgo::BatchNorm}; }
    static NormKind group_norm(std::size_t g) { return {NormAlgo::GroupNorm, g}; }
    static NormKind instance_norm() { return {NormAlgo::InstanceNorm}; }
    static NormKind layer_norm() { return {NormAlgo::LayerNorm}; }
    static NormKind batch_renorm(double r_max = 3.0, double d_max = 5.0) {
        return {NormAlgo::BatchRenorm, 32, r_max, d_max};
    }

    /// Effective group count for a layer with C channels.
    std::size_t effective_groups(std::size_t channels) const;
};

/// Largest divisor of `channels` not exceeding `wanted`; used to pick a
/// GroupNorm default when C is not divisible by 32.
std::size_t default_group_count(std::size_t channels, std::size_t wanted = 32);

enum class Mode { Train, Eval };

/// Learnable affine plus running statistics for one normalization layer.
/// Running stats are only consulted by BatchNorm/BatchRenorm.
struct NormState {
    Tensor gamma;         // C
    Tensor beta;          // C
    Tensor running_mean;  // C
    Tensor running_var;   // C
    double momentum = 0.9;
    double epsilon = 1e-5;
    Mode mode = Mode::Train;
    bool stats_initialized = false;

    static NormState init(std::size_t channels, double momentum = 0.9, double epsilon = 1e-5);
};

struct NormCache {
    NormKind kind;
    Mode mode = Mode::Train;
    Tensor x;
    Tensor normalized;       // pre-affine output (x̂ for BN/GN..., x̂·r + d for BRN)
    std::vector<double> mu;  // one entry per statistics group
    std::vector<double> inv_std;
    Tensor gamma;
    Tensor r;  // BRN per-channel scale; all ones otherwise
    std::size_t group_count = 0;
};

struct NormGrads {
    Tensor dx, dgamma, dbeta;
};

/// y = γ·x̂ + β with x̂ standardized over the kind's axes. In Train mode
/// BN/BRN also update the running statistics in `state`.
Tensor norm_forward(const NormKind& kind, const Tensor& x, NormState& state,
                    NormCache* cache = nullptr);

/// Gradients flow through the batch/group statistics; BRN's r and d are
/// treated as constants.
NormGrads norm_backward(const NormCache& cache, const Tensor& dy);

/// Batch Renormalization correction factors, clipped per channel:
///   r = clip(σ_batch/σ_running, 1/r_max, r_max)
///   d = clip((μ_batch − μ_running)/σ_running, −d_max, d_max)
std::pair<Tensor, Tensor> brn_correction(const Tensor& batch_mu, const Tensor& batch_sigma,
                                         const NormState& state, double r_max, double d_max);

}  // namespace fednorm
