#pragma once

#include <functional>
#include <utility>

#include "fednorm/tensor.hpp"

namespace fednorm {

// ---------------------------------------------------------------------------
// Forward/backward primitives. Each forward optionally fills a cache that the
// matching backward consumes. Convolution uses the cross-correlation
// convention (no kernel flip).
// ---------------------------------------------------------------------------

struct Conv2dCache {
    Tensor x;        // N×C×H×W input
    Tensor kernels;  // F×C×k×k
    std::size_t stride = 1;
    std::size_t padding = 0;
};

struct Conv2dGrads {
    Tensor dx, dkernels, dbias;
};

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding, Conv2dCache* cache = nullptr);
Conv2dGrads conv2d_backward(const Conv2dCache& cache, const Tensor& dy);

struct DenseCache {
    Tensor x;  // N×D
    Tensor w;  // D×M
};

struct DenseGrads {
    Tensor dx, dw, dbias;
};

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias, DenseCache* cache = nullptr);
DenseGrads dense_backward(const DenseCache& cache, const Tensor& dy);

struct ReluCache {
    Tensor x;
};

Tensor relu(const Tensor& x, ReluCache* cache = nullptr);
Tensor relu_backward(const ReluCache& cache, const Tensor& dy);

/// 2×2 max pooling, stride 2. Ties route the gradient to the first maximum in
/// row-major order.
struct MaxPool2Cache {
    std::vector<std::size_t> argmax;  // flat input index per output element
    std::vector<std::size_t> in_shape;
};

Tensor maxpool2(const Tensor& x, MaxPool2Cache* cache = nullptr);
Tensor maxpool2_backward(const MaxPool2Cache& cache, const Tensor& dy);

struct GapCache {
    std::vector<std::size_t> in_shape;
};

/// N×C×H×W -> N×C mean over the spatial axes.
Tensor global_avg_pool(const Tensor& x, GapCache* cache = nullptr);
Tensor global_avg_pool_backward(const GapCache& cache, const Tensor& dy);

struct SoftmaxXentCache {
    Tensor probs;  // N×K
    std::vector<int> labels;
};

/// Mean cross-entropy over the batch; cache holds the softmax probabilities.
double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             SoftmaxXentCache* cache = nullptr);
Tensor softmax_cross_entropy_backward(const SoftmaxXentCache& cache);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<Tensor> m;  // first moments, one per parameter tensor
    std::vector<Tensor> v;  // second moments
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    /// Zero-initialize moments matching the given parameter shapes.
    static AdamState init(const std::vector<const Tensor*>& params);
};

/// One bias-corrected Adam step over an aligned parameter/gradient list.
void adam_step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads,
               AdamState& state, double lr);

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

/// Central difference (f(x+h·e_i) − f(x−h·e_i)) / 2h per element.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& loss_fn, const Tensor& x,
                              double h);

}  // namespace fednorm
