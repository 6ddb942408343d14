#pragma once

#include <cmath>

#include "fednorm/tensor.hpp"

namespace fednorm::test {

inline Tensor random_tensor(std::vector<std::size_t> shape, RngStream& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * rng.next_normal();
    return t;
}

/// Relative error with an absolute floor, elementwise max over the tensors.
inline double max_rel_error(const Tensor& a, const Tensor& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

inline bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace fednorm::test
