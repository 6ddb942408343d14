#include "fednorm/tensor.hpp"

#include <cmath>

namespace fednorm {

double RngStream::next_normal() {
    // Box-Muller; u1 is bounded away from zero so log() stays finite.
    double u1 = next_uniform();
    double u2 = next_uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
    if (n == 0) throw ValueError("next_below(0)");
    // Rejection sampling to avoid modulo bias.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return r % n;
}

}  // namespace fednorm
