#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "fednorm/errors.hpp"

namespace fednorm {

/// Dense N-dimensional array of doubles, row-major. Activations use N×C×H×W.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(count(shape), 0.0) {}
    Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (count(shape) != data.size()) throw ShapeError("tensor data length does not match shape");
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<std::size_t> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t dim(std::size_t i) const { return i < shape.size() ? shape[i] : 1; }

    // 4-D accessors for the common N×C×H×W case.
    std::size_t idx4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return ((n * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }
    double& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) { return data[idx4(n, c, h, w)]; }
    double at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const { return data[idx4(n, c, h, w)]; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

/// Counter-based RNG: draw i is a pure hash of (seed, stream, i), so client
/// streams are independent and results do not depend on thread schedule.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::uint64_t counter = 0;

    RngStream() = default;
    RngStream(std::uint64_t seed_, std::uint64_t stream_) : seed(seed_), stream(stream_) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1) + counter++;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0,1).
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (consumes two draws).
    double next_normal();

    /// Uniform integer in [0,n).
    std::uint64_t next_below(std::uint64_t n);

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[next_below(i)]);
    }
};

}  // namespace fednorm
