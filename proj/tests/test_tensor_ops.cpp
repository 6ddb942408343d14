#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fednorm/ops.hpp"
#include "test_util.hpp"

using namespace fednorm;
using fednorm::test::all_finite;
using fednorm::test::max_rel_error;
using fednorm::test::random_tensor;

namespace {
constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-4;
constexpr int kPropertyCases = 50;
}  // namespace

TEST_CASE("finite_difference_grad on known functions") {
    auto sum_sq = [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data) s += v * v;
        return s;
    };
    Tensor x({2}, {1.0, 2.0});
    Tensor g = finite_difference_grad(sum_sq, x, kFdStep);
    CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));

    auto constant = [](const Tensor&) { return 42.0; };
    Tensor gz = finite_difference_grad(constant, x, kFdStep);
    CHECK(gz[0] == 0.0);
    CHECK(gz[1] == 0.0);
}

TEST_CASE("conv2d identity kernel") {
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor k = Tensor::full({1, 1, 1, 1}, 1.0);
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d(x, k, b, 1, 0);
    CHECK(y.shape == std::vector<std::size_t>{1, 1, 3, 3});
    for (double v : y.data) CHECK(v == 1.0);
}

TEST_CASE("conv2d hand cross-correlation") {
    Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor k({1, 1, 2, 2}, {1, 0, 0, 1});
    Tensor y = conv2d(x, k, Tensor::zeros({1}), 1, 0);
    CHECK(y.shape == std::vector<std::size_t>{1, 1, 1, 1});
    CHECK(y[0] == 5.0);  // 1*1 + 4*1
}

TEST_CASE("conv2d output shape with padding") {
    RngStream rng(7, 0);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor k = random_tensor({4, 3, 3, 3}, rng);
    Tensor y = conv2d(x, k, Tensor::zeros({4}), 1, 1);
    CHECK(y.shape == std::vector<std::size_t>{2, 4, 8, 8});
}

TEST_CASE("conv2d rejects channel mismatch") {
    Tensor x = Tensor::zeros({1, 2, 4, 4});
    Tensor k = Tensor::zeros({1, 3, 3, 3});
    CHECK_THROWS_AS(conv2d(x, k, Tensor::zeros({1}), 1, 1), ShapeError);
}

TEST_CASE("conv2d_backward basics") {
    Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor k({1, 1, 2, 2}, {1, 0, 0, 1});
    Conv2dCache cache;
    conv2d(x, k, Tensor::zeros({1}), 1, 0, &cache);

    SUBCASE("zero dy gives zero grads") {
        auto g = conv2d_backward(cache, Tensor::zeros({1, 1, 1, 1}));
        for (double v : g.dx.data) CHECK(v == 0.0);
        for (double v : g.dkernels.data) CHECK(v == 0.0);
        CHECK(g.dbias[0] == 0.0);
    }
    SUBCASE("sum loss gives unit bias gradient") {
        auto g = conv2d_backward(cache, Tensor::full({1, 1, 1, 1}, 1.0));
        CHECK(g.dbias[0] == 1.0);
        CHECK(g.dkernels[0] == 1.0);  // d(sum y)/dk00 = x00
        CHECK(g.dkernels[3] == 4.0);
    }
}

// Weighted-sum loss turns a tensor-valued op into a scalar so central
// differences apply; the weights make the check sensitive to every element.
namespace {

Tensor random_weights(const std::vector<std::size_t>& shape, RngStream& rng) {
    Tensor w(shape);
    for (double& v : w.data) v = rng.next_normal();
    return w;
}

double weighted(const Tensor& y, const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
}

}  // namespace

TEST_CASE("conv2d backward matches finite differences") {
    RngStream rng(11, 0);
    for (int c = 0; c < kPropertyCases; ++c) {
        const std::size_t N = 1 + rng.next_below(2), C = 1 + rng.next_below(3);
        const std::size_t F = 1 + rng.next_below(3), k = 1 + rng.next_below(3);
        const std::size_t H = k + rng.next_below(3), W = k + rng.next_below(3);
        const std::size_t pad = rng.next_below(2);
        Tensor x = random_tensor({N, C, H, W}, rng);
        Tensor kern = random_tensor({F, C, k, k}, rng);
        Tensor bias = random_tensor({F}, rng);

        Conv2dCache cache;
        Tensor y = conv2d(x, kern, bias, 1, pad, &cache);
        Tensor w = random_weights(y.shape, rng);

        // dy for weighted-sum loss is just the weights.
        auto g = conv2d_backward(cache, w);

        Tensor fd_x = finite_difference_grad(
            [&](const Tensor& t) { return weighted(conv2d(t, kern, bias, 1, pad), w); }, x, kFdStep);
        Tensor fd_k = finite_difference_grad(
            [&](const Tensor& t) { return weighted(conv2d(x, t, bias, 1, pad), w); }, kern, kFdStep);
        Tensor fd_b = finite_difference_grad(
            [&](const Tensor& t) { return weighted(conv2d(x, kern, t, 1, pad), w); }, bias, kFdStep);

        CHECK(max_rel_error(g.dx, fd_x) < kFdTol);
        CHECK(max_rel_error(g.dkernels, fd_k) < kFdTol);
        CHECK(max_rel_error(g.dbias, fd_b) < kFdTol);
    }
}

TEST_CASE("dense backward matches finite differences") {
    RngStream rng(13, 0);
    for (int c = 0; c < kPropertyCases; ++c) {
        const std::size_t N = 1 + rng.next_below(4), D = 1 + rng.next_below(5), M = 1 + rng.next_below(4);
        Tensor x = random_tensor({N, D}, rng);
        Tensor wgt = random_tensor({D, M}, rng);
        Tensor bias = random_tensor({M}, rng);

        DenseCache cache;
        Tensor y = dense(x, wgt, bias, &cache);
        Tensor w = random_weights(y.shape, rng);
        auto g = dense_backward(cache, w);

        Tensor fd_x = finite_difference_grad(
            [&](const Tensor& t) { return weighted(dense(t, wgt, bias), w); }, x, kFdStep);
        Tensor fd_w = finite_difference_grad(
            [&](const Tensor& t) { return weighted(dense(x, t, bias), w); }, wgt, kFdStep);
        CHECK(max_rel_error(g.dx, fd_x) < kFdTol);
        CHECK(max_rel_error(g.dw, fd_w) < kFdTol);
    }
}

TEST_CASE("relu forward and backward") {
    Tensor x({3}, {-1.0, 0.0, 2.0});
    ReluCache cache;
    Tensor y = relu(x, &cache);
    CHECK(y.data == std::vector<double>{0.0, 0.0, 2.0});
    Tensor dx = relu_backward(cache, Tensor({3}, {5.0, 5.0, 5.0}));
    CHECK(dx.data == std::vector<double>{0.0, 0.0, 5.0});
}

TEST_CASE("maxpool2 backward matches finite differences") {
    RngStream rng(17, 0);
    for (int c = 0; c < kPropertyCases; ++c) {
        const std::size_t N = 1 + rng.next_below(2), C = 1 + rng.next_below(3);
        const std::size_t H = 2 * (1 + rng.next_below(3)), W = 2 * (1 + rng.next_below(3));
        Tensor x = random_tensor({N, C, H, W}, rng);

        MaxPool2Cache cache;
        Tensor y = maxpool2(x, &cache);
        Tensor w = random_weights(y.shape, rng);
        Tensor dx = maxpool2_backward(cache, w);

        Tensor fd = finite_difference_grad([&](const Tensor& t) { return weighted(maxpool2(t), w); },
                                           x, kFdStep);
        CHECK(max_rel_error(dx, fd) < kFdTol);
    }
}

TEST_CASE("maxpool2 ties route to first maximum") {
    Tensor x = Tensor::full({1, 1, 2, 2}, 3.0);
    MaxPool2Cache cache;
    maxpool2(x, &cache);
    CHECK(cache.argmax[0] == 0);  // row-major first element
}

TEST_CASE("global_avg_pool backward matches finite differences") {
    RngStream rng(19, 0);
    for (int c = 0; c < kPropertyCases; ++c) {
        const std::size_t N = 1 + rng.next_below(3), C = 1 + rng.next_below(4);
        const std::size_t H = 1 + rng.next_below(4), W = 1 + rng.next_below(4);
        Tensor x = random_tensor({N, C, H, W}, rng);
        GapCache cache;
        Tensor y = global_avg_pool(x, &cache);
        Tensor w = random_weights(y.shape, rng);
        Tensor dx = global_avg_pool_backward(cache, w);
        Tensor fd = finite_difference_grad(
            [&](const Tensor& t) { return weighted(global_avg_pool(t), w); }, x, kFdStep);
        CHECK(max_rel_error(dx, fd) < kFdTol);
    }
}

TEST_CASE("softmax cross-entropy values") {
    SUBCASE("uniform logits over 10 classes give ln 10") {
        Tensor logits = Tensor::zeros({1, 10});
        const double loss = softmax_cross_entropy(logits, {3});
        CHECK(loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    }
    SUBCASE("probabilities sum to one") {
        RngStream rng(23, 0);
        Tensor logits = random_tensor({4, 7}, rng, 3.0);
        SoftmaxXentCache cache;
        softmax_cross_entropy(logits, {0, 1, 2, 3}, &cache);
        for (std::size_t n = 0; n < 4; ++n) {
            double s = 0.0;
            for (std::size_t k = 0; k < 7; ++k) s += cache.probs[n * 7 + k];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("label out of range throws") {
        Tensor logits = Tensor::zeros({1, 3});
        CHECK_THROWS_AS(softmax_cross_entropy(logits, {3}), ValueError);
        CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1}), ValueError);
    }
    SUBCASE("empty batch throws") {
        CHECK_THROWS_AS(softmax_cross_entropy(Tensor::zeros({0, 3}), {}), ValueError);
    }
}

TEST_CASE("softmax cross-entropy backward matches finite differences") {
    RngStream rng(29, 0);
    for (int c = 0; c < kPropertyCases; ++c) {
        const std::size_t N = 1 + rng.next_below(4), K = 2 + rng.next_below(5);
        Tensor logits = random_tensor({N, K}, rng, 2.0);
        std::vector<int> labels(N);
        for (auto& y : labels) y = static_cast<int>(rng.next_below(K));

        SoftmaxXentCache cache;
        softmax_cross_entropy(logits, labels, &cache);
        Tensor g = softmax_cross_entropy_backward(cache);
        Tensor fd = finite_difference_grad(
            [&](const Tensor& t) { return softmax_cross_entropy(t, labels); }, logits, kFdStep);
        CHECK(max_rel_error(g, fd) < kFdTol);
        CHECK(all_finite(g));
    }
}

TEST_CASE("adam single steps") {
    SUBCASE("zero gradients leave parameters unchanged") {
        Tensor p = Tensor::full({3}, 1.5);
        Tensor g = Tensor::zeros({3});
        AdamState s = AdamState::init({&p});
        adam_step({&p}, {&g}, s, 0.01);
        for (double v : p.data) CHECK(v == doctest::Approx(1.5).epsilon(1e-15));
    }
    SUBCASE("first step with g=1 moves by about -lr") {
        Tensor p = Tensor::scalar(0.0);
        Tensor g = Tensor::scalar(1.0);
        AdamState s = AdamState::init({&p});
        adam_step({&p}, {&g}, s, 0.1);
        // bias-corrected first step: -lr * 1 / (1 + eps)
        CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
    }
    SUBCASE("two steps reproduce the hand-run recurrences") {
        const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
        Tensor p = Tensor::scalar(0.0);
        AdamState s = AdamState::init({&p});

        double m = 0.0, v = 0.0, ref = 0.0;
        const double g1 = 1.0, g2 = -0.5;
        for (int t = 1; t <= 2; ++t) {
            const double g = t == 1 ? g1 : g2;
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g * g;
            const double mhat = m / (1 - std::pow(b1, t));
            const double vhat = v / (1 - std::pow(b2, t));
            ref -= lr * mhat / (std::sqrt(vhat) + eps);
        }

        Tensor grad = Tensor::scalar(g1);
        adam_step({&p}, {&grad}, s, lr);
        grad[0] = g2;
        adam_step({&p}, {&grad}, s, lr);
        CHECK(p[0] == doctest::Approx(ref).epsilon(1e-14));
        CHECK(s.t == 2);
    }
    SUBCASE("shape mismatch throws") {
        Tensor p = Tensor::zeros({2});
        Tensor g = Tensor::zeros({3});
        AdamState s = AdamState::init({&p});
        CHECK_THROWS_AS(adam_step({&p}, {&g}, s, 0.1), ShapeError);
    }
}

TEST_CASE("rng determinism and stream independence") {
    RngStream a(42, 7), b(42, 7), c(42, 8);
    bool identical = true, differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto va = a.next_u64();
        identical = identical && (va == b.next_u64());
        differs = differs || (va != c.next_u64());
    }
    CHECK(identical);
    CHECK(differs);
}

TEST_CASE("no NaN/Inf from finite inputs across ops") {
    RngStream rng(31, 0);
    for (int c = 0; c < 20; ++c) {
        Tensor x = random_tensor({2, 3, 4, 4}, rng, 10.0);
        Tensor k = random_tensor({4, 3, 3, 3}, rng, 10.0);
        CHECK(all_finite(conv2d(x, k, Tensor::zeros({4}), 1, 1)));
        CHECK(all_finite(maxpool2(x)));
        CHECK(all_finite(global_avg_pool(x)));
        CHECK(all_finite(relu(x)));
    }
}
