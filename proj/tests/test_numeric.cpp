#include <doctest.h>

#include <cmath>

#include "fdt2/errors.hpp"
#include "fdt2/finite_diff.hpp"
#include "fdt2/ops.hpp"
#include "fdt2/rng.hpp"
#include "fdt2/tensor.hpp"
#include "oracles.hpp"

using namespace fdt2;

TEST_CASE("tensor shape invariants") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<Real>(5)), DimensionError);
    Tensor r3({2, 2, 2});
    CHECK_THROWS_AS((void)r3.rows(), DimensionError);
    CHECK(Tensor::matrix(0, 4).empty());
    CHECK(t.all_finite());
    t[0] = std::nan("");
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("content hash tracks shape and bits") {
    const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
    const Tensor b({4, 1}, std::vector<Real>{1, 2, 3, 4});
    CHECK(content_hash(a) == content_hash(Tensor::from_rows({{1, 2}, {3, 4}})));
    CHECK(content_hash(a) != content_hash(b));
}

TEST_CASE("matmul identity and hand example") {
    const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
    CHECK(matmul(Tensor::identity(2), a) == a);
    const Tensor out = matmul(a, Tensor::from_rows({{0}, {1}}));
    CHECK(out == Tensor::from_rows({{2}, {4}}));
    CHECK_THROWS_AS(matmul(a, Tensor::matrix(3, 1)), DimensionError);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = rng.normal_tensor(5, 7), b = rng.normal_tensor(7, 3);
        CHECK(max_abs_diff(matmul(a, b), oracle::matmul(a, b)) < 1e-12);
        CHECK(max_abs_diff(matmul_nt(a, transpose(b)), oracle::matmul(a, b)) < 1e-12);
        CHECK(max_abs_diff(matmul_tn(transpose(a), b), oracle::matmul(a, b)) < 1e-12);
    }
}

TEST_CASE("matmul associativity") {
    Rng rng(12);
    const Tensor a = rng.normal_tensor(4, 5), b = rng.normal_tensor(5, 6), c = rng.normal_tensor(6, 3);
    const Tensor l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i) {
        CHECK(std::abs(l[i] - r[i]) <= 1e-5 * std::max(1.0, std::abs(l[i])));
    }
}

TEST_CASE("softmax closed forms") {
    const Tensor eq = softmax_rows(Tensor::matrix(1, 5, 3.0));
    for (Real v : eq.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
    const Tensor s = softmax_rows(Tensor::from_rows({{0.0, std::log(3.0)}}));
    CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax matches extended-precision oracle and is shift invariant") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = rng.normal_tensor(4, 6, 5.0);
        const Tensor s = softmax_rows(x);
        for (std::size_t r = 0; r < 4; ++r) {
            std::vector<oracle::LD> logits(x.row(r).begin(), x.row(r).end());
            const auto w = oracle::softmax(logits);
            Real sum = 0;
            for (std::size_t c = 0; c < 6; ++c) {
                CHECK(std::abs(s(r, c) - static_cast<Real>(w[c])) < 1e-7);
                CHECK(s(r, c) >= 0.0);
                sum += s(r, c);
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
            for (auto& v : x.row(r)) v += 100.0 * static_cast<Real>(r + 1);
        }
        CHECK(max_abs_diff(softmax_rows(x), s) < 1e-6);
    }
}

TEST_CASE("softmax survives large logits") {
    const Tensor s = softmax_rows(Tensor::from_rows({{1000.0, 0.0, -1000.0}}));
    CHECK(s.all_finite());
    CHECK(s[0] == doctest::Approx(1.0));
}

TEST_CASE("mlp closed forms") {
    const Tensor x = Tensor::from_rows({{2.0}});
    const Tensor z = Tensor::matrix(1, 1);
    CHECK(mlp_forward(x, z, z, z, z) == Tensor::matrix(1, 1));
    const Tensor one = Tensor::from_rows({{1.0}}), w2 = Tensor::from_rows({{3.0}});
    const Real expected =
        3.0 * 0.5 * 2.0 * (1.0 + std::tanh(kGeluSqrt2OverPi * (2.0 + kGeluCubic * 8.0)));
    CHECK(mlp_forward(x, one, z, w2, z)[0] == doctest::Approx(expected).epsilon(1e-14));
    CHECK_THROWS_AS(mlp_forward(Tensor::matrix(1, 2), one, z, w2, z), DimensionError);
}

TEST_CASE("mlp gradients match central differences") {
    Rng rng(14);
    MlpWeights w{rng.normal_tensor(3, 5), rng.normal_tensor(1, 5), rng.normal_tensor(5, 2),
                 rng.normal_tensor(1, 2)};
    const Tensor x = rng.normal_tensor(4, 3);
    const Tensor target = rng.normal_tensor(4, 2);
    auto loss_of = [&](const MlpWeights& ww, const Tensor& xx) {
        const Tensor y = mlp_forward(xx, ww);
        Real s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * (y[i] - target[i]) * (y[i] - target[i]);
        return s;
    };
    MlpTape tape;
    const Tensor y = mlp_forward(x, w, &tape);
    Tensor dy = y;
    for (std::size_t i = 0; i < dy.size(); ++i) dy[i] -= target[i];
    MlpWeights g{zeros_like(w.w1), zeros_like(w.b1), zeros_like(w.w2), zeros_like(w.b2)};
    const Tensor dx = mlp_backward(dy, w, tape, g);

    auto rel = [](Real a, Real b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); };
    auto check_param = [&](Tensor MlpWeights::*field, const Tensor& analytic) {
        const Tensor fd = finite_diff_grad(
            [&](const Tensor& p) {
                MlpWeights ww = w;
                ww.*field = p;
                return loss_of(ww, x);
            },
            w.*field, 1e-4);
        for (std::size_t i = 0; i < fd.size(); ++i) CHECK(rel(analytic[i], fd[i]) < 1e-3);
    };
    check_param(&MlpWeights::w1, g.w1);
    check_param(&MlpWeights::b1, g.b1);
    check_param(&MlpWeights::w2, g.w2);
    check_param(&MlpWeights::b2, g.b2);
    const Tensor fdx = finite_diff_grad([&](const Tensor& xx) { return loss_of(w, xx); }, x, 1e-4);
    for (std::size_t i = 0; i < fdx.size(); ++i) CHECK(rel(dx[i], fdx[i]) < 1e-3);
}

TEST_CASE("layer norm gradients match central differences") {
    Rng rng(15);
    const Tensor x = rng.normal_tensor(3, 6), gain = rng.normal_tensor(1, 6), bias = rng.normal_tensor(1, 6);
    const Tensor probe = rng.normal_tensor(3, 6);
    auto loss = [&](const Tensor& xx) {
        const Tensor y = layer_norm(xx, gain, bias);
        Real s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += probe[i] * y[i];
        return s;
    };
    LayerNormTape tape;
    layer_norm(x, gain, bias, &tape);
    Tensor dg = zeros_like(gain), db = zeros_like(bias);
    const Tensor dx = layer_norm_backward(probe, gain, tape, dg, db);
    const Tensor fd = finite_diff_grad(loss, x, 1e-4);
    CHECK(max_abs_diff(dx, fd) < 1e-6);
}

TEST_CASE("finite_diff_grad closed forms") {
    const Tensor x = Tensor::from_rows({{3.0, 4.0}});
    const Tensor g_sum = finite_diff_grad(
        [](const Tensor& t) {
            Real s = 0;
            for (Real v : t.values()) s += v;
            return s;
        },
        x, 1e-4);
    CHECK(max_abs_diff(g_sum, Tensor::matrix(1, 2, 1.0)) < 1e-9);
    const Tensor g_sq = finite_diff_grad(
        [](const Tensor& t) { return 0.5 * (t[0] * t[0] + t[1] * t[1]); }, x, 1e-4);
    CHECK(max_abs_diff(g_sq, x) < 1e-5);
    CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return 0.0; }, x, 0.0), std::invalid_argument);
}

TEST_CASE("finite_diff_grad matches backprop through a 3-layer net") {
    Rng rng(16);
    const Tensor x = rng.normal_tensor(2, 4);
    Tensor w1 = rng.normal_tensor(4, 5), w2 = rng.normal_tensor(5, 5), w3 = rng.normal_tensor(5, 1);
    auto forward = [&](const Tensor& a, Tensor* h1, Tensor* h2) {
        Tensor p1 = matmul(x, a);
        Tensor g1 = p1;
        for (auto& v : g1.values()) v = std::tanh(v);
        Tensor p2 = matmul(g1, w2);
        Tensor g2 = p2;
        for (auto& v : g2.values()) v = std::tanh(v);
        if (h1) *h1 = g1;
        if (h2) *h2 = g2;
        const Tensor y = matmul(g2, w3);
        Real s = 0;
        for (Real v : y.values()) s += v;
        return s;
    };
    Tensor h1, h2;
    forward(w1, &h1, &h2);
    // Manual backprop to w1.
    Tensor dy = Tensor::matrix(2, 1, 1.0);
    Tensor dg2 = matmul_nt(dy, w3);
    for (std::size_t i = 0; i < dg2.size(); ++i) dg2[i] *= 1.0 - h2[i] * h2[i];
    Tensor dg1 = matmul_nt(dg2, w2);
    for (std::size_t i = 0; i < dg1.size(); ++i) dg1[i] *= 1.0 - h1[i] * h1[i];
    const Tensor analytic = matmul_tn(x, dg1);
    const Tensor fd = finite_diff_grad([&](const Tensor& a) { return forward(a, nullptr, nullptr); }, w1, 1e-4);
    for (std::size_t i = 0; i < fd.size(); ++i) {
        CHECK(std::abs(fd[i] - analytic[i]) / std::max({std::abs(fd[i]), std::abs(analytic[i]), 1e-8}) < 1e-3);
    }
}

TEST_CASE("rng is deterministic and well-formed") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(Rng(42).next_u64() != c.next_u64());
    // SplitMix64 reference value for seed 0.
    CHECK(Rng(0).next_u64() == 0xe220a8397b1dcdafULL);
    Rng r(7);
    Real mean = 0;
    for (int i = 0; i < 20000; ++i) {
        const Real u = r.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        mean += u;
    }
    CHECK(mean / 20000 == doctest::Approx(0.5).epsilon(0.02));
    for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
}

TEST_CASE("cosine edge cases") {
    const std::vector<Real> z{0, 0}, a{1, 0}, b{-2, 0};
    CHECK(cosine(z, z) == 1.0);
    CHECK(cosine(z, a) == 0.0);
    CHECK(cosine(a, b) == doctest::Approx(-1.0));
}

TEST_CASE("kernels are bitwise deterministic") {
    Rng rng(17);
    const Tensor a = rng.normal_tensor(6, 6), b = rng.normal_tensor(6, 6);
    CHECK(content_hash(matmul(a, b)) == content_hash(matmul(a, b)));
    CHECK(content_hash(softmax_rows(a)) == content_hash(softmax_rows(a)));
}
