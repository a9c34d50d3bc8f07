#include <doctest.h>

#include <cmath>

#include "fdt2/analysis.hpp"
#include "fdt2/block_importance.hpp"
#include "fdt2/flow.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fdt2;

namespace {

std::vector<Real> frame_diff_oracle(const Tensor& f) {
    const std::size_t F = f.shape()[0], P = f.shape()[1], d = f.shape()[2];
    std::vector<Real> out;
    for (std::size_t i = 0; i + 1 < F; ++i) {
        oracle::LD total = 0;
        for (std::size_t c = 0; c < d; ++c) {
            oracle::LD a = 0, b = 0;
            for (std::size_t p = 0; p < P; ++p) {
                a += f[(i * P + p) * d + c];
                b += f[((i + 1) * P + p) * d + c];
            }
            total += std::abs(b / P - a / P);
        }
        out.push_back(static_cast<Real>(total));
    }
    return out;
}

Tensor random_frames(Rng& rng, std::size_t F, std::size_t P, std::size_t d) {
    std::vector<Real> data(F * P * d);
    for (auto& v : data) v = rng.normal();
    return Tensor({F, P, d}, std::move(data));
}

}  // namespace

TEST_CASE("frame_diff closed forms") {
    Rng rng(1);
    Tensor same = random_frames(rng, 1, 3, 4);
    std::vector<Real> rep;
    for (int f = 0; f < 4; ++f) rep.insert(rep.end(), same.values().begin(), same.values().end());
    for (Real v : frame_diff(Tensor({4, 3, 4}, rep))) CHECK(v == 0.0);

    const std::vector<Real> shift{0.5, -2.0, 1.0};
    Tensor two = random_frames(rng, 2, 3, 3);
    for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t c = 0; c < 3; ++c) two[(3 + p) * 3 + c] = two[p * 3 + c] + shift[c];
    const auto d = frame_diff(two);
    REQUIRE(d.size() == 1);
    CHECK(d[0] == doctest::Approx(3.5));
    CHECK_THROWS(frame_diff(random_frames(rng, 1, 2, 2)));
    CHECK_THROWS(frame_diff(Tensor::matrix(3, 3)));
}

TEST_CASE("frame_diff matches the loop oracle and is translation invariant") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t F = 2 + rng.below(6), P = 1 + rng.below(5), d = 1 + rng.below(6);
        Tensor f = random_frames(rng, F, P, d);
        const auto got = frame_diff(f);
        const auto want = frame_diff_oracle(f);
        REQUIRE(got.size() == F - 1);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
        const Tensor offset = rng.normal_tensor(1, d);
        for (std::size_t i = 0; i < f.size(); ++i) f[i] += offset[i % d];
        const auto moved = frame_diff(f);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(moved[i] - got[i]) < 1e-9);
    }
}

TEST_CASE("concentration curve closed forms") {
    const std::vector<Real> uniform(8, 1.0);
    const auto u = concentration_from_mass(uniform);
    CHECK(u.points.size() == 8);
    CHECK(u.mass_at(0.5) == doctest::Approx(0.5));
    for (const auto& [x, y] : u.points) CHECK(y == doctest::Approx(x));

    std::vector<Real> hot(5, 0.0);
    hot[3] = 2.0;
    const auto h = concentration_from_mass(hot);
    CHECK(h.points.front().first == doctest::Approx(0.2));
    CHECK(h.points.front().second == doctest::Approx(1.0));
    CHECK(h.points.back().second == doctest::Approx(1.0));
}

TEST_CASE("concentration curve increments are nonincreasing") {
    Rng rng(3);
    std::vector<Real> mass(20);
    for (auto& m : mass) m = rng.uniform();
    const auto c = concentration_from_mass(mass);
    Real prev_y = 0.0, prev_inc = 1.0;
    for (const auto& [x, y] : c.points) {
        CHECK(y >= prev_y);
        CHECK(y - prev_y <= prev_inc + 1e-15);
        prev_inc = y - prev_y;
        prev_y = y;
    }
    CHECK(std::abs(prev_y - 1.0) < 1e-6);
}

TEST_CASE("attention mass matches recomputation from dumped operands") {
    const ModelConfig cfg = support::small_config(Mode::fulldit2);
    const Model model = Model::create(cfg, 4);
    Rng rng(5);
    std::vector<DiffusionState> inputs;
    for (int i = 0; i < 3; ++i) inputs.push_back(support::random_state(cfg, rng, 0.5));
    const std::vector<std::size_t> layers{0, 1, 2};
    const auto mass = context_attention_mass(model, inputs, layers);

    const Model probe{probe_config(cfg), model.params};
    std::vector<oracle::LD> acc(cfg.n_c(), 0.0L);
    for (const auto& s : inputs) {
        ForwardTrace trace;
        velocity(probe, s, ForwardOptions{nullptr, 0, nullptr, &trace});
        for (std::size_t l : layers) {
            const auto& t = trace.layers[l];
            std::vector<Tensor> weights;
            oracle::multihead(t.q_z, oracle::stack(t.k_z, t.k_c), oracle::stack(t.v_z, t.v_c), cfg.heads,
                              &weights);
            for (const auto& w : weights)
                for (std::size_t r = 0; r < w.rows(); ++r)
                    for (std::size_t j = 0; j < cfg.n_c(); ++j) acc[j] += w(r, cfg.n_z + j);
        }
    }
    oracle::LD total = 0;
    for (auto v : acc) total += v;
    REQUIRE(mass.size() == cfg.n_c());
    for (std::size_t j = 0; j < cfg.n_c(); ++j) {
        CHECK(std::abs(mass[j] - static_cast<Real>(acc[j] / total)) < 1e-9);
    }
    const auto curve = attention_concentration(model, inputs, layers);
    CHECK(curve.points.size() == cfg.n_c());
    CHECK(std::abs(curve.points.back().second - 1.0) < 1e-6);
}

TEST_CASE("stepwise similarity") {
    // Context rows blind to noisy rows and to t: their features cannot change.
    ModelConfig cfg = support::small_config(Mode::baseline_icc);
    cfg.attention_style = AttentionStyle::decoupled;
    const Model model = Model::create(cfg, 6);
    Rng rng(7);
    const Tensor ctx = rng.normal_tensor(cfg.n_c(), cfg.latent_width);
    const auto sim = stepwise_similarity(model, ctx, 5, 1, 8);
    REQUIRE(sim.noisy.size() == 5);
    REQUIRE(sim.context.size() == 5);
    CHECK(sim.noisy[0] == doctest::Approx(1.0));
    for (Real c : sim.context) CHECK(c == doctest::Approx(1.0).epsilon(1e-12));

    // Offline recomputation from saved hidden states.
    std::vector<Tensor> states;
    SampleOptions opts;
    opts.use_cache = false;
    opts.on_step = [&](int, Real, const ForwardTrace& t) { states.push_back(t.layers[1].hidden_out); };
    Rng noise(8);
    sample(model, ctx, 5, noise, opts);
    for (std::size_t s = 0; s < states.size(); ++s) {
        oracle::LD total = 0;
        for (std::size_t r = 0; r < cfg.n_z; ++r) total += oracle::cosine(states[0], r, states[s], r);
        CHECK(std::abs(sim.noisy[s] - static_cast<Real>(total / cfg.n_z)) < 1e-9);
    }
}

TEST_CASE("layer divergence is a symmetric zero-diagonal JS matrix") {
    const ModelConfig cfg = support::small_config(Mode::fulldit2);
    const Model model = Model::create(cfg, 9);
    Rng rng(10);
    std::vector<DiffusionState> inputs;
    for (int i = 0; i < 2; ++i) inputs.push_back(support::random_state(cfg, rng, 0.5));
    const Tensor js = layer_divergence(model, inputs);
    REQUIRE(js.rows() == cfg.layers);
    for (std::size_t a = 0; a < cfg.layers; ++a) {
        CHECK(js(a, a) == 0.0);
        for (std::size_t b = 0; b < cfg.layers; ++b) {
            CHECK(js(a, b) == js(b, a));
            CHECK(js(a, b) >= 0.0);
            CHECK(js(a, b) <= std::log(2.0) + 1e-12);
        }
    }
    const std::vector<Real> p{1.0, 0.0}, q{0.0, 1.0};
    CHECK(js_divergence(p, q) == doctest::Approx(std::log(2.0)));
    CHECK(js_divergence(p, p) == 0.0);
}
