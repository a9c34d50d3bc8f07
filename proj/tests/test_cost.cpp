#include <doctest.h>

#include "fdt2/cost_model.hpp"
#include "fdt2/errors.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fdt2;

namespace {

oracle::CostScenario scenario(const CostSpec& s) {
    const auto f = features(s.config);
    oracle::CostScenario sc{s.T, s.L, s.N_x, s.N_c, std::vector<bool>(s.L, true),
                            f.conditioned, f.selection, f.step_cache,
                            f.natural_style == AttentionStyle::decoupled, s.ratio};
    if (f.layer_cache) {
        for (std::uint64_t l = s.L_s; l < s.L; ++l) sc.layer_active[l] = false;
    }
    return sc;
}

CostSpec reference_spec(Mode m) {
    CostSpec s;
    s.T = 30;
    s.L = 28;
    s.L_s = 5;
    s.N_x = 1;
    s.N_c = 2;
    s.ratio = 0.5;
    s.config = m;
    return s;
}

}  // namespace

TEST_CASE("reference cost table") {
    const struct {
        Mode mode;
        std::uint64_t units;
        double speedup;
    } rows[] = {
        {Mode::no_condition, 840, 9.0},
        {Mode::baseline_icc, 7560, 1.0},
        {Mode::fulldit2, 995, 7560.0 / 995.0},
        {Mode::step_cache_only, 2632, 270.0 / 94.0},
        {Mode::layer_cache_only, 2040, 252.0 / 68.0},
        {Mode::dts_only, 3360, 2.25},
        {Mode::fulldit2_no_dts, 1160, 7560.0 / 1160.0},
        {Mode::fulldit2_no_step_cache, 1140, 252.0 / 38.0},
        {Mode::fulldit2_no_layer_cache, 1708, 270.0 / 61.0},
    };
    for (const auto& r : rows) {
        CAPTURE(to_string(r.mode));
        const auto rep = analytic_cost(reference_spec(r.mode));
        CHECK(rep.interactions == r.units);
        CHECK(rep.baseline_interactions == 7560);
        CHECK(rep.speedup == doctest::Approx(r.speedup).epsilon(1e-12));
        CHECK(reduced_speedup(r.mode, 30, 28, 5) == doctest::Approx(r.speedup).epsilon(1e-12));
        CHECK_FALSE(rep.formula.empty());
    }
}

TEST_CASE("analytic cost equals a literal walk over steps and layers") {
    Rng rng(1);
    for (int trial = 0; trial < 2000; ++trial) {
        CostSpec s;
        s.T = 1 + rng.below(12);
        s.L = 1 + rng.below(10);
        s.L_s = 1 + rng.below(s.L);
        s.N_x = 1 + rng.below(40);
        s.N_c = rng.below(80);
        s.ratio = rng.uniform(0.01, 1.0);
        s.config = kAllModes[rng.below(kAllModes.size())];
        CAPTURE(to_string(s.config));
        CHECK(analytic_interactions(s) == oracle::simulate_logits(scenario(s)));
    }
}

TEST_CASE("single-step single-layer costs by hand") {
    CostSpec s;
    s.T = 1;
    s.L = 1;
    s.L_s = 1;
    s.N_x = 3;
    s.N_c = 4;
    s.ratio = 0.5;
    auto at = [&](Mode m) {
        s.config = m;
        return analytic_interactions(s);
    };
    CHECK(at(Mode::no_condition) == 9);
    CHECK(at(Mode::baseline_icc) == 49);
    CHECK(at(Mode::dts_only) == 25);
    CHECK(at(Mode::layer_cache_only) == 49);
    CHECK(at(Mode::step_cache_only) == 3 * 7 + 16);
    CHECK(at(Mode::fulldit2) == 3 * 5 + 4);
    CHECK(at(Mode::fulldit2_no_dts) == 3 * 7 + 16);
    CHECK(at(Mode::fulldit2_no_step_cache) == 3 * 5 + 4);
    CHECK(at(Mode::fulldit2_no_layer_cache) == 3 * 5 + 4);
}

TEST_CASE("cost spec validation") {
    CostSpec s = reference_spec(Mode::fulldit2);
    s.L_s = 29;
    CHECK_THROWS_AS(analytic_interactions(s), ConfigError);
    s = reference_spec(Mode::fulldit2);
    s.T = 0;
    CHECK_THROWS_AS(analytic_interactions(s), ConfigError);
    s = reference_spec(Mode::fulldit2);
    s.ratio = 1.5;
    CHECK_THROWS_AS(analytic_interactions(s), ConfigError);
}

TEST_CASE("dominance ordering at reference parameters") {
    auto c = [](Mode m) { return analytic_interactions(reference_spec(m)); };
    CHECK(c(Mode::no_condition) < c(Mode::fulldit2));
    CHECK(c(Mode::fulldit2) < c(Mode::fulldit2_no_dts));
    CHECK(c(Mode::fulldit2_no_step_cache) < c(Mode::fulldit2_no_layer_cache));
    CHECK(c(Mode::fulldit2_no_layer_cache) < c(Mode::baseline_icc));
}

TEST_CASE("cost is monotone in every size parameter") {
    Rng rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        CostSpec s;
        s.T = 1 + rng.below(8);
        s.L = 2 + rng.below(8);
        s.L_s = 1 + rng.below(s.L - 1);
        s.N_x = 1 + rng.below(20);
        s.N_c = rng.below(40);
        s.ratio = 0.5;
        s.config = kAllModes[rng.below(kAllModes.size())];
        const auto base = analytic_interactions(s);
        for (int field = 0; field < 5; ++field) {
            CostSpec t = s;
            switch (field) {
                case 0: ++t.T; break;
                case 1: ++t.L; break;
                case 2: ++t.L_s; break;
                case 3: ++t.N_x; break;
                case 4: ++t.N_c; break;
            }
            CHECK(analytic_interactions(t) >= base);
        }
    }
}

TEST_CASE("scaling curve") {
    const std::array<Mode, 3> modes{Mode::baseline_icc, Mode::no_condition, Mode::fulldit2};
    const auto rows = scaling_curve(reference_spec(Mode::fulldit2), modes, 2, 20, 3, 2.0);
    CHECK(rows.size() == 7);
    for (const auto& r : rows) {
        CHECK(r.N_c == 2 * r.N_x);
        CHECK(static_cast<double>(r.interactions[0]) / static_cast<double>(r.interactions[1]) ==
              doctest::Approx(9.0));
        CostSpec spot = reference_spec(Mode::fulldit2);
        spot.N_x = r.N_x;
        spot.N_c = r.N_c;
        CHECK(r.interactions[2] == analytic_interactions(spot));
    }
    const auto pair = scaling_curve(reference_spec(Mode::baseline_icc), modes, 4, 8, 4, 2.0);
    CHECK(pair[1].interactions[0] == 4 * pair[0].interactions[0]);
    CHECK_THROWS(scaling_curve(reference_spec(Mode::fulldit2), modes, 5, 4, 1, 2.0));
}

TEST_CASE("measured interactions equal the closed form on a small model") {
    for (Mode m : kAllModes) {
        CAPTURE(to_string(m));
        const ModelConfig cfg = support::small_config(m);
        const Model model = Model::create(cfg, 3);
        Rng rng(4);
        const Tensor ctx = rng.normal_tensor(cfg.n_c(), cfg.latent_width);
        CostSpec spec = cost_spec_for(cfg, 5);
        // The small plan is {0, 2}; the closed form only depends on its size.
        CHECK(measured_cost(model, ctx, 5, 6).logits == analytic_interactions(spec));
    }
}
