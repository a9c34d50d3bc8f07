#include "fdt2/cost_model.hpp"

#include <stdexcept>

#include "fdt2/errors.hpp"
#include "fdt2/selection.hpp"

namespace fdt2 {

void CostSpec::validate() const {
    if (T < 1) throw ConfigError("cost: T must be >= 1");
    if (L < 1) throw ConfigError("cost: L must be >= 1");
    if (L_s < 1 || L_s > L) throw ConfigError("cost: L_s must lie in [1, L]");
    if (N_x < 1) throw ConfigError("cost: N_x must be >= 1");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("cost: ratio must lie in (0, 1]");
}

std::uint64_t analytic_interactions(const CostSpec& spec) {
    spec.validate();
    const ModeFeatures f = features(spec.config);
    const std::uint64_t nx = spec.N_x;
    if (!f.conditioned || spec.N_c == 0) return spec.T * spec.L * nx * nx;

    const std::uint64_t k = f.selection ? selected_count(spec.N_c, spec.ratio) : spec.N_c;
    const std::uint64_t active = f.layer_cache ? spec.L_s : spec.L;
    const std::uint64_t skipped = spec.L - active;
    const bool decoupled = f.natural_style == AttentionStyle::decoupled;

    const std::uint64_t first = decoupled ? nx * (nx + k) + k * k : (nx + k) * (nx + k);
    const std::uint64_t later = f.step_cache ? nx * (nx + k) : first;
    return spec.T * skipped * nx * nx + active * (first + (spec.T - 1) * later);
}

namespace {

std::string general_formula(Mode m) {
    switch (m) {
        case Mode::no_condition: return "T*L*Nx^2";
        case Mode::baseline_icc: return "T*L*(Nx+Nc)^2";
        case Mode::dts_only: return "T*L*(Nx+k)^2";
        case Mode::step_cache_only: return "L*(Nx*(Nx+Nc)+Nc^2) + (T-1)*L*Nx*(Nx+Nc)";
        case Mode::layer_cache_only: return "T*(Ls*(Nx+Nc)^2 + (L-Ls)*Nx^2)";
        case Mode::fulldit2:
            return "Ls*(Nx*(Nx+k)+k^2) + (T-1)*Ls*Nx*(Nx+k) + T*(L-Ls)*Nx^2";
        case Mode::fulldit2_no_dts:
            return "Ls*(Nx*(Nx+Nc)+Nc^2) + (T-1)*Ls*Nx*(Nx+Nc) + T*(L-Ls)*Nx^2";
        case Mode::fulldit2_no_step_cache: return "T*(Ls*(Nx*(Nx+k)+k^2) + (L-Ls)*Nx^2)";
        case Mode::fulldit2_no_layer_cache: return "L*(Nx*(Nx+k)+k^2) + (T-1)*L*Nx*(Nx+k)";
    }
    return "";
}

std::string reduced_formula(Mode m) {
    switch (m) {
        case Mode::no_condition: return "TL";
        case Mode::baseline_icc: return "9TL";
        case Mode::dts_only: return "4TL";
        case Mode::step_cache_only: return "(3T+4)L";
        case Mode::layer_cache_only: return "T(L+8Ls)";
        case Mode::fulldit2: return "TL+(T+1)Ls";
        case Mode::fulldit2_no_dts: return "TL+(2T+4)Ls";
        case Mode::fulldit2_no_step_cache: return "T(L+2Ls)";
        case Mode::fulldit2_no_layer_cache: return "(2T+1)L";
    }
    return "";
}

}  // namespace

CostReport analytic_cost(const CostSpec& spec) {
    CostSpec base = spec;
    base.config = Mode::baseline_icc;
    CostReport r;
    r.config = spec.config;
    r.interactions = analytic_interactions(spec);
    r.baseline_interactions = analytic_interactions(base);
    r.speedup = static_cast<Real>(r.baseline_interactions) / static_cast<Real>(r.interactions);
    r.formula = general_formula(spec.config);
    r.reduced_formula = reduced_formula(spec.config);
    return r;
}

std::vector<CostReport> cost_table(const CostSpec& base, std::span<const Mode> configs) {
    std::vector<CostReport> rows;
    rows.reserve(configs.size());
    for (Mode m : configs) {
        CostSpec s = base;
        s.config = m;
        rows.push_back(analytic_cost(s));
    }
    return rows;
}

Real reduced_speedup(Mode config, std::uint64_t T, std::uint64_t L, std::uint64_t L_s) {
    const Real t = static_cast<Real>(T), l = static_cast<Real>(L), ls = static_cast<Real>(L_s);
    Real cost = 0.0;
    switch (config) {
        case Mode::no_condition: cost = t * l; break;
        case Mode::baseline_icc: cost = 9.0 * t * l; break;
        case Mode::dts_only: cost = 4.0 * t * l; break;
        case Mode::step_cache_only: cost = (3.0 * t + 4.0) * l; break;
        case Mode::layer_cache_only: cost = t * (l + 8.0 * ls); break;
        case Mode::fulldit2: cost = t * l + (t + 1.0) * ls; break;
        case Mode::fulldit2_no_dts: cost = t * l + (2.0 * t + 4.0) * ls; break;
        case Mode::fulldit2_no_step_cache: cost = t * (l + 2.0 * ls); break;
        case Mode::fulldit2_no_layer_cache: cost = (2.0 * t + 1.0) * l; break;
    }
    return 9.0 * t * l / cost;
}

std::vector<ScalingRow> scaling_curve(const CostSpec& base, std::span<const Mode> configs,
                                      std::uint64_t nx_begin, std::uint64_t nx_end,
                                      std::uint64_t nx_step, Real context_per_noisy) {
    if (nx_step == 0 || nx_begin == 0 || nx_end < nx_begin) {
        throw ConfigError("scaling_curve: need 1 <= begin <= end and step >= 1");
    }
    if (configs.empty()) throw ConfigError("scaling_curve: no configurations");
    std::vector<ScalingRow> rows;
    for (std::uint64_t nx = nx_begin; nx <= nx_end; nx += nx_step) {
        ScalingRow row;
        row.N_x = nx;
        row.N_c = static_cast<std::uint64_t>(context_per_noisy * static_cast<Real>(nx) + 1e-9);
        for (Mode m : configs) {
            CostSpec s = base;
            s.N_x = nx;
            s.N_c = row.N_c;
            s.config = m;
            row.interactions.push_back(analytic_interactions(s));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

CostSpec cost_spec_for(const ModelConfig& cfg, int steps) {
    CostSpec s;
    s.T = static_cast<std::uint64_t>(steps);
    s.L = cfg.layers;
    s.L_s = cfg.layer_plan.active_count();
    s.N_x = cfg.n_z;
    s.N_c = cfg.n_c();
    s.ratio = cfg.ratio;
    s.config = cfg.mode;
    return s;
}

MeasuredCost measured_cost(const Model& model, const Tensor& context, int steps,
                           std::uint64_t seed) {
    InteractionCounter counter;
    Rng rng(seed);
    SampleOptions opts;
    opts.counter = &counter;
    sample(model, context, steps, rng, opts);
    return {counter.logits, counter.projection_macs};
}

}  // namespace fdt2
