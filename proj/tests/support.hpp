#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fdt2/model.hpp"
#include "fdt2/rng.hpp"
#include "fdt2/synthetic_task.hpp"

namespace support {

using namespace fdt2;

// Tiny model for fast unit tests.
inline ModelConfig small_config(Mode mode = Mode::fulldit2) {
    ModelConfig cfg;
    cfg.layers = 3;
    cfg.width = 8;
    cfg.heads = 2;
    cfg.latent_width = 3;
    cfg.n_z = 5;
    cfg.contexts = {{"ref", 5}, {"traj", 4}};
    cfg.mlp_hidden = 8;
    cfg.scorer_hidden = 4;
    cfg.time_features = 4;
    cfg.layer_plan = LayerPlan(3, {0, 2});
    return cfg.with_mode(mode);
}

// Desk-scale model: L=4, d=32, 2 heads, n_z=16, two contexts of 16.
inline ModelConfig desk_config(Mode mode = Mode::fulldit2) {
    ModelConfig cfg;
    cfg.layers = 4;
    cfg.width = 32;
    cfg.heads = 2;
    cfg.latent_width = 8;
    cfg.n_z = 16;
    cfg.contexts = {{"ref", 16}, {"traj", 16}};
    cfg.layer_plan = LayerPlan::leading(4, 2);
    return cfg.with_mode(mode);
}

inline DiffusionState random_state(const ModelConfig& cfg, Rng& rng, Real t) {
    return {rng.normal_tensor(cfg.n_z, cfg.latent_width), t,
            rng.normal_tensor(cfg.n_c(), cfg.latent_width)};
}

struct GradCheckResult {
    std::size_t checked = 0;
    std::size_t scorer_checked = 0;
    std::size_t nonzero_scorer = 0;
    Real worst_rel = 0.0;
    std::string worst_name;
};

// Relative error with a small absolute floor in the denominator so that
// gradients that are zero up to rounding do not produce 0/0.
inline Real relative_error(Real a, Real b, Real floor = 1e-7) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Compares analytic gradients of the fixed-noise flow-matching loss with
// central differences on `count` sampled parameters. At least
// `scorer_count` of them are importance-scorer weights of layers that
// process context.
inline GradCheckResult gradient_check(Model model, const Tensor& z1, const Tensor& context,
                                      const Tensor& z0, Real t, std::size_t count,
                                      std::size_t scorer_count, Rng& rng, Real eps = 1e-4) {
    const LossAndGrad lg = fm_loss_and_grad(model, z1, context, z0, t);
    auto named = model.params.named();
    const auto grads = lg.grad.named();

    struct Slot {
        std::size_t tensor, index;
    };
    std::vector<std::size_t> scorer_tensors, other_tensors;
    for (std::size_t n = 0; n < named.size(); ++n) {
        const std::string& name = named[n].first;
        const bool is_scorer = name.find(".scorer.") != std::string::npos;
        if (is_scorer) {
            const std::size_t layer = std::stoul(name.substr(std::string("layer").size()));
            if (model.config.processes_context(layer)) scorer_tensors.push_back(n);
        } else {
            other_tensors.push_back(n);
        }
    }
    std::vector<Slot> slots;
    auto pick = [&](const std::vector<std::size_t>& pool) {
        std::size_t total = 0;
        for (auto n : pool) total += named[n].second->size();
        std::size_t r = rng.below(total);
        for (auto n : pool) {
            if (r < named[n].second->size()) return Slot{n, r};
            r -= named[n].second->size();
        }
        return Slot{pool.back(), 0};
    };
    for (std::size_t i = 0; i < scorer_count && !scorer_tensors.empty(); ++i) slots.push_back(pick(scorer_tensors));
    while (slots.size() < count) slots.push_back(pick(other_tensors));

    GradCheckResult out;
    for (const auto& s : slots) {
        Tensor& p = *named[s.tensor].second;
        const Real orig = p[s.index];
        p[s.index] = orig + eps;
        const Real plus = fm_loss_fixed(model, z1, context, z0, t);
        p[s.index] = orig - eps;
        const Real minus = fm_loss_fixed(model, z1, context, z0, t);
        p[s.index] = orig;
        const Real fd = (plus - minus) / (2.0 * eps);
        const Real analytic = (*grads[s.tensor].second)[s.index];
        const Real rel = relative_error(analytic, fd);
        ++out.checked;
        if (named[s.tensor].first.find(".scorer.") != std::string::npos) {
            ++out.scorer_checked;
            if (std::abs(fd) > 1e-9) ++out.nonzero_scorer;
        }
        if (rel > out.worst_rel || out.worst_name.empty()) {
            out.worst_rel = rel;
            out.worst_name = named[s.tensor].first + "[" + std::to_string(s.index) + "]";
        }
    }
    return out;
}

}  // namespace support
