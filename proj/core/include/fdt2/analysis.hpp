#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fdt2/model.hpp"

namespace fdt2 {

// frames: F x tokens_per_frame x d. Returns F - 1 values: the L1 norm of the
// difference between the mean token of frame f + 1 and of frame f.
std::vector<Real> frame_diff(const Tensor& frames);

// Sorted cumulative attention mass: point i is (i / n, mass of the i most
// attended tokens).
struct ConcentrationCurve {
    std::vector<std::pair<Real, Real>> points;

    // Cumulative mass held by the smallest prefix covering at least `fraction` of the tokens.
    Real mass_at(Real fraction) const;
};

// Normalizes per-token mass to sum 1, sorts descending and accumulates.
ConcentrationCurve concentration_from_mass(std::span<const Real> mass);

// Per-context-token attention mass from noisy queries, averaged over noisy
// rows, heads, inputs and the given layers, normalized to sum 1. Runs with all
// layers attending over the full context.
std::vector<Real> context_attention_mass(const Model& model, std::span<const DiffusionState> inputs,
                                         std::span<const std::size_t> layers);

ConcentrationCurve attention_concentration(const Model& model,
                                           std::span<const DiffusionState> inputs,
                                           std::span<const std::size_t> layers);

struct StepwiseSimilarity {
    std::vector<Real> context;  // per step: mean row cosine of context rows vs step 0
    std::vector<Real> noisy;    // per step: same for noisy rows
};

// Runs an uncached sampling trajectory and compares the hidden state leaving
// `layer` at every step with step 0.
StepwiseSimilarity stepwise_similarity(const Model& model, const Tensor& context, int steps,
                                       std::size_t layer, std::uint64_t seed);

// Pairwise Jensen-Shannon divergence (natural log) between the per-layer
// normalized context-mass distributions; L x L, symmetric, zero diagonal.
// This is an interpretation of a layer-wise divergence heatmap, not a
// reproduction of a defined metric.
Tensor layer_divergence(const Model& model, std::span<const DiffusionState> inputs);

Real js_divergence(std::span<const Real> p, std::span<const Real> q);

}  // namespace fdt2
