#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fdt2/flow.hpp"
#include "fdt2/model.hpp"
#include "fdt2/modes.hpp"

namespace fdt2 {

// Symbolic attention-cost configuration. Costs are counted in query-key
// logits (token-pair interactions).
struct CostSpec {
    std::uint64_t T = 30;    // sampling steps
    std::uint64_t L = 28;    // layers
    std::uint64_t L_s = 5;   // layers processing context when layer caching is on
    std::uint64_t N_x = 1;   // noisy tokens
    std::uint64_t N_c = 2;   // context tokens
    Real ratio = 0.5;        // selection ratio
    Mode config = Mode::fulldit2;

    void validate() const;
};

struct CostReport {
    Mode config = Mode::fulldit2;
    std::uint64_t interactions = 0;
    std::uint64_t baseline_interactions = 0;
    Real speedup = 1.0;             // baseline_icc / this
    std::string formula;            // general form that was evaluated
    std::string reduced_formula;    // the N_c = 2 N_x, ratio = 1/2 closed form, in N_x^2 units
};

// Logits in one sampling run of the given configuration. With
// k = max(1, floor(ratio N_c)) when selection is on (else N_c), L_a active
// layers (L_s with layer caching, else L) and a per-active-layer cost of
//   full attention          (N_x + k)^2
//   decoupled, computing    N_x (N_x + k) + k^2
//   decoupled, cached       N_x (N_x + k)
// the total is T (L - L_a) N_x^2 + L_a (first + (T - 1) later), where
// `later` is the cached cost when step caching is on.
std::uint64_t analytic_interactions(const CostSpec& spec);

CostReport analytic_cost(const CostSpec& spec);

// Rows for every config in `configs`, all sharing the other fields of `base`.
std::vector<CostReport> cost_table(const CostSpec& base, std::span<const Mode> configs);

// Closed-form speedup (baseline / config) when N_c = 2 N_x and half the
// context is kept; depends only on T, L and L_s.
Real reduced_speedup(Mode config, std::uint64_t T, std::uint64_t L, std::uint64_t L_s);

struct ScalingRow {
    std::uint64_t N_x = 0;
    std::uint64_t N_c = 0;
    std::vector<std::uint64_t> interactions;  // aligned with the configs argument
};

// analytic_interactions over N_x = begin, begin + step, ..., <= end with
// N_c = floor(context_per_noisy * N_x).
std::vector<ScalingRow> scaling_curve(const CostSpec& base, std::span<const Mode> configs,
                                      std::uint64_t nx_begin, std::uint64_t nx_end,
                                      std::uint64_t nx_step, Real context_per_noisy);

// The CostSpec matching a model configuration run for `steps` steps.
CostSpec cost_spec_for(const ModelConfig& cfg, int steps);

struct MeasuredCost {
    std::uint64_t logits = 0;
    std::uint64_t projection_macs = 0;
};

// Instrumented sampling run: counts the logits every attention call actually
// computes. Context and noise are drawn from `seed`.
MeasuredCost measured_cost(const Model& model, const Tensor& context, int steps,
                           std::uint64_t seed);

}  // namespace fdt2
