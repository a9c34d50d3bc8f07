#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fdt2/context_cache.hpp"
#include "fdt2/model.hpp"
#include "fdt2/synthetic_task.hpp"

namespace fdt2 {

// Probe timestep used for block importance.
inline constexpr Real kProbeTime = 0.5;

// `count` probe states drawn from the task at t = 0.5 with fresh noise.
std::vector<DiffusionState> make_probes(const SyntheticTask& task, std::size_t count,
                                        std::uint64_t seed, Real t = kProbeTime);

struct BiOptions {
    // Treat every context value row as zero when forming the with-reference output.
    bool zero_context_values = false;
};

// 1 - cosine(O_no_ref, O_with_ref), averaged over noisy rows, for one set of
// attention operands. Outputs are multi-head attention results before the
// output projection.
Real block_importance_from_qkv(const Tensor& q_z, const Tensor& k_z, const Tensor& v_z,
                               const Tensor& k_c, const Tensor& v_c, std::size_t heads);

// Block importance of one layer over a probe batch. Probes run with every
// layer processing the full context (no selection, no layer skipping) so that
// each layer sees reference features.
Real block_importance(const Model& model, std::span<const DiffusionState> probes,
                      std::size_t layer, const BiOptions& opts = {});

BIReport bi_report(const Model& model, std::span<const DiffusionState> probes,
                   const BiOptions& opts = {});

// The model configuration used to run BI probes.
ModelConfig probe_config(const ModelConfig& cfg);

}  // namespace fdt2
