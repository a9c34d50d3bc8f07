#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "fdt2/model.hpp"
#include "fdt2/rng.hpp"
#include "fdt2/synthetic_task.hpp"

namespace fdt2 {

// Rectified-flow objective: z0 ~ N(0, I), t ~ U(0, 1),
// z_t = (1 - t) z0 + t z1, target velocity z1 - z0; mean squared error.
Real fm_loss(const Model& model, const Tensor& z1, const Tensor& context, Rng& rng);

struct SampleOptions {
    InteractionCounter* counter = nullptr;
    // Step-cache modes reuse reference K/V after step 0 unless this is off.
    bool use_cache = true;
    // Called after every step with the trace of that step's forward pass.
    std::function<void(int step, Real t, const ForwardTrace&)> on_step;
    // When set, receives the wall time of each step in seconds.
    std::vector<double>* step_seconds = nullptr;
};

// Euler integration of the learned velocity from t = 0 to t = 1 in `steps` steps.
Tensor sample(const Model& model, const Tensor& context, int steps, Rng& rng,
              const SampleOptions& opts = {});
// Same, starting from a given z0.
Tensor sample_from(const Model& model, const Tensor& context, const Tensor& z0, int steps,
                   const SampleOptions& opts = {});

struct TrainOptions {
    std::size_t iters = 500;
    Real lr = 0.5;
    std::size_t batch = 4;
    // Zeroes every context row before it reaches the model (ablation).
    bool zero_context = false;
};

// Plain gradient descent on fm_loss over freshly drawn task batches.
// Returns the mean batch loss of each iteration, measured before its update.
std::vector<Real> train_toy(Model& model, const SyntheticTask& task, const TrainOptions& opts,
                            Rng& rng);

// Mean fm_loss over a fixed batch (drawn from `seed`), optionally with the
// context zeroed.
Real evaluate_loss(const Model& model, const SyntheticTask& task, std::size_t samples,
                   std::uint64_t seed, bool zero_context = false);

}  // namespace fdt2
