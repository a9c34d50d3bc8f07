#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fdt2/attention.hpp"
#include "fdt2/context_cache.hpp"
#include "fdt2/modes.hpp"
#include "fdt2/ops.hpp"
#include "fdt2/rng.hpp"
#include "fdt2/selection.hpp"
#include "fdt2/tensor.hpp"

namespace fdt2 {

struct ModelConfig {
    std::size_t layers = 4;
    std::size_t width = 32;
    std::size_t heads = 2;
    std::size_t latent_width = 8;
    std::size_t n_z = 16;
    std::vector<Segment> contexts{{"ref", 16}, {"traj", 16}};
    Real ratio = 0.5;
    // Layers that process context when the mode enables layer caching.
    LayerPlan layer_plan = LayerPlan::leading(4, 2);
    Mode mode = Mode::fulldit2;
    AttentionStyle attention_style = AttentionStyle::decoupled;
    // Per-row positions on context rows, aligned with the noisy positions.
    bool context_positions = false;
    // Multiply kept reference values by sigmoid(score) so the scorer receives gradient.
    bool soft_gate = true;
    std::size_t mlp_hidden = 64;
    std::size_t scorer_hidden = 16;
    std::size_t time_features = 8;

    // Throws ConfigError on inconsistent settings.
    void validate() const;

    SequenceLayout layout() const { return SequenceLayout(n_z, contexts); }
    std::size_t n_c() const;
    std::size_t position_rows() const;
    ModeFeatures mode_features() const { return features(mode); }
    // Whether layer l attends over context tokens under the current mode.
    bool processes_context(std::size_t layer) const;
    // The plan of context-processing layers actually in force for this mode.
    LayerPlan effective_plan() const;

    // Copy with a different mode; the attention style follows the mode's
    // natural style unless `keep_style` is set.
    ModelConfig with_mode(Mode m, bool keep_style = false) const;
};

struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, wk, wv, wo;
    Tensor ln2_gain, ln2_bias;
    MlpWeights mlp;
    Tensor w_time;  // time_features x width, added to noisy rows only
    ImportanceScorer scorer;
};

struct ModelParams {
    Tensor w_noisy, b_noisy;  // latent -> width
    Tensor w_context;         // latent -> width
    Tensor pos_embed;         // position_rows x width
    Tensor segment_embed;     // one row per context segment
    std::vector<LayerParams> layers;
    Tensor lnf_gain, lnf_bias;
    Tensor w_out, b_out;  // width -> latent

    static ModelParams zeros(const ModelConfig& cfg);
    static ModelParams init(const ModelConfig& cfg, Rng& rng);

    // Every parameter tensor with a stable dotted name, in a fixed order.
    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
    std::size_t parameter_count() const;
};

struct Model {
    ModelConfig config;
    ModelParams params;

    static Model create(const ModelConfig& cfg, std::uint64_t seed);
};

struct DiffusionState {
    Tensor z_t;      // n_z x latent
    Real t = 0.0;    // in [0, 1]
    Tensor context;  // n_c x latent, segments stacked in layout order
};

struct LayerTrace {
    Tensor hidden_in;   // full sequence entering the block
    Tensor hidden_out;  // full sequence leaving the block
    bool processed_context = false;
    bool used_cache = false;
    SelectionResult selection;
    // Attention operands. The context parts hold the kept rows that entered
    // attention (the cached K/V on cached steps; q_c is empty then).
    Tensor q_z, k_z, v_z, q_c, k_c, v_c;
    // Attention mass from noisy queries into each context token (original
    // indices), averaged over heads and noisy rows. Empty when the layer did
    // not attend over context.
    std::vector<Real> context_mass;
};

struct ForwardTrace {
    Tensor sequence;  // assembled input sequence
    SequenceLayout layout;
    std::vector<LayerTrace> layers;
};

struct ForwardOptions {
    // Present only for step-cache modes. Unpopulated active layers are
    // computed and stored; populated ones are read back.
    SessionCache* cache = nullptr;
    int step = 0;
    InteractionCounter* counter = nullptr;
    ForwardTrace* trace = nullptr;
};

// Sinusoidal features of the diffusion time, 1 x count.
Tensor time_embedding(Real t, std::size_t count);

// Unified input sequence [z_t; c] after input projection, positional and
// segment embeddings. Under no_condition the context is omitted.
std::pair<Tensor, SequenceLayout> assemble_sequence(const Model& model, const DiffusionState& state);

// Velocity prediction for the noisy segment, n_z x latent.
Tensor velocity(const Model& model, const DiffusionState& state, const ForwardOptions& opts = {});

// One transformer block over the full hidden sequence. Exposed for tests and
// analysis; velocity() chains these.
Tensor block_forward(const Model& model, std::size_t layer, const Tensor& hidden,
                     const SequenceLayout& layout, Real t, const ForwardOptions& opts = {});

// Loss and parameter gradients of the flow-matching objective for one sample
// with fixed noise and time.
struct LossAndGrad {
    Real loss = 0.0;
    ModelParams grad;
};

LossAndGrad fm_loss_and_grad(const Model& model, const Tensor& z1, const Tensor& context,
                             const Tensor& z0, Real t);
Real fm_loss_fixed(const Model& model, const Tensor& z1, const Tensor& context, const Tensor& z0,
                   Real t);

}  // namespace fdt2
