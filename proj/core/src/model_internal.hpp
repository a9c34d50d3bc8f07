#pragma once

// Forward-pass records shared by model.cpp and model_backward.cpp.

#include <vector>

#include "fdt2/model.hpp"

namespace fdt2::detail {

struct AttentionCall {
    Tensor q, k, v;
    bool masked = false;
    MultiHeadTape tape;
};

struct LayerTape {
    bool context_layer = false;   // the mode routes context through this layer
    bool attends_context = false; // context Q/K/V computed this call (not cached)
    bool selection = false;
    bool gated = false;
    AttentionStyle style = AttentionStyle::full;

    SelectionResult sel;
    LayerNormTape ln1_z, ln1_c;
    Tensor a_z, a_c, a_k;
    Tensor q_z, k_z, v_z;
    Tensor q_k, k_k, v_k_raw, v_k;
    Tensor v_c_all;
    ScoreTape score;
    Tensor gate;  // k x 1

    AttentionCall main;     // joint call, or the noisy-to-all call when decoupled
    AttentionCall context;  // decoupled reference self-attention

    Tensor o_all;
    LayerNormTape ln2;
    MlpTape mlp;
};

struct ModelTape {
    Tensor time_row;
    Tensor z_t;
    Tensor context;
    SequenceLayout layout;
    std::vector<LayerTape> layers;
    LayerNormTape lnf;
    Tensor final_normed;
};

Tensor run_block(const Model& model, std::size_t layer, const Tensor& hidden,
                 const SequenceLayout& layout, const Tensor& time_row, const ForwardOptions& opts,
                 LayerTape* tape, LayerTrace* trace);

Tensor forward(const Model& model, const DiffusionState& state, const ForwardOptions& opts,
               ModelTape* tape);

// Fills `grad` (zero-initialized by the caller) with d(loss)/d(params) given
// d(loss)/d(velocity).
void backward(const Model& model, const ModelTape& tape, const Tensor& d_velocity,
              ModelParams& grad);

}  // namespace fdt2::detail
