#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fdt2/tensor.hpp"

namespace fdt2 {

struct Segment {
    std::string name;
    std::size_t length = 0;
};

// Row partition of the unified sequence: the noisy segment first, then the
// context segments in declared order.
class SequenceLayout {
public:
    SequenceLayout() = default;
    SequenceLayout(std::size_t n_z, std::vector<Segment> contexts);

    std::size_t n_z() const { return n_z_; }
    std::size_t n_c() const { return n_c_; }
    std::size_t total() const { return n_z_ + n_c_; }
    const std::vector<Segment>& contexts() const { return contexts_; }

    // First row of context segment i within the unified sequence.
    std::size_t segment_begin(std::size_t i) const;
    // Index of the context segment that owns context row j (0-based within the context block).
    std::size_t segment_of(std::size_t j) const;

    friend bool operator==(const SequenceLayout&, const SequenceLayout&) = default;

private:
    std::size_t n_z_ = 0;
    std::size_t n_c_ = 0;
    std::vector<Segment> contexts_;
};

struct AttentionInputs {
    Tensor q_z, k_z, v_z;
    Tensor q_c, k_c, v_c;
    Real d_k = 1.0;

    std::size_t n_z() const { return q_z.rows(); }
    std::size_t n_c() const { return q_c.rows(); }
    // Throws DimensionError unless all six share the feature width and d_k > 0.
    std::size_t validate() const;
};

struct AttentionOutputs {
    Tensor o_z;
    Tensor o_c;
};

// Counts query-key logits computed by attention calls, plus multiply-adds of
// dense projections for context. One counter per run.
struct InteractionCounter {
    std::uint64_t logits = 0;
    std::uint64_t projection_macs = 0;

    void add_logits(std::size_t queries, std::size_t keys) {
        logits += static_cast<std::uint64_t>(queries) * keys;
    }
};

// Query rows at or after query_begin cannot see key columns before key_end.
// This is the only mask pattern the library needs: context queries blind to
// noisy keys.
struct ContextMask {
    std::size_t query_begin = 0;
    std::size_t key_end = 0;
};

// Added to masked logits before the softmax.
inline constexpr Real kMaskedLogit = -1e9;

// softmax(Q K^T / sqrt(d_k)) V.
Tensor attn_dense(const Tensor& q, const Tensor& k, const Tensor& v, Real d_k,
                  InteractionCounter* counter = nullptr);

// attn_dense with an optional mask; weights, when non-null, receives the
// post-softmax matrix.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, Real d_k, const ContextMask* mask,
              Tensor* weights, InteractionCounter* counter);

// Joint attention over [z; c].
AttentionOutputs attn_icc_full(const AttentionInputs& in, InteractionCounter* counter = nullptr);

// Joint attention with the context-query / noisy-key score block masked.
AttentionOutputs attn_masked_oracle(const AttentionInputs& in, Tensor* weights = nullptr,
                                    InteractionCounter* counter = nullptr);

// Context self-attention plus noisy-to-all attention.
AttentionOutputs attn_decoupled(const AttentionInputs& in, InteractionCounter* counter = nullptr);

// ---------------------------------------------------------------------------
// Multi-head form used inside the model. The feature axis is split into
// `heads` equal slices, each attended independently with d_k = d / heads, and
// the head outputs are concatenated back. The counter is charged once per call
// (queries x keys), matching the token-pair unit of the cost model.

struct MultiHeadTape {
    std::vector<Tensor> weights;  // one post-softmax matrix per head
};

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                           const ContextMask* mask, InteractionCounter* counter,
                           MultiHeadTape* tape = nullptr);

struct AttentionGrads {
    Tensor dq, dk, dv;
};

AttentionGrads multihead_attention_backward(const Tensor& d_out, const Tensor& q, const Tensor& k,
                                            const Tensor& v, std::size_t heads,
                                            const MultiHeadTape& tape);

}  // namespace fdt2
