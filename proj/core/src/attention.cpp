#include "fdt2/attention.hpp"

#include <cmath>
#include <numeric>

#include "fdt2/errors.hpp"
#include "fdt2/ops.hpp"

namespace fdt2 {

SequenceLayout::SequenceLayout(std::size_t n_z, std::vector<Segment> contexts)
    : n_z_(n_z), contexts_(std::move(contexts)) {
    if (n_z_ == 0) throw DimensionError("SequenceLayout: noisy segment must be non-empty");
    for (const auto& s : contexts_) n_c_ += s.length;
}

std::size_t SequenceLayout::segment_begin(std::size_t i) const {
    std::size_t begin = n_z_;
    for (std::size_t s = 0; s < i; ++s) begin += contexts_.at(s).length;
    return begin;
}

std::size_t SequenceLayout::segment_of(std::size_t j) const {
    std::size_t end = 0;
    for (std::size_t s = 0; s < contexts_.size(); ++s) {
        end += contexts_[s].length;
        if (j < end) return s;
    }
    throw DimensionError("context row " + std::to_string(j) + " outside layout");
}

std::size_t AttentionInputs::validate() const {
    const std::size_t d = q_z.cols();
    for (const Tensor* t : {&k_z, &v_z, &q_c, &k_c, &v_c}) {
        if (t->cols() != d) throw DimensionError("AttentionInputs: feature widths differ");
    }
    if (k_z.rows() != v_z.rows() || q_z.rows() != k_z.rows()) {
        throw DimensionError("AttentionInputs: noisy segment row counts differ");
    }
    if (k_c.rows() != v_c.rows() || q_c.rows() != k_c.rows()) {
        throw DimensionError("AttentionInputs: context segment row counts differ");
    }
    if (!(d_k > 0.0)) throw DimensionError("AttentionInputs: d_k must be positive");
    return d;
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, Real d_k, const ContextMask* mask,
              Tensor* weights, InteractionCounter* counter) {
    if (q.cols() != k.cols()) {
        throw DimensionError("attention: query/key widths " + q.shape_string() + " vs " +
                             k.shape_string());
    }
    if (k.rows() != v.rows()) {
        throw DimensionError("attention: key/value rows " + k.shape_string() + " vs " +
                             v.shape_string());
    }
    if (q.rows() > 0 && k.rows() == 0) throw DimensionError("attention: queries with no keys");
    if (counter) counter->add_logits(q.rows(), k.rows());

    Tensor scores = matmul_nt(q, k);
    scale_inplace(scores, 1.0 / std::sqrt(d_k));
    if (mask) {
        for (std::size_t i = mask->query_begin; i < scores.rows(); ++i) {
            for (std::size_t j = 0; j < mask->key_end && j < scores.cols(); ++j) {
                scores(i, j) += kMaskedLogit;
            }
        }
    }
    Tensor p = softmax_rows(scores);
    Tensor out = matmul(p, v);
    if (weights) *weights = std::move(p);
    return out;
}

Tensor attn_dense(const Tensor& q, const Tensor& k, const Tensor& v, Real d_k,
                  InteractionCounter* counter) {
    return attend(q, k, v, d_k, nullptr, nullptr, counter);
}

AttentionOutputs attn_icc_full(const AttentionInputs& in, InteractionCounter* counter) {
    in.validate();
    const Tensor q = vstack(in.q_z, in.q_c);
    const Tensor k = vstack(in.k_z, in.k_c);
    const Tensor v = vstack(in.v_z, in.v_c);
    const Tensor o = attn_dense(q, k, v, in.d_k, counter);
    return {slice_rows(o, 0, in.n_z()), slice_rows(o, in.n_z(), o.rows())};
}

AttentionOutputs attn_masked_oracle(const AttentionInputs& in, Tensor* weights,
                                    InteractionCounter* counter) {
    in.validate();
    const Tensor q = vstack(in.q_z, in.q_c);
    const Tensor k = vstack(in.k_z, in.k_c);
    const Tensor v = vstack(in.v_z, in.v_c);
    const ContextMask mask{in.n_z(), in.n_z()};
    const Tensor o = attend(q, k, v, in.d_k, &mask, weights, counter);
    return {slice_rows(o, 0, in.n_z()), slice_rows(o, in.n_z(), o.rows())};
}

AttentionOutputs attn_decoupled(const AttentionInputs& in, InteractionCounter* counter) {
    in.validate();
    AttentionOutputs out;
    out.o_c = attn_dense(in.q_c, in.k_c, in.v_c, in.d_k, counter);
    out.o_z = attn_dense(in.q_z, vstack(in.k_z, in.k_c), vstack(in.v_z, in.v_c), in.d_k, counter);
    return out;
}

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                           const ContextMask* mask, InteractionCounter* counter,
                           MultiHeadTape* tape) {
    const std::size_t d = q.cols();
    if (heads == 0 || d % heads != 0) {
        throw DimensionError("multihead_attention: width " + std::to_string(d) +
                             " not divisible by " + std::to_string(heads) + " heads");
    }
    if (k.cols() != d || v.cols() != d) throw DimensionError("multihead_attention: widths differ");
    if (counter) counter->add_logits(q.rows(), k.rows());
    const std::size_t dh = d / heads;
    Tensor out = Tensor::matrix(q.rows(), d);
    if (tape) tape->weights.assign(heads, Tensor{});
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * dh, c1 = c0 + dh;
        Tensor* w = tape ? &tape->weights[h] : nullptr;
        const Tensor o = attend(slice_cols(q, c0, c1), slice_cols(k, c0, c1), slice_cols(v, c0, c1),
                                static_cast<Real>(dh), mask, w, nullptr);
        set_cols(out, c0, o);
    }
    return out;
}

AttentionGrads multihead_attention_backward(const Tensor& d_out, const Tensor& q, const Tensor& k,
                                            const Tensor& v, std::size_t heads,
                                            const MultiHeadTape& tape) {
    const std::size_t d = q.cols();
    const std::size_t dh = d / heads;
    const Real scale = 1.0 / std::sqrt(static_cast<Real>(dh));
    AttentionGrads g{zeros_like(q), zeros_like(k), zeros_like(v)};
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * dh, c1 = c0 + dh;
        const Tensor& p = tape.weights.at(h);
        const Tensor qh = slice_cols(q, c0, c1), kh = slice_cols(k, c0, c1),
                     vh = slice_cols(v, c0, c1), doh = slice_cols(d_out, c0, c1);
        set_cols(g.dv, c0, matmul_tn(p, doh));
        Tensor ds = matmul_nt(doh, vh);  // dP
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            const Real row_dot = dot(ds.row(i), p.row(i));
            for (std::size_t j = 0; j < ds.cols(); ++j) ds(i, j) = p(i, j) * (ds(i, j) - row_dot);
        }
        scale_inplace(ds, scale);
        set_cols(g.dq, c0, matmul(ds, kh));
        set_cols(g.dk, c0, matmul_tn(ds, qh));
    }
    return g;
}

}  // namespace fdt2
