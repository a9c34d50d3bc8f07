#include <cmath>

#include "fdt2/errors.hpp"
#include "fdt2/model.hpp"
#include "model_internal.hpp"

namespace fdt2 {

namespace detail {

namespace {

// Adds the rows of src into dst at the given indices.
void scatter_add_rows(Tensor& dst, const Tensor& src, const std::vector<std::size_t>& idx) {
    for (std::size_t r = 0; r < idx.size(); ++r) {
        auto d = dst.row(idx[r]);
        const auto s = src.row(r);
        for (std::size_t j = 0; j < d.size(); ++j) d[j] += s[j];
    }
}

// Gradient of one block. d_out covers the full hidden sequence; the return
// value is the gradient with respect to the block input.
Tensor block_backward(const Model& model, std::size_t layer, const LayerTape& t,
                      const SequenceLayout& layout, const Tensor& time_row, const Tensor& d_out,
                      LayerParams& g) {
    const ModelConfig& cfg = model.config;
    const LayerParams& p = model.params.layers[layer];
    const std::size_t n_z = layout.n_z(), n_c = layout.n_c();
    const std::size_t k = t.attends_context ? t.sel.k() : 0;

    Tensor d_in = Tensor::matrix(d_out.rows(), d_out.cols());
    // Rows that did not take part in the block pass straight through.
    if (t.attends_context) {
        for (std::size_t s : t.sel.skipped) {
            std::copy(d_out.row(n_z + s).begin(), d_out.row(n_z + s).end(),
                      d_in.row(n_z + s).begin());
        }
    } else {
        for (std::size_t r = n_z; r < d_out.rows(); ++r) {
            std::copy(d_out.row(r).begin(), d_out.row(r).end(), d_in.row(r).begin());
        }
    }

    // Residual MLP.
    Tensor d_rows = slice_rows(d_out, 0, n_z);
    if (t.attends_context) {
        std::vector<std::size_t> kept_rows(k);
        for (std::size_t r = 0; r < k; ++r) kept_rows[r] = n_z + t.sel.kept[r];
        d_rows = vstack(d_rows, gather_rows(d_out, kept_rows));
    }
    {
        const Tensor d_normed = mlp_backward(d_rows, p.mlp, t.mlp, g.mlp);
        add_inplace(d_rows, layer_norm_backward(d_normed, p.ln2_gain, t.ln2, g.ln2_gain, g.ln2_bias));
    }

    // Output projection.
    add_inplace(g.wo, matmul_tn(t.o_all, d_rows));
    const Tensor d_o = matmul_nt(d_rows, p.wo);

    // Attention.
    Tensor dq_z, dk_z, dv_z, dq_k, dk_k, dv_k;
    if (!t.context_layer) {
        auto ga = multihead_attention_backward(d_o, t.main.q, t.main.k, t.main.v, cfg.heads,
                                               t.main.tape);
        dq_z = std::move(ga.dq);
        dk_z = std::move(ga.dk);
        dv_z = std::move(ga.dv);
    } else if (t.style == AttentionStyle::decoupled) {
        auto gz = multihead_attention_backward(slice_rows(d_o, 0, n_z), t.main.q, t.main.k,
                                               t.main.v, cfg.heads, t.main.tape);
        auto gc = multihead_attention_backward(slice_rows(d_o, n_z, n_z + k), t.context.q,
                                               t.context.k, t.context.v, cfg.heads,
                                               t.context.tape);
        dq_z = std::move(gz.dq);
        dq_k = std::move(gc.dq);
        dk_z = slice_rows(gz.dk, 0, n_z);
        dv_z = slice_rows(gz.dv, 0, n_z);
        dk_k = slice_rows(gz.dk, n_z, n_z + k);
        dv_k = slice_rows(gz.dv, n_z, n_z + k);
        add_inplace(dk_k, gc.dk);
        add_inplace(dv_k, gc.dv);
    } else {
        auto ga = multihead_attention_backward(d_o, t.main.q, t.main.k, t.main.v, cfg.heads,
                                               t.main.tape);
        dq_z = slice_rows(ga.dq, 0, n_z);
        dk_z = slice_rows(ga.dk, 0, n_z);
        dv_z = slice_rows(ga.dv, 0, n_z);
        dq_k = slice_rows(ga.dq, n_z, n_z + k);
        dk_k = slice_rows(ga.dk, n_z, n_z + k);
        dv_k = slice_rows(ga.dv, n_z, n_z + k);
    }

    // Noisy rows: QKV projections, LN1, residual, timestep embedding.
    add_inplace(g.wq, matmul_tn(t.a_z, dq_z));
    add_inplace(g.wk, matmul_tn(t.a_z, dk_z));
    add_inplace(g.wv, matmul_tn(t.a_z, dv_z));
    Tensor da_z = matmul_nt(dq_z, p.wq);
    add_inplace(da_z, matmul_nt(dk_z, p.wk));
    add_inplace(da_z, matmul_nt(dv_z, p.wv));
    Tensor dh_z = layer_norm_backward(da_z, p.ln1_gain, t.ln1_z, g.ln1_gain, g.ln1_bias);
    add_inplace(dh_z, slice_rows(d_rows, 0, n_z));
    add_inplace(g.w_time, matmul_tn(time_row, column_sums(dh_z)));
    set_rows(d_in, 0, dh_z);

    if (!t.attends_context) return d_in;

    // Context rows: gate, scorer, projections, LN1, residual.
    Tensor dv_k_raw = dv_k;
    Tensor d_scores = Tensor::matrix(n_c, 1);
    if (t.gated) {
        for (std::size_t r = 0; r < k; ++r) {
            const Real gate = t.gate[r];
            const Real d_gate = dot(dv_k.row(r), t.v_k_raw.row(r));
            for (auto& v : dv_k_raw.row(r)) v *= gate;
            d_scores[t.sel.kept[r]] = d_gate * gate * (1.0 - gate);
        }
    }
    Tensor dv_c_all = t.selection ? score_tokens_backward(d_scores, p.scorer, t.score, g.scorer)
                                  : Tensor::matrix(n_c, cfg.width);
    scatter_add_rows(dv_c_all, dv_k_raw, t.sel.kept);

    add_inplace(g.wq, matmul_tn(t.a_k, dq_k));
    add_inplace(g.wk, matmul_tn(t.a_k, dk_k));
    add_inplace(g.wv, matmul_tn(t.a_c, dv_c_all));
    Tensor da_k = matmul_nt(dq_k, p.wq);
    add_inplace(da_k, matmul_nt(dk_k, p.wk));
    Tensor da_c = matmul_nt(dv_c_all, p.wv);
    scatter_add_rows(da_c, da_k, t.sel.kept);
    Tensor dh_c = layer_norm_backward(da_c, p.ln1_gain, t.ln1_c, g.ln1_gain, g.ln1_bias);
    scatter_add_rows(dh_c, slice_rows(d_rows, n_z, n_z + k), t.sel.kept);
    for (std::size_t s : t.sel.skipped) {
        auto r = dh_c.row(s);
        const auto pass = d_out.row(n_z + s);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += pass[j];
    }
    set_rows(d_in, n_z, dh_c);
    return d_in;
}

}  // namespace

void backward(const Model& model, const ModelTape& tape, const Tensor& d_velocity,
              ModelParams& grad) {
    const ModelConfig& cfg = model.config;
    const ModelParams& p = model.params;
    const SequenceLayout& layout = tape.layout;
    const std::size_t n_z = layout.n_z();

    // Head.
    add_inplace(grad.w_out, matmul_tn(tape.final_normed, d_velocity));
    add_inplace(grad.b_out, column_sums(d_velocity));
    const Tensor d_normed = matmul_nt(d_velocity, p.w_out);
    Tensor d_hidden = Tensor::matrix(layout.total(), cfg.width);
    set_rows(d_hidden, 0,
             layer_norm_backward(d_normed, p.lnf_gain, tape.lnf, grad.lnf_gain, grad.lnf_bias));

    for (std::size_t l = cfg.layers; l-- > 0;) {
        d_hidden = block_backward(model, l, tape.layers[l], layout, tape.time_row, d_hidden,
                                  grad.layers[l]);
    }

    // Input assembly.
    const Tensor dz = slice_rows(d_hidden, 0, n_z);
    add_inplace(grad.w_noisy, matmul_tn(tape.z_t, dz));
    add_inplace(grad.b_noisy, column_sums(dz));
    for (std::size_t i = 0; i < n_z; ++i) {
        auto r = grad.pos_embed.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += dz(i, j);
    }
    if (layout.n_c() == 0) return;
    const Tensor dc = slice_rows(d_hidden, n_z, layout.total());
    add_inplace(grad.w_context, matmul_tn(tape.context, dc));
    std::size_t row = 0;
    for (std::size_t s = 0; s < layout.contexts().size(); ++s) {
        for (std::size_t j = 0; j < layout.contexts()[s].length; ++j, ++row) {
            auto seg = grad.segment_embed.row(s);
            for (std::size_t q = 0; q < seg.size(); ++q) seg[q] += dc(row, q);
            if (cfg.context_positions) {
                auto pos = grad.pos_embed.row(j);
                for (std::size_t q = 0; q < pos.size(); ++q) pos[q] += dc(row, q);
            }
        }
    }
}

}  // namespace detail

namespace {

Tensor interpolate(const Tensor& z0, const Tensor& z1, Real t) {
    Tensor z = z0;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (1.0 - t) * z0[i] + t * z1[i];
    return z;
}

}  // namespace

Real fm_loss_fixed(const Model& model, const Tensor& z1, const Tensor& context, const Tensor& z0,
                   Real t) {
    const Tensor u = velocity(model, DiffusionState{interpolate(z0, z1, t), t, context});
    Real sum = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const Real e = u[i] - (z1[i] - z0[i]);
        sum += e * e;
    }
    return sum / static_cast<Real>(u.size());
}

LossAndGrad fm_loss_and_grad(const Model& model, const Tensor& z1, const Tensor& context,
                             const Tensor& z0, Real t) {
    detail::ModelTape tape;
    const Tensor u =
        detail::forward(model, DiffusionState{interpolate(z0, z1, t), t, context}, {}, &tape);
    LossAndGrad out{0.0, ModelParams::zeros(model.config)};
    Tensor du = zeros_like(u);
    const Real inv_n = 1.0 / static_cast<Real>(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        const Real e = u[i] - (z1[i] - z0[i]);
        out.loss += e * e;
        du[i] = 2.0 * e * inv_n;
    }
    out.loss *= inv_n;
    detail::backward(model, tape, du, out.grad);
    return out;
}

}  // namespace fdt2
