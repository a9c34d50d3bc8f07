#include "fdt2/block_importance.hpp"

#include "fdt2/errors.hpp"
#include "fdt2/ops.hpp"

namespace fdt2 {

std::vector<DiffusionState> make_probes(const SyntheticTask& task, std::size_t count,
                                        std::uint64_t seed, Real t) {
    Rng rng(seed);
    std::vector<DiffusionState> probes;
    probes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto s = task.draw(rng);
        const Tensor z0 = rng.normal_tensor(s.z1.rows(), s.z1.cols());
        Tensor z_t = z0;
        for (std::size_t j = 0; j < z_t.size(); ++j) z_t[j] = (1.0 - t) * z0[j] + t * s.z1[j];
        probes.push_back(DiffusionState{std::move(z_t), t, std::move(s.context)});
    }
    return probes;
}

Real block_importance_from_qkv(const Tensor& q_z, const Tensor& k_z, const Tensor& v_z,
                               const Tensor& k_c, const Tensor& v_c, std::size_t heads) {
    // No context keys: both outputs are the same attention call.
    if (k_c.rows() == 0) return 0.0;
    const Tensor without = multihead_attention(q_z, k_z, v_z, heads, nullptr, nullptr);
    const Tensor with =
        multihead_attention(q_z, vstack(k_z, k_c), vstack(v_z, v_c), heads, nullptr, nullptr);
    Real total = 0.0;
    for (std::size_t i = 0; i < q_z.rows(); ++i) total += 1.0 - cosine(without.row(i), with.row(i));
    return total / static_cast<Real>(q_z.rows());
}

ModelConfig probe_config(const ModelConfig& cfg) {
    return cfg.with_mode(Mode::baseline_icc, /*keep_style=*/true);
}

namespace {

// Per-layer BI for one probe.
std::vector<Real> probe_bi(const Model& probe_model, const DiffusionState& probe,
                           const BiOptions& opts) {
    ForwardTrace trace;
    ForwardOptions fo;
    fo.trace = &trace;
    velocity(probe_model, probe, fo);
    std::vector<Real> out;
    out.reserve(trace.layers.size());
    for (const auto& lt : trace.layers) {
        Tensor v_c = lt.v_c;
        if (opts.zero_context_values) v_c = zeros_like(v_c);
        out.push_back(block_importance_from_qkv(lt.q_z, lt.k_z, lt.v_z, lt.k_c, v_c,
                                                probe_model.config.heads));
    }
    return out;
}

}  // namespace

BIReport bi_report(const Model& model, std::span<const DiffusionState> probes,
                   const BiOptions& opts) {
    if (probes.empty()) throw std::invalid_argument("block_importance: empty probe batch");
    const Model probe_model{probe_config(model.config), model.params};
    BIReport report;
    report.samples = probes.size();
    report.bi.assign(model.config.layers, 0.0);
    for (const auto& probe : probes) {
        const auto per_layer = probe_bi(probe_model, probe, opts);
        for (std::size_t l = 0; l < per_layer.size(); ++l) report.bi[l] += per_layer[l];
    }
    report.mean_cosine.resize(report.bi.size());
    for (std::size_t l = 0; l < report.bi.size(); ++l) {
        report.bi[l] /= static_cast<Real>(probes.size());
        report.mean_cosine[l] = 1.0 - report.bi[l];
    }
    return report;
}

Real block_importance(const Model& model, std::span<const DiffusionState> probes,
                      std::size_t layer, const BiOptions& opts) {
    if (layer >= model.config.layers) {
        throw std::out_of_range("block_importance: layer " + std::to_string(layer));
    }
    return bi_report(model, probes, opts).bi[layer];
}

}  // namespace fdt2
