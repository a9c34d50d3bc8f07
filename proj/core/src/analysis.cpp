#include "fdt2/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fdt2/block_importance.hpp"
#include "fdt2/errors.hpp"
#include "fdt2/flow.hpp"
#include "fdt2/ops.hpp"

namespace fdt2 {

std::vector<Real> frame_diff(const Tensor& frames) {
    if (frames.rank() != 3) throw DimensionError("frame_diff: expected F x P x d, got " +
                                                 frames.shape_string());
    const std::size_t f = frames.shape()[0], p = frames.shape()[1], d = frames.shape()[2];
    if (f < 2) throw std::invalid_argument("frame_diff: need at least two frames");
    if (p == 0) throw DimensionError("frame_diff: frames hold no tokens");
    std::vector<std::vector<Real>> means(f, std::vector<Real>(d, 0.0));
    for (std::size_t i = 0; i < f; ++i) {
        for (std::size_t t = 0; t < p; ++t) {
            for (std::size_t j = 0; j < d; ++j) means[i][j] += frames[(i * p + t) * d + j];
        }
        for (auto& m : means[i]) m /= static_cast<Real>(p);
    }
    std::vector<Real> out(f - 1, 0.0);
    for (std::size_t i = 0; i + 1 < f; ++i) {
        for (std::size_t j = 0; j < d; ++j) out[i] += std::abs(means[i + 1][j] - means[i][j]);
    }
    return out;
}

Real ConcentrationCurve::mass_at(Real fraction) const {
    for (const auto& [frac, mass] : points) {
        if (frac + 1e-12 >= fraction) return mass;
    }
    return points.empty() ? 0.0 : points.back().second;
}

ConcentrationCurve concentration_from_mass(std::span<const Real> mass) {
    if (mass.empty()) throw std::invalid_argument("attention_concentration: no context tokens");
    std::vector<Real> sorted(mass.begin(), mass.end());
    const Real total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
    const Real n = static_cast<Real>(sorted.size());
    for (auto& m : sorted) m = total > 0.0 ? m / total : 1.0 / n;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    ConcentrationCurve curve;
    Real acc = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        acc += sorted[i];
        curve.points.emplace_back(static_cast<Real>(i + 1) / n, acc);
    }
    return curve;
}

namespace {

std::vector<ForwardTrace> probe_traces(const Model& model, std::span<const DiffusionState> inputs) {
    const Model probe_model{probe_config(model.config), model.params};
    std::vector<ForwardTrace> traces(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        ForwardOptions fo;
        fo.trace = &traces[i];
        velocity(probe_model, inputs[i], fo);
    }
    return traces;
}

std::vector<Real> normalized(std::vector<Real> v) {
    const Real total = std::accumulate(v.begin(), v.end(), 0.0);
    if (total > 0.0) {
        for (auto& x : v) x /= total;
    }
    return v;
}

}  // namespace

std::vector<Real> context_attention_mass(const Model& model, std::span<const DiffusionState> inputs,
                                         std::span<const std::size_t> layers) {
    const std::size_t n_c = model.config.n_c();
    if (n_c == 0) throw std::invalid_argument("attention_concentration: model has no context");
    if (inputs.empty() || layers.empty()) {
        throw std::invalid_argument("attention_concentration: need inputs and layers");
    }
    std::vector<Real> mass(n_c, 0.0);
    for (const auto& trace : probe_traces(model, inputs)) {
        for (std::size_t l : layers) {
            const auto& m = trace.layers.at(l).context_mass;
            for (std::size_t j = 0; j < n_c; ++j) mass[j] += m[j];
        }
    }
    return normalized(std::move(mass));
}

ConcentrationCurve attention_concentration(const Model& model,
                                           std::span<const DiffusionState> inputs,
                                           std::span<const std::size_t> layers) {
    return concentration_from_mass(context_attention_mass(model, inputs, layers));
}

StepwiseSimilarity stepwise_similarity(const Model& model, const Tensor& context, int steps,
                                       std::size_t layer, std::uint64_t seed) {
    if (steps < 2) throw std::invalid_argument("stepwise_similarity: need at least two steps");
    if (layer >= model.config.layers) throw std::out_of_range("stepwise_similarity: layer");
    const std::size_t n_z = model.config.n_z;
    std::vector<Tensor> hidden;
    SampleOptions opts;
    opts.use_cache = false;
    opts.on_step = [&](int, Real, const ForwardTrace& trace) {
        hidden.push_back(trace.layers[layer].hidden_out);
    };
    Rng rng(seed);
    sample(model, context, steps, rng, opts);

    auto mean_cos = [](const Tensor& a, const Tensor& b, std::size_t begin, std::size_t end) {
        if (end <= begin) return 1.0;
        Real s = 0.0;
        for (std::size_t r = begin; r < end; ++r) s += cosine(a.row(r), b.row(r));
        return s / static_cast<Real>(end - begin);
    };
    StepwiseSimilarity out;
    for (const Tensor& h : hidden) {
        out.noisy.push_back(mean_cos(h, hidden.front(), 0, n_z));
        out.context.push_back(mean_cos(h, hidden.front(), n_z, h.rows()));
    }
    return out;
}

Real js_divergence(std::span<const Real> p, std::span<const Real> q) {
    if (p.size() != q.size()) throw DimensionError("js_divergence: lengths differ");
    auto kl = [](Real a, Real m) { return a > 0.0 ? a * std::log(a / m) : 0.0; };
    Real out = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const Real m = 0.5 * (p[i] + q[i]);
        out += 0.5 * kl(p[i], m) + 0.5 * kl(q[i], m);
    }
    return std::max(out, 0.0);
}

Tensor layer_divergence(const Model& model, std::span<const DiffusionState> inputs) {
    const std::size_t layers = model.config.layers;
    const std::size_t n_c = model.config.n_c();
    if (n_c == 0) throw std::invalid_argument("layer_divergence: model has no context");
    std::vector<std::vector<Real>> dist(layers, std::vector<Real>(n_c, 0.0));
    for (const auto& trace : probe_traces(model, inputs)) {
        for (std::size_t l = 0; l < layers; ++l) {
            for (std::size_t j = 0; j < n_c; ++j) dist[l][j] += trace.layers[l].context_mass[j];
        }
    }
    for (auto& d : dist) d = normalized(std::move(d));
    Tensor out = Tensor::matrix(layers, layers);
    for (std::size_t a = 0; a < layers; ++a) {
        for (std::size_t b = a + 1; b < layers; ++b) {
            out(a, b) = out(b, a) = js_divergence(dist[a], dist[b]);
        }
    }
    return out;
}

}  // namespace fdt2
