#include "fdt2/model.hpp"

#include <algorithm>
#include <cmath>

#include "fdt2/errors.hpp"
#include "model_internal.hpp"

namespace fdt2 {

// ---------------------------------------------------------------------------
// Configuration

std::size_t ModelConfig::n_c() const {
    std::size_t n = 0;
    for (const auto& s : contexts) n += s.length;
    return n;
}

std::size_t ModelConfig::position_rows() const {
    std::size_t rows = n_z;
    for (const auto& s : contexts) rows = std::max(rows, s.length);
    return rows;
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (layers == 0) fail("layers must be >= 1");
    if (heads == 0 || width % heads != 0) fail("width must be divisible by heads");
    if (n_z == 0) fail("n_z must be >= 1");
    if (latent_width == 0) fail("latent_width must be >= 1");
    if (!(ratio > 0.0 && ratio <= 1.0)) fail("ratio must lie in (0, 1]");
    if (time_features < 2 || time_features % 2 != 0) fail("time_features must be even and >= 2");
    if (mlp_hidden == 0 || scorer_hidden == 0) fail("hidden widths must be >= 1");
    if (layer_plan.total_layers() != layers) {
        fail("layer_plan covers " + std::to_string(layer_plan.total_layers()) + " layers, model has " +
             std::to_string(layers));
    }
    const ModeFeatures f = features(mode);
    if (f.step_cache && attention_style == AttentionStyle::full) {
        fail(std::string("mode ") + std::string(to_string(mode)) +
             " caches reference K/V and needs decoupled (or masked_oracle) attention");
    }
}

bool ModelConfig::processes_context(std::size_t layer) const {
    const ModeFeatures f = features(mode);
    if (!f.conditioned) return false;
    return !f.layer_cache || layer_plan.contains(layer);
}

LayerPlan ModelConfig::effective_plan() const {
    return features(mode).layer_cache ? layer_plan : LayerPlan::all(layers);
}

ModelConfig ModelConfig::with_mode(Mode m, bool keep_style) const {
    ModelConfig c = *this;
    c.mode = m;
    if (!keep_style) c.attention_style = features(m).natural_style;
    return c;
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
    const std::size_t d = cfg.width, lat = cfg.latent_width;
    ModelParams p;
    p.w_noisy = Tensor::matrix(lat, d);
    p.b_noisy = Tensor::matrix(1, d);
    p.w_context = Tensor::matrix(lat, d);
    p.pos_embed = Tensor::matrix(cfg.position_rows(), d);
    p.segment_embed = Tensor::matrix(std::max<std::size_t>(cfg.contexts.size(), 1), d);
    p.layers.resize(cfg.layers);
    for (auto& l : p.layers) {
        l.ln1_gain = Tensor::matrix(1, d);
        l.ln1_bias = Tensor::matrix(1, d);
        l.wq = Tensor::matrix(d, d);
        l.wk = Tensor::matrix(d, d);
        l.wv = Tensor::matrix(d, d);
        l.wo = Tensor::matrix(d, d);
        l.ln2_gain = Tensor::matrix(1, d);
        l.ln2_bias = Tensor::matrix(1, d);
        l.mlp = {Tensor::matrix(d, cfg.mlp_hidden), Tensor::matrix(1, cfg.mlp_hidden),
                 Tensor::matrix(cfg.mlp_hidden, d), Tensor::matrix(1, d)};
        l.w_time = Tensor::matrix(cfg.time_features, d);
        l.scorer.mlp = {Tensor::matrix(d + 1, cfg.scorer_hidden),
                        Tensor::matrix(1, cfg.scorer_hidden), Tensor::matrix(cfg.scorer_hidden, 1),
                        Tensor::matrix(1, 1)};
    }
    p.lnf_gain = Tensor::matrix(1, d);
    p.lnf_bias = Tensor::matrix(1, d);
    p.w_out = Tensor::matrix(d, lat);
    p.b_out = Tensor::matrix(1, lat);
    return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p = zeros(cfg);
    auto fill = [&rng](Tensor& t, Real scale) {
        for (auto& v : t.values()) v = scale * rng.normal();
    };
    auto fan_in = [](const Tensor& w) { return 1.0 / std::sqrt(static_cast<Real>(w.rows())); };
    auto ones = [](Tensor& t) { std::fill(t.values().begin(), t.values().end(), 1.0); };

    fill(p.w_noisy, fan_in(p.w_noisy));
    fill(p.w_context, fan_in(p.w_context));
    fill(p.pos_embed, 1.0);
    fill(p.segment_embed, 0.5);
    for (auto& l : p.layers) {
        ones(l.ln1_gain);
        ones(l.ln2_gain);
        fill(l.wq, fan_in(l.wq));
        // Tied query/key init: equal positions start with a positive logit bias.
        l.wk = l.wq;
        fill(l.wv, fan_in(l.wv));
        fill(l.wo, 0.5 * fan_in(l.wo));
        fill(l.mlp.w1, fan_in(l.mlp.w1));
        fill(l.mlp.w2, 0.5 * fan_in(l.mlp.w2));
        fill(l.w_time, fan_in(l.w_time));
        fill(l.scorer.mlp.w1, fan_in(l.scorer.mlp.w1));
        fill(l.scorer.mlp.w2, fan_in(l.scorer.mlp.w2));
    }
    ones(p.lnf_gain);
    fill(p.w_out, 0.5 * fan_in(p.w_out));
    return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    std::vector<std::pair<std::string, Tensor*>> out{
        {"embed.w_noisy", &w_noisy},     {"embed.b_noisy", &b_noisy},
        {"embed.w_context", &w_context}, {"embed.pos", &pos_embed},
        {"embed.segment", &segment_embed},
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string pre = "layer" + std::to_string(i) + ".";
        auto& l = layers[i];
        out.insert(out.end(), {
            {pre + "ln1.gain", &l.ln1_gain},     {pre + "ln1.bias", &l.ln1_bias},
            {pre + "wq", &l.wq},                 {pre + "wk", &l.wk},
            {pre + "wv", &l.wv},                 {pre + "wo", &l.wo},
            {pre + "ln2.gain", &l.ln2_gain},     {pre + "ln2.bias", &l.ln2_bias},
            {pre + "mlp.w1", &l.mlp.w1},         {pre + "mlp.b1", &l.mlp.b1},
            {pre + "mlp.w2", &l.mlp.w2},         {pre + "mlp.b2", &l.mlp.b2},
            {pre + "w_time", &l.w_time},         {pre + "scorer.w1", &l.scorer.mlp.w1},
            {pre + "scorer.b1", &l.scorer.mlp.b1}, {pre + "scorer.w2", &l.scorer.mlp.w2},
            {pre + "scorer.b2", &l.scorer.mlp.b2},
        });
    }
    out.insert(out.end(), {{"final.ln.gain", &lnf_gain},
                           {"final.ln.bias", &lnf_bias},
                           {"head.w_out", &w_out},
                           {"head.b_out", &b_out}});
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
    auto mutable_view = const_cast<ModelParams*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mutable_view.size());
    for (auto& [name, t] : mutable_view) out.emplace_back(std::move(name), t);
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named()) n += t->size();
    return n;
}

Model Model::create(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    return Model{cfg, ModelParams::init(cfg, rng)};
}

// ---------------------------------------------------------------------------
// Forward pass

Tensor time_embedding(Real t, std::size_t count) {
    Tensor e = Tensor::matrix(1, count);
    const std::size_t half = count / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const Real freq = std::pow(100.0, -static_cast<Real>(i) / static_cast<Real>(half));
        const Real arg = 10.0 * t * freq;
        e[i] = std::cos(arg);
        e[half + i] = std::sin(arg);
    }
    return e;
}

std::pair<Tensor, SequenceLayout> assemble_sequence(const Model& model, const DiffusionState& state) {
    const ModelConfig& cfg = model.config;
    const ModelParams& p = model.params;
    if (state.z_t.rows() != cfg.n_z || state.z_t.cols() != cfg.latent_width) {
        throw DimensionError("assemble_sequence: z_t is " + state.z_t.shape_string() +
                             ", expected [" + std::to_string(cfg.n_z) + "x" +
                             std::to_string(cfg.latent_width) + "]");
    }
    if (!(state.t >= 0.0 && state.t <= 1.0)) {
        throw std::invalid_argument("assemble_sequence: t outside [0, 1]");
    }
    const bool conditioned = features(cfg.mode).conditioned;
    SequenceLayout layout = conditioned ? cfg.layout() : SequenceLayout(cfg.n_z, {});

    Tensor z = matmul(state.z_t, p.w_noisy);
    add_row_bias(z, p.b_noisy);
    for (std::size_t i = 0; i < cfg.n_z; ++i) {
        auto r = z.row(i);
        const auto pos = p.pos_embed.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += pos[j];
    }
    if (!conditioned || layout.n_c() == 0) return {std::move(z), std::move(layout)};

    if (state.context.rows() != layout.n_c() || state.context.cols() != cfg.latent_width) {
        throw DimensionError("assemble_sequence: context is " + state.context.shape_string() +
                             ", expected [" + std::to_string(layout.n_c()) + "x" +
                             std::to_string(cfg.latent_width) + "]");
    }
    Tensor c = matmul(state.context, p.w_context);
    std::size_t row = 0;
    for (std::size_t s = 0; s < cfg.contexts.size(); ++s) {
        const auto seg = p.segment_embed.row(s);
        for (std::size_t j = 0; j < cfg.contexts[s].length; ++j, ++row) {
            auto r = c.row(row);
            for (std::size_t q = 0; q < r.size(); ++q) r[q] += seg[q];
            if (cfg.context_positions) {
                const auto pos = p.pos_embed.row(j);
                for (std::size_t q = 0; q < r.size(); ++q) r[q] += pos[q];
            }
        }
    }
    return {vstack(z, c), std::move(layout)};
}

namespace detail {

namespace {

Tensor linear(const Tensor& x, const Tensor& w, InteractionCounter* counter) {
    if (counter) counter->projection_macs += x.rows() * x.cols() * w.cols();
    return matmul(x, w);
}

std::vector<Real> context_mass_from(const MultiHeadTape& tape, std::size_t n_z,
                                    const std::vector<std::size_t>& kept, std::size_t n_c) {
    std::vector<Real> mass(n_c, 0.0);
    if (tape.weights.empty() || n_z == 0) return mass;
    for (const Tensor& w : tape.weights) {
        for (std::size_t i = 0; i < n_z; ++i) {
            for (std::size_t r = 0; r < kept.size(); ++r) mass[kept[r]] += w(i, n_z + r);
        }
    }
    const Real norm = static_cast<Real>(tape.weights.size() * n_z);
    for (auto& m : mass) m /= norm;
    return mass;
}

}  // namespace

Tensor run_block(const Model& model, std::size_t layer, const Tensor& hidden,
                 const SequenceLayout& layout, const Tensor& time_row, const ForwardOptions& opts,
                 LayerTape* tape, LayerTrace* trace) {
    const ModelConfig& cfg = model.config;
    const LayerParams& p = model.params.layers.at(layer);
    const ModeFeatures feats = cfg.mode_features();
    const std::size_t n_z = layout.n_z(), n_c = layout.n_c();
    if (hidden.rows() != layout.total() || hidden.cols() != cfg.width) {
        throw DimensionError("block_forward: hidden " + hidden.shape_string() +
                             " does not match layout of " + std::to_string(layout.total()) +
                             " rows");
    }
    if (opts.cache && !feats.step_cache) {
        throw ProtocolError(std::string("mode ") + std::string(to_string(cfg.mode)) +
                            " does not use a step cache");
    }
    InteractionCounter* counter = opts.counter;
    const bool context_layer = feats.conditioned && n_c > 0 && cfg.processes_context(layer);
    const bool cached = context_layer && opts.cache && opts.cache->populated(layer);
    const bool attends_context = context_layer && !cached;
    const bool want_weights = tape || trace;

    LayerTape local;
    LayerTape& t = tape ? *tape : local;
    t.context_layer = context_layer;
    t.attends_context = attends_context;
    t.selection = attends_context && feats.selection;
    t.gated = t.selection && cfg.soft_gate;
    t.style = cfg.attention_style;

    // Noisy rows: timestep conditioning, then QKV.
    Tensor h_z = slice_rows(hidden, 0, n_z);
    add_row_bias(h_z, matmul(time_row, p.w_time));
    t.a_z = layer_norm(h_z, p.ln1_gain, p.ln1_bias, &t.ln1_z);
    t.q_z = linear(t.a_z, p.wq, counter);
    t.k_z = linear(t.a_z, p.wk, counter);
    t.v_z = linear(t.a_z, p.wv, counter);

    t.q_k = Tensor::matrix(0, cfg.width);
    t.k_k = t.q_k;
    t.v_k = t.q_k;

    Tensor h_c;
    if (n_c > 0) h_c = slice_rows(hidden, n_z, n_z + n_c);

    if (attends_context) {
        t.a_c = layer_norm(h_c, p.ln1_gain, p.ln1_bias, &t.ln1_c);
        t.v_c_all = linear(t.a_c, p.wv, counter);
        if (t.selection) {
            const Tensor scores = score_tokens(p.scorer, t.v_c_all, &t.score);
            t.sel = select_topk(scores, cfg.ratio);
        } else {
            t.sel = SelectionResult::keep_all(n_c);
        }
        t.a_k = t.selection ? gather_rows(t.a_c, t.sel.kept) : t.a_c;
        t.q_k = linear(t.a_k, p.wq, counter);
        t.k_k = linear(t.a_k, p.wk, counter);
        t.v_k_raw = t.selection ? gather_rows(t.v_c_all, t.sel.kept) : t.v_c_all;
        t.v_k = t.v_k_raw;
        if (t.gated) {
            t.gate = Tensor::matrix(t.sel.k(), 1);
            for (std::size_t r = 0; r < t.sel.k(); ++r) {
                t.gate[r] = sigmoid(t.sel.scores[t.sel.kept[r]]);
                for (auto& v : t.v_k.row(r)) v *= t.gate[r];
            }
        }
        if (opts.cache) opts.cache->populate(layer, t.k_k, t.v_k, t.sel, opts.step);
    } else if (cached) {
        const CacheEntry& entry = opts.cache->lookup(layer);
        t.sel = entry.selection;
        t.k_k = entry.k;
        t.v_k = entry.v;
    }

    // Attention.
    Tensor o_z, o_k;
    MultiHeadTape* main_tape = want_weights ? &t.main.tape : nullptr;
    if (!context_layer) {
        t.main.q = t.q_z;
        t.main.k = t.k_z;
        t.main.v = t.v_z;
        o_z = multihead_attention(t.q_z, t.k_z, t.v_z, cfg.heads, nullptr, counter, main_tape);
    } else if (cached || t.style == AttentionStyle::decoupled) {
        t.main.q = t.q_z;
        t.main.k = vstack(t.k_z, t.k_k);
        t.main.v = vstack(t.v_z, t.v_k);
        if (attends_context) {
            MultiHeadTape* ctx_tape = tape ? &t.context.tape : nullptr;
            t.context.q = t.q_k;
            t.context.k = t.k_k;
            t.context.v = t.v_k;
            o_k = multihead_attention(t.q_k, t.k_k, t.v_k, cfg.heads, nullptr, counter, ctx_tape);
        }
        o_z = multihead_attention(t.main.q, t.main.k, t.main.v, cfg.heads, nullptr, counter,
                                  main_tape);
    } else {
        t.main.q = vstack(t.q_z, t.q_k);
        t.main.k = vstack(t.k_z, t.k_k);
        t.main.v = vstack(t.v_z, t.v_k);
        t.main.masked = t.style == AttentionStyle::masked_oracle;
        const ContextMask mask{n_z, n_z};
        const Tensor o = multihead_attention(t.main.q, t.main.k, t.main.v, cfg.heads,
                                             t.main.masked ? &mask : nullptr, counter, main_tape);
        o_z = slice_rows(o, 0, n_z);
        o_k = slice_rows(o, n_z, o.rows());
    }

    // Output projection, MLP and residuals over the rows that took part.
    Tensor rows = attends_context ? vstack(h_z, gather_rows(h_c, t.sel.kept)) : h_z;
    t.o_all = attends_context ? vstack(o_z, o_k) : o_z;
    add_inplace(rows, linear(t.o_all, p.wo, counter));
    const Tensor normed = layer_norm(rows, p.ln2_gain, p.ln2_bias, &t.ln2);
    if (counter) {
        counter->projection_macs += normed.rows() * cfg.width * cfg.mlp_hidden * 2;
    }
    add_inplace(rows, mlp_forward(normed, p.mlp, &t.mlp));

    Tensor out;
    if (attends_context) {
        out = scatter_merge(rows, gather_rows(h_c, t.sel.skipped), layout, t.sel);
    } else {
        out = hidden;
        set_rows(out, 0, rows);
    }

    if (trace) {
        trace->hidden_in = hidden;
        trace->hidden_out = out;
        trace->processed_context = attends_context;
        trace->used_cache = cached;
        trace->selection = context_layer ? t.sel : SelectionResult{};
        trace->q_z = t.q_z;
        trace->k_z = t.k_z;
        trace->v_z = t.v_z;
        trace->q_c = t.q_k;
        trace->k_c = t.k_k;
        trace->v_c = t.v_k;
        trace->context_mass.clear();
        if (context_layer) trace->context_mass = context_mass_from(t.main.tape, n_z, t.sel.kept, n_c);
    }
    return out;
}

Tensor forward(const Model& model, const DiffusionState& state, const ForwardOptions& opts,
               ModelTape* tape) {
    const ModelConfig& cfg = model.config;
    const ModelParams& p = model.params;
    auto [hidden, layout] = assemble_sequence(model, state);
    const Tensor time_row = time_embedding(state.t, cfg.time_features);

    if (tape) {
        tape->time_row = time_row;
        tape->z_t = state.z_t;
        tape->context = state.context;
        tape->layout = layout;
        tape->layers.assign(cfg.layers, LayerTape{});
    }
    if (opts.trace) {
        opts.trace->sequence = hidden;
        opts.trace->layout = layout;
        opts.trace->layers.assign(cfg.layers, LayerTrace{});
    }
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        hidden = run_block(model, l, hidden, layout, time_row, opts,
                           tape ? &tape->layers[l] : nullptr,
                           opts.trace ? &opts.trace->layers[l] : nullptr);
    }
    LayerNormTape* lnf_tape = tape ? &tape->lnf : nullptr;
    Tensor normed = layer_norm(slice_rows(hidden, 0, cfg.n_z), p.lnf_gain, p.lnf_bias, lnf_tape);
    Tensor out = matmul(normed, p.w_out);
    add_row_bias(out, p.b_out);
    if (tape) tape->final_normed = std::move(normed);
    return out;
}

}  // namespace detail

Tensor velocity(const Model& model, const DiffusionState& state, const ForwardOptions& opts) {
    return detail::forward(model, state, opts, nullptr);
}

Tensor block_forward(const Model& model, std::size_t layer, const Tensor& hidden,
                     const SequenceLayout& layout, Real t, const ForwardOptions& opts) {
    return detail::run_block(model, layer, hidden, layout,
                             time_embedding(t, model.config.time_features), opts, nullptr,
                             opts.trace && layer < opts.trace->layers.size()
                                 ? &opts.trace->layers[layer]
                                 : nullptr);
}

}  // namespace fdt2
