#include "fdt2/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "fdt2/errors.hpp"

namespace fdt2 {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

const ConfigKey* find_key(std::string_view name) {
    for (const auto& k : config_keys()) {
        if (k.name == name) return &k;
    }
    return nullptr;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError("key '" + std::string(key) + "': cannot parse '" + std::string(text) +
                          "' as a number");
    }
    return value;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"layers", "4", "transformer blocks"},
        {"width", "32", "hidden width"},
        {"heads", "2", "attention heads (must divide width)"},
        {"latent_width", "8", "latent channels per token"},
        {"n_z", "16", "noisy tokens"},
        {"contexts", "ref:16,traj:16", "context segments as name:length,..."},
        {"ratio", "0.5", "dynamic token selection keep ratio"},
        {"mode", "fulldit2", "execution mode"},
        {"attention_style", "auto", "auto | full | decoupled | masked_oracle"},
        {"active_layers", "2", "context layers under layer caching (leading layers)"},
        {"layer_plan", "", "explicit context layers, e.g. 0,2 (overrides active_layers)"},
        {"context_positions", "false", "add aligned positional rows to context tokens"},
        {"soft_gate", "true", "scale kept context values by sigmoid(score)"},
        {"mlp_hidden", "64", "MLP hidden width"},
        {"scorer_hidden", "16", "importance scorer hidden width"},
        {"time_features", "8", "sinusoidal timestep features"},
        {"task", "copy", "copy | linear-map | masked-reconstruction"},
        {"seed", "0", "master seed"},
        {"iters", "500", "training iterations"},
        {"lr", "0.5", "gradient descent step size"},
        {"batch", "4", "samples per training iteration"},
        {"steps", "30", "sampling steps"},
        {"samples", "4", "conditions per sample/bench run"},
        {"probes", "8", "probe inputs for BI and analysis"},
        {"bi_extra_layers", "1", "layers chosen beyond layer 0 by the BI command"},
        {"bi_zero_context_values", "false", "BI with zeroed context values"},
        {"tokens_per_frame", "4", "tokens per frame when latents are split into frames"},
        {"analysis_layer", "0", "layer used for stepwise similarity"},
    };
    return keys;
}

RunConfig::RunConfig() {
    for (const auto& k : config_keys()) values_.emplace(k.name, k.default_value);
}

RunConfig RunConfig::parse(std::string_view text, std::string_view origin) {
    RunConfig cfg;
    std::map<std::string, int, std::less<>> seen;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = std::string(origin) + ":" + std::to_string(line_no);
        if (eq == std::string_view::npos) {
            throw ConfigError(where + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (auto it = seen.find(key); it != seen.end()) {
            throw ConfigError(where + ": duplicate key '" + std::string(key) + "' (first on line " +
                              std::to_string(it->second) + ")");
        }
        try {
            cfg.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
        seen.emplace(std::string(key), line_no);
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path.string());
}

void RunConfig::set(std::string_view key, std::string_view value) {
    if (!find_key(key)) throw ConfigError("unknown key '" + std::string(key) + "'");
    values_[std::string(key)] = std::string(trim(value));
}

void RunConfig::set_assignment(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
    }
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::get(std::string_view key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + std::string(key) + "'");
    return it->second;
}

std::int64_t RunConfig::get_int(std::string_view key) const {
    return parse_number<std::int64_t>(key, get(key));
}

std::size_t RunConfig::get_size(std::string_view key) const {
    const auto v = get_int(key);
    if (v < 0) throw ConfigError("key '" + std::string(key) + "' must be non-negative");
    return static_cast<std::size_t>(v);
}

std::uint64_t RunConfig::get_u64(std::string_view key) const {
    return parse_number<std::uint64_t>(key, get(key));
}

Real RunConfig::get_real(std::string_view key) const {
    return parse_number<Real>(key, get(key));
}

bool RunConfig::get_bool(std::string_view key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + std::string(key) + "': '" + v + "' is not a boolean");
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& k : config_keys()) {
        out += std::string(k.name) + " = " + get(k.name) + "\n";
    }
    return out;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig cfg;
    try {
        cfg.layers = get_size("layers");
        cfg.width = get_size("width");
        cfg.heads = get_size("heads");
        cfg.latent_width = get_size("latent_width");
        cfg.n_z = get_size("n_z");
        cfg.contexts = parse_segments(get("contexts"));
        cfg.ratio = get_real("ratio");
        cfg.mode = parse_mode(get("mode"));
        const auto& style = get("attention_style");
        cfg.attention_style = style == "auto" ? features(cfg.mode).natural_style
                                              : parse_attention_style(style);
        cfg.context_positions = get_bool("context_positions");
        cfg.soft_gate = get_bool("soft_gate");
        cfg.mlp_hidden = get_size("mlp_hidden");
        cfg.scorer_hidden = get_size("scorer_hidden");
        cfg.time_features = get_size("time_features");
        const auto& plan = get("layer_plan");
        cfg.layer_plan = plan.empty() ? LayerPlan::leading(cfg.layers, get_size("active_layers"))
                                      : LayerPlan(cfg.layers, parse_index_list(plan));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    cfg.validate();
    return cfg;
}

SyntheticTask RunConfig::task() const {
    const ModelConfig cfg = model_config();
    try {
        return SyntheticTask(parse_task_kind(get("task")), cfg.n_z, cfg.latent_width, cfg.contexts,
                             seed());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

TrainOptions RunConfig::train_options() const {
    TrainOptions opts;
    opts.iters = get_size("iters");
    opts.lr = get_real("lr");
    opts.batch = get_size("batch");
    if (opts.batch == 0) throw ConfigError("batch must be at least 1");
    if (!(opts.lr > 0.0)) throw ConfigError("lr must be positive");
    return opts;
}

int RunConfig::steps() const {
    const auto s = get_int("steps");
    if (s < 1 || s > 100000) throw ConfigError("steps must be in [1, 100000]");
    return static_cast<int>(s);
}

std::vector<Segment> parse_segments(std::string_view text) {
    std::vector<Segment> out;
    text = trim(text);
    if (text.empty() || text == "none") return out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find(',', pos), text.size());
        const auto item = trim(text.substr(pos, end - pos));
        pos = end + 1;
        const auto colon = item.find(':');
        if (colon == std::string_view::npos || colon == 0) {
            throw ConfigError("context segment '" + std::string(item) + "' is not name:length");
        }
        out.push_back({std::string(trim(item.substr(0, colon))),
                       parse_number<std::size_t>("contexts", trim(item.substr(colon + 1)))});
    }
    return out;
}

std::vector<std::size_t> parse_index_list(std::string_view text) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find(',', pos), text.size());
        out.push_back(parse_number<std::size_t>("index list", trim(text.substr(pos, end - pos))));
        pos = end + 1;
    }
    return out;
}

}  // namespace fdt2
