#include "fdt2/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "fdt2/analysis.hpp"
#include "fdt2/attention.hpp"
#include "fdt2/block_importance.hpp"
#include "fdt2/checkpoint.hpp"
#include "fdt2/cost_model.hpp"
#include "fdt2/csv.hpp"
#include "fdt2/errors.hpp"
#include "fdt2/flow.hpp"
#include "fdt2/run_config.hpp"

namespace fdt2::cli {

namespace fs = std::filesystem;

namespace {

// Raised for flag combinations that parse but make no sense.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string checkpoint;
    std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_checkpoint) {
    cmd->add_option("--config", o.config_path, "Run config file (key = value)");
    cmd->add_option("--set", o.overrides, "Override a config key: key=value (repeatable)");
    cmd->add_option("--seed", o.seed, "Override the config seed");
    auto* ck = cmd->add_option("--checkpoint", o.checkpoint,
                               needs_checkpoint ? "Trained checkpoint to load"
                                                : "Checkpoint path to write (default <out>/checkpoint.fdt2)");
    if (needs_checkpoint) ck->required();
    cmd->add_option("--out", o.out_dir, "Output directory");
}

RunConfig resolve_config(const CommonOptions& o) {
    RunConfig rc = o.config_path.empty() ? RunConfig() : RunConfig::load(o.config_path);
    for (const auto& kv : o.overrides) rc.set_assignment(kv);
    if (o.seed) rc.set("seed", std::to_string(*o.seed));
    return rc;
}

fs::path prepare_out(const CommonOptions& o) {
    fs::path dir(o.out_dir);
    fs::create_directories(dir);
    return dir;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    return f;
}

Model load_model(const RunConfig& rc, const std::string& checkpoint) {
    if (!fs::exists(checkpoint)) throw std::runtime_error("checkpoint not found: " + checkpoint);
    const ModelConfig cfg = rc.model_config();
    Model model{cfg, ModelParams::zeros(cfg)};
    load_params(load_checkpoint(checkpoint), model.params);
    return model;
}

double elapsed_seconds(std::chrono::steady_clock::time_point since) {
    if (strict_mode()) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

Real mse(const Tensor& a, const Tensor& b) {
    Real sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
    return a.size() ? sum / static_cast<Real>(a.size()) : 0.0;
}

std::vector<Mode> parse_mode_list(const std::string& text) {
    if (text.empty() || text == "all") return {kAllModes.begin(), kAllModes.end()};
    std::vector<Mode> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(parse_mode(item));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    if (out.empty()) throw UsageError("--configs lists no configuration");
    return out;
}

// ---- cost -----------------------------------------------------------------

struct CostOptions {
    std::uint64_t T = 30, L = 28, L_s = 5, N_x = 1;
    std::optional<std::uint64_t> N_c;
    double ncx_ratio = 2.0;
    double sel_ratio = 0.5;
    std::string configs = "all";
    std::string sweep;
    std::string out_file;
};

void cmd_cost(const CostOptions& o, std::ostream& out) {
    CostSpec base;
    base.T = o.T;
    base.L = o.L;
    base.L_s = o.L_s;
    base.N_x = o.N_x;
    if (!(o.ncx_ratio >= 0.0)) throw UsageError("--ncx-ratio must be non-negative");
    base.N_c = o.N_c ? *o.N_c
                     : static_cast<std::uint64_t>(std::floor(o.ncx_ratio * static_cast<double>(o.N_x)));
    base.ratio = o.sel_ratio;
    try {
        base.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    const auto modes = parse_mode_list(o.configs);

    std::ofstream file;
    std::ostream* sink = &out;
    if (!o.out_file.empty()) {
        file = open_out(o.out_file);
        sink = &file;
    }

    if (o.sweep.empty()) {
        CsvWriter csv(*sink, {"config", "interaction_count", "speedup_vs_baseline"});
        for (const auto& r : cost_table(base, modes)) {
            csv.field(to_string(r.config)).field(r.interactions).field(r.speedup);
            csv.end_row();
        }
        return;
    }

    std::uint64_t begin = 0, end = 0, step = 0;
    char c1 = 0, c2 = 0;
    std::stringstream ss(o.sweep);
    if (!(ss >> begin >> c1 >> end >> c2 >> step) || c1 != ':' || c2 != ':' || !ss.eof() ||
        begin < 1 || end < begin || step < 1) {
        throw UsageError("--sweep expects begin:end:step with 1 <= begin <= end and step >= 1");
    }
    if (o.N_c) throw UsageError("--sweep derives N_c from --ncx-ratio; do not pass --Nc");
    std::vector<std::string> header{"N_x", "N_c"};
    for (Mode m : modes) header.emplace_back(to_string(m));
    CsvWriter csv(*sink, header);
    for (const auto& row : scaling_curve(base, modes, begin, end, step, o.ncx_ratio)) {
        csv.field(row.N_x).field(row.N_c);
        for (auto v : row.interactions) csv.field(v);
        csv.end_row();
    }
}

// ---- attn-check -----------------------------------------------------------

int cmd_attn_check(std::uint64_t seeds, std::ostream& out, std::ostream& err) {
    if (seeds < 1) throw UsageError("--seeds must be >= 1");
    Real worst = 0.0;
    std::vector<std::uint64_t> failures;
    for (std::uint64_t s = 0; s < seeds; ++s) {
        Rng rng(s);
        const std::size_t n_z = 1 + rng.below(16);
        const std::size_t n_c = rng.below(17);
        const std::size_t d = 2 + rng.below(31);
        AttentionInputs in;
        in.q_z = rng.normal_tensor(n_z, d);
        in.k_z = rng.normal_tensor(n_z, d);
        in.v_z = rng.normal_tensor(n_z, d);
        in.q_c = rng.normal_tensor(n_c, d);
        in.k_c = rng.normal_tensor(n_c, d);
        in.v_c = rng.normal_tensor(n_c, d);
        in.d_k = d;
        const auto a = attn_decoupled(in);
        const auto b = attn_masked_oracle(in);
        const Real diff = std::max(max_abs_diff(a.o_z, b.o_z), max_abs_diff(a.o_c, b.o_c));
        worst = std::max(worst, diff);
        if (!(diff < 1e-6)) failures.push_back(s);
    }
    out << "attn-check: " << seeds << " instances, max_abs_diff=" << format_real(worst) << ", "
        << (failures.empty() ? "PASS" : "FAIL") << "\n";
    for (auto s : failures) err << "attn-check: disagreement at seed " << s << "\n";
    return failures.empty() ? kExitOk : kExitValidation;
}

// ---- train ----------------------------------------------------------------

constexpr std::uint64_t kEvalSeedSalt = 0x5eed0001;
constexpr std::size_t kEvalSamples = 32;

void cmd_train(const CommonOptions& o, std::ostream& out) {
    const RunConfig rc = resolve_config(o);
    const fs::path dir = prepare_out(o);
    const ModelConfig cfg = rc.model_config();
    const SyntheticTask task = rc.task();
    const TrainOptions opts = rc.train_options();
    Model model = Model::create(cfg, rc.seed());

    const std::uint64_t eval_seed = rc.seed() ^ kEvalSeedSalt;
    const Real initial = evaluate_loss(model, task, kEvalSamples, eval_seed);
    Rng rng(rc.seed() + 1);
    const auto losses = train_toy(model, task, opts, rng);
    const Real final_loss = evaluate_loss(model, task, kEvalSamples, eval_seed);
    const Real zeroed = evaluate_loss(model, task, kEvalSamples, eval_seed, true);

    const fs::path ckpt = o.checkpoint.empty() ? dir / "checkpoint.fdt2" : fs::path(o.checkpoint);
    save_checkpoint(ckpt, checkpoint_from_params(model.params));
    {
        auto f = open_out(dir / "train_loss.csv");
        CsvWriter csv(f, {"iter", "loss"});
        for (std::size_t i = 0; i < losses.size(); ++i) {
            csv.field(static_cast<std::uint64_t>(i)).field(losses[i]);
            csv.end_row();
        }
    }
    {
        auto f = open_out(dir / "train_eval.csv");
        CsvWriter csv(f, {"initial_loss", "final_loss", "zero_context_loss"});
        csv.field(initial).field(final_loss).field(zeroed);
        csv.end_row();
    }
    {
        auto f = open_out(dir / "run.conf");
        f << rc.to_text();
    }
    out << "train: " << losses.size() << " iterations, eval loss " << format_real(initial) << " -> "
        << format_real(final_loss) << " (zeroed context " << format_real(zeroed) << "), wrote "
        << ckpt.string() << "\n";
}

// ---- sample ---------------------------------------------------------------

void cmd_sample(const CommonOptions& o, std::ostream& out) {
    const RunConfig rc = resolve_config(o);
    const fs::path dir = prepare_out(o);
    const Model model = load_model(rc, o.checkpoint);
    const SyntheticTask task = rc.task();
    const int steps = rc.steps();
    const std::size_t count = rc.get_size("samples");

    Checkpoint latents;
    std::vector<std::vector<double>> timing;
    Rng rng(rc.seed());
    for (std::size_t i = 0; i < count; ++i) {
        const auto s = task.draw(rng);
        std::vector<double> secs;
        SampleOptions opts;
        opts.step_seconds = &secs;
        latents.tensors.push_back({"sample." + std::to_string(i), sample(model, s.context, steps, rng, opts)});
        latents.tensors.push_back({"target." + std::to_string(i), s.z1});
        timing.push_back(std::move(secs));
    }
    save_checkpoint(dir / "samples.fdt2", latents);
    auto f = open_out(dir / "timing.csv");
    CsvWriter csv(f, {"sample", "step", "seconds"});
    for (std::size_t i = 0; i < timing.size(); ++i) {
        for (std::size_t s = 0; s < timing[i].size(); ++s) {
            csv.field(static_cast<std::uint64_t>(i))
                .field(static_cast<std::uint64_t>(s))
                .field(strict_mode() ? 0.0 : timing[i][s]);
            csv.end_row();
        }
    }
    out << "sample: " << count << " samples x " << steps << " steps ("
        << to_string(model.config.mode) << "), wrote " << (dir / "samples.fdt2").string() << "\n";
}

// ---- bench ----------------------------------------------------------------

int cmd_bench(const CommonOptions& o, std::ostream& out) {
    const RunConfig rc = resolve_config(o);
    const fs::path dir = prepare_out(o);
    const Model trained = load_model(rc, o.checkpoint);
    const SyntheticTask task = rc.task();
    const int steps = rc.steps();
    const std::size_t count = rc.get_size("samples");
    if (count == 0) throw ConfigError("samples must be at least 1 for bench");

    auto f = open_out(dir / "bench.csv");
    CsvWriter csv(f, {"mode", "measured_interactions", "analytic_interactions", "wall_seconds",
                      "final_loss_proxy", "analytic_speedup"});
    const std::uint64_t baseline =
        analytic_interactions(cost_spec_for(trained.config.with_mode(Mode::baseline_icc), steps));
    bool all_match = true;
    for (Mode m : kAllModes) {
        const Model model{trained.config.with_mode(m), trained.params};
        const std::uint64_t analytic = analytic_interactions(cost_spec_for(model.config, steps));
        Rng rng(rc.seed());
        InteractionCounter counter;
        Real proxy = 0.0;
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < count; ++i) {
            const auto s = task.draw(rng);
            SampleOptions opts;
            if (i == 0) opts.counter = &counter;
            proxy += mse(sample(model, s.context, steps, rng, opts), s.z1);
        }
        const double wall = elapsed_seconds(start);
        all_match = all_match && counter.logits == analytic;
        csv.field(to_string(m))
            .field(counter.logits)
            .field(analytic)
            .field(wall)
            .field(proxy / static_cast<Real>(count))
            .field(static_cast<Real>(baseline) / static_cast<Real>(analytic));
        csv.end_row();
    }
    out << "bench: " << kAllModes.size() << " modes, measured "
        << (all_match ? "equals" : "DIFFERS FROM") << " analytic, wrote "
        << (dir / "bench.csv").string() << "\n";
    return all_match ? kExitOk : kExitValidation;
}

// ---- analyze --------------------------------------------------------------

void cmd_analyze(const CommonOptions& o, std::ostream& out) {
    const RunConfig rc = resolve_config(o);
    const fs::path dir = prepare_out(o);
    const Model model = load_model(rc, o.checkpoint);
    const SyntheticTask task = rc.task();
    const ModelConfig& cfg = model.config;
    const auto probes = make_probes(task, rc.get_size("probes"), rc.seed());
    const std::size_t tpf = rc.get_size("tokens_per_frame");
    if (tpf == 0) throw ConfigError("tokens_per_frame must be >= 1");

    // Frame differences: latents split into consecutive frames of tpf tokens.
    {
        Rng rng(rc.seed());
        const auto s = task.draw(rng);
        const Tensor generated = sample(model, s.context, rc.steps(), rng);
        std::vector<std::pair<std::string, Tensor>> sources{{"sample", generated}};
        const auto layout = cfg.layout();
        for (std::size_t g = 0; g < layout.contexts().size(); ++g) {
            const std::size_t b = layout.segment_begin(g) - layout.n_z();
            sources.emplace_back("context:" + layout.contexts()[g].name,
                                 slice_rows(s.context, b, b + layout.contexts()[g].length));
        }
        auto f = open_out(dir / "frame_diff.csv");
        CsvWriter csv(f, {"source", "frame", "l1_mean_token_diff"});
        for (const auto& [name, m] : sources) {
            const std::size_t frames = m.rows() / tpf;
            if (frames < 2) continue;
            std::vector<Real> data(m.values().begin(),
                                   m.values().begin() + static_cast<std::ptrdiff_t>(frames * tpf * m.cols()));
            const auto diffs = frame_diff(Tensor({frames, tpf, m.cols()}, std::move(data)));
            for (std::size_t i = 0; i < diffs.size(); ++i) {
                csv.field(name).field(static_cast<std::uint64_t>(i + 1)).field(diffs[i]);
                csv.end_row();
            }
        }
    }
    // Attention concentration per layer and over all layers.
    {
        auto f = open_out(dir / "concentration.csv");
        CsvWriter csv(f, {"layer", "token_fraction", "cumulative_mass"});
        auto emit = [&](const std::string& label, std::span<const std::size_t> layers) {
            for (const auto& [x, y] : attention_concentration(model, probes, layers).points) {
                csv.field(label).field(x).field(y);
                csv.end_row();
            }
        };
        std::vector<std::size_t> all;
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            all.push_back(l);
            const std::size_t one[] = {l};
            emit(std::to_string(l), one);
        }
        emit("all", all);
    }
    // Step-wise feature similarity along one sampling trajectory.
    {
        const std::size_t layer = rc.get_size("analysis_layer");
        if (layer >= cfg.layers) throw ConfigError("analysis_layer out of range");
        Rng rng(rc.seed());
        const auto s = task.draw(rng);
        const auto sim = stepwise_similarity(model, s.context, rc.steps(), layer, rc.seed());
        auto f = open_out(dir / "stepwise.csv");
        CsvWriter csv(f, {"step", "context_cosine", "noisy_cosine"});
        for (std::size_t i = 0; i < sim.noisy.size(); ++i) {
            csv.field(static_cast<std::uint64_t>(i))
                .field(i < sim.context.size() ? sim.context[i] : 0.0)
                .field(sim.noisy[i]);
            csv.end_row();
        }
    }
    // Layer-wise divergence of context attention distributions.
    {
        const Tensor js = layer_divergence(model, probes);
        auto f = open_out(dir / "layer_divergence.csv");
        CsvWriter csv(f, {"layer_a", "layer_b", "js_divergence"});
        for (std::size_t a = 0; a < js.rows(); ++a) {
            for (std::size_t b = 0; b < js.cols(); ++b) {
                csv.field(static_cast<std::uint64_t>(a)).field(static_cast<std::uint64_t>(b)).field(js(a, b));
                csv.end_row();
            }
        }
    }
    out << "analyze: wrote frame_diff.csv, concentration.csv, stepwise.csv, layer_divergence.csv to "
        << dir.string() << "\n";
}

// ---- bi -------------------------------------------------------------------

void cmd_bi(const CommonOptions& o, std::ostream& out) {
    const RunConfig rc = resolve_config(o);
    const fs::path dir = prepare_out(o);
    const Model model = load_model(rc, o.checkpoint);
    const auto probes = make_probes(rc.task(), rc.get_size("probes"), rc.seed());
    BiOptions opts;
    opts.zero_context_values = rc.get_bool("bi_zero_context_values");
    const BIReport report = bi_report(model, probes, opts);
    const LayerPlan plan = choose_layers(report, rc.get_size("bi_extra_layers"));
    {
        auto f = open_out(dir / "bi.csv");
        CsvWriter csv(f, {"layer", "bi", "mean_cosine", "chosen"});
        for (std::size_t l = 0; l < report.layers(); ++l) {
            csv.field(static_cast<std::uint64_t>(l))
                .field(report.bi[l])
                .field(report.mean_cosine[l])
                .field(std::string_view(plan.contains(l) ? "1" : "0"));
            csv.end_row();
        }
    }
    std::string list;
    for (std::size_t l : plan.active()) list += (list.empty() ? "" : ",") + std::to_string(l);
    {
        auto f = open_out(dir / "layer_plan.conf");
        f << "layer_plan = " << list << "\n";
    }
    out << "bi: layer_plan = " << list << "\n";
}

}  // namespace

bool strict_mode() {
    const char* v = std::getenv("FDT2_STRICT");
    return v && std::string_view(v) == "1";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"fdt2: in-context conditioning toolkit for diffusion transformers"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    CostOptions cost;
    auto* c_cost = app.add_subcommand("cost", "Analytic attention-cost table or scaling sweep");
    c_cost->add_option("--T", cost.T, "Sampling steps");
    c_cost->add_option("--L", cost.L, "Layers");
    c_cost->add_option("--Ls", cost.L_s, "Context layers under layer caching");
    c_cost->add_option("--Nx", cost.N_x, "Noisy tokens");
    c_cost->add_option("--Nc", cost.N_c, "Context tokens (default floor(ncx-ratio * Nx))");
    c_cost->add_option("--ncx-ratio", cost.ncx_ratio, "Context tokens per noisy token");
    c_cost->add_option("--sel-ratio", cost.sel_ratio, "Token selection keep ratio");
    c_cost->add_option("--configs", cost.configs, "Comma-separated modes or 'all'");
    c_cost->add_option("--sweep", cost.sweep, "Scaling sweep over N_x: begin:end:step");
    c_cost->add_option("--out", cost.out_file, "Write CSV to this file instead of stdout");

    std::uint64_t seeds = 1000;
    auto* c_check = app.add_subcommand("attn-check", "Randomized decoupled-vs-masked attention check");
    c_check->add_option("--seeds", seeds, "Number of random instances");

    CommonOptions train, samp, bench, analyze, bi;
    auto* c_train = app.add_subcommand("train", "Train on a synthetic task; writes checkpoint and loss CSV");
    add_common(c_train, train, false);
    auto* c_sample = app.add_subcommand("sample", "Sample latents from a checkpoint");
    add_common(c_sample, samp, true);
    auto* c_bench = app.add_subcommand("bench", "Run every mode on one checkpoint");
    add_common(c_bench, bench, true);
    auto* c_analyze = app.add_subcommand("analyze", "Emit analysis CSVs");
    add_common(c_analyze, analyze, true);
    auto* c_bi = app.add_subcommand("bi", "Block importance report and chosen layer plan");
    add_common(c_bi, bi, true);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (c_cost->parsed()) {
            cmd_cost(cost, out);
            return kExitOk;
        }
        if (c_check->parsed()) return cmd_attn_check(seeds, out, err);
        if (c_train->parsed()) {
            cmd_train(train, out);
            return kExitOk;
        }
        if (c_sample->parsed()) {
            cmd_sample(samp, out);
            return kExitOk;
        }
        if (c_bench->parsed()) return cmd_bench(bench, out);
        if (c_analyze->parsed()) {
            cmd_analyze(analyze, out);
            return kExitOk;
        }
        if (c_bi->parsed()) {
            cmd_bi(bi, out);
            return kExitOk;
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}

}  // namespace fdt2::cli
