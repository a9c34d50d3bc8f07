#include <benchmark/benchmark.h>

#include "fdt2/attention.hpp"
#include "fdt2/cost_model.hpp"
#include "fdt2/flow.hpp"
#include "fdt2/model.hpp"
#include "fdt2/selection.hpp"

using namespace fdt2;

namespace {

AttentionInputs random_inputs(std::size_t n_z, std::size_t n_c, std::size_t d) {
    Rng rng(1);
    AttentionInputs in;
    in.q_z = rng.normal_tensor(n_z, d);
    in.k_z = rng.normal_tensor(n_z, d);
    in.v_z = rng.normal_tensor(n_z, d);
    in.q_c = rng.normal_tensor(n_c, d);
    in.k_c = rng.normal_tensor(n_c, d);
    in.v_c = rng.normal_tensor(n_c, d);
    in.d_k = static_cast<Real>(d);
    return in;
}

void BM_AttnIccFull(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto in = random_inputs(n, 2 * n, 32);
    for (auto _ : state) benchmark::DoNotOptimize(attn_icc_full(in));
}

void BM_AttnDecoupled(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto in = random_inputs(n, 2 * n, 32);
    for (auto _ : state) benchmark::DoNotOptimize(attn_decoupled(in));
}

void BM_AttnMaskedOracle(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto in = random_inputs(n, 2 * n, 32);
    for (auto _ : state) benchmark::DoNotOptimize(attn_masked_oracle(in));
}

void BM_SelectTopk(benchmark::State& state) {
    Rng rng(2);
    const Tensor scores = rng.normal_tensor(static_cast<std::size_t>(state.range(0)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(select_topk(scores, 0.5));
}

ModelConfig desk(Mode m) {
    ModelConfig cfg;
    cfg.layer_plan = LayerPlan::leading(cfg.layers, 2);
    return cfg.with_mode(m);
}

// One full sampling run (8 steps) per mode on the desk-scale model.
void BM_SampleMode(benchmark::State& state) {
    const Mode m = kAllModes[static_cast<std::size_t>(state.range(0))];
    const Model model = Model::create(desk(m), 3);
    Rng rng(4);
    const Tensor ctx = rng.normal_tensor(model.config.n_c(), model.config.latent_width);
    const Tensor z0 = rng.normal_tensor(model.config.n_z, model.config.latent_width);
    state.SetLabel(std::string(to_string(m)));
    for (auto _ : state) benchmark::DoNotOptimize(sample_from(model, ctx, z0, 8));
    state.counters["logits"] =
        static_cast<double>(analytic_interactions(cost_spec_for(model.config, 8)));
}

void BM_TrainStep(benchmark::State& state) {
    const ModelConfig cfg = desk(Mode::fulldit2);
    Rng rng(5);
    const Tensor z1 = rng.normal_tensor(cfg.n_z, cfg.latent_width);
    const Tensor ctx = rng.normal_tensor(cfg.n_c(), cfg.latent_width);
    const Tensor z0 = rng.normal_tensor(cfg.n_z, cfg.latent_width);
    const Model model = Model::create(cfg, 6);
    for (auto _ : state) benchmark::DoNotOptimize(fm_loss_and_grad(model, z1, ctx, z0, 0.5));
}

}  // namespace

BENCHMARK(BM_AttnIccFull)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK(BM_AttnDecoupled)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK(BM_AttnMaskedOracle)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK(BM_SelectTopk)->Arg(32)->Arg(256);
BENCHMARK(BM_SampleMode)->DenseRange(0, static_cast<int>(kAllModes.size()) - 1);
BENCHMARK(BM_TrainStep);
BENCHMARK_MAIN();
