#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <string>

#include "fdt2/errors.hpp"
#include "fdt2/flow.hpp"

namespace fdt2 {

namespace {

Tensor zeroed(const Tensor& t) { return zeros_like(t); }

}  // namespace

Real fm_loss(const Model& model, const Tensor& z1, const Tensor& context, Rng& rng) {
    const Tensor z0 = rng.normal_tensor(z1.rows(), z1.cols());
    const Real t = rng.uniform();
    return fm_loss_fixed(model, z1, context, z0, t);
}

Tensor sample_from(const Model& model, const Tensor& context, const Tensor& z0, int steps,
                   const SampleOptions& opts) {
    if (steps < 1) throw std::invalid_argument("sample: steps must be >= 1");
    const ModelConfig& cfg = model.config;
    std::optional<SessionCache> cache;
    if (cfg.mode_features().step_cache && opts.use_cache) cache.emplace(cfg.effective_plan());

    Tensor z = z0;
    const Real dt = 1.0 / static_cast<Real>(steps);
    for (int step = 0; step < steps; ++step) {
        const auto start = std::chrono::steady_clock::now();
        const Real t = static_cast<Real>(step) * dt;
        ForwardTrace trace;
        ForwardOptions fo;
        fo.cache = cache ? &*cache : nullptr;
        fo.step = step;
        fo.counter = opts.counter;
        fo.trace = opts.on_step ? &trace : nullptr;
        const Tensor u = velocity(model, DiffusionState{z, t, context}, fo);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += dt * u[i];
        if (opts.step_seconds) {
            const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
            opts.step_seconds->push_back(el.count());
        }
        if (opts.on_step) opts.on_step(step, t, trace);
    }
    return z;
}

Tensor sample(const Model& model, const Tensor& context, int steps, Rng& rng,
              const SampleOptions& opts) {
    const Tensor z0 = rng.normal_tensor(model.config.n_z, model.config.latent_width);
    return sample_from(model, context, z0, steps, opts);
}

std::vector<Real> train_toy(Model& model, const SyntheticTask& task, const TrainOptions& opts,
                            Rng& rng) {
    if (opts.batch == 0) throw std::invalid_argument("train_toy: batch must be >= 1");
    std::vector<Real> losses;
    losses.reserve(opts.iters);
    const Real inv_batch = 1.0 / static_cast<Real>(opts.batch);
    for (std::size_t it = 0; it < opts.iters; ++it) {
        ModelParams total = ModelParams::zeros(model.config);
        Real loss = 0.0;
        for (std::size_t b = 0; b < opts.batch; ++b) {
            auto s = task.draw(rng);
            const Tensor context = opts.zero_context ? zeroed(s.context) : s.context;
            const Tensor z0 = rng.normal_tensor(s.z1.rows(), s.z1.cols());
            const Real t = rng.uniform();
            LossAndGrad lg = fm_loss_and_grad(model, s.z1, context, z0, t);
            loss += lg.loss;
            auto dst = total.named();
            auto src = lg.grad.named();
            for (std::size_t i = 0; i < dst.size(); ++i) add_inplace(*dst[i].second, *src[i].second);
        }
        loss *= inv_batch;
        if (!std::isfinite(loss)) {
            throw TrainingError("non-finite loss at iteration " + std::to_string(it));
        }
        losses.push_back(loss);
        auto params = model.params.named();
        auto grads = total.named();
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i].second;
            const Tensor& g = *grads[i].second;
            for (std::size_t j = 0; j < p.size(); ++j) p[j] -= opts.lr * inv_batch * g[j];
        }
    }
    return losses;
}

Real evaluate_loss(const Model& model, const SyntheticTask& task, std::size_t samples,
                   std::uint64_t seed, bool zero_context) {
    Rng rng(seed);
    Real total = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        auto s = task.draw(rng);
        const Tensor context = zero_context ? zeroed(s.context) : s.context;
        total += fm_loss(model, s.z1, context, rng);
    }
    return total / static_cast<Real>(samples);
}

}  // namespace fdt2
