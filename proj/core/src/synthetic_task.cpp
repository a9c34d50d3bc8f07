#include "fdt2/synthetic_task.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fdt2/errors.hpp"
#include "fdt2/ops.hpp"

namespace fdt2 {

std::string_view to_string(TaskKind k) {
    switch (k) {
        case TaskKind::copy: return "copy";
        case TaskKind::linear_map: return "linear-map";
        case TaskKind::masked_reconstruction: return "masked-reconstruction";
    }
    return "?";
}

TaskKind parse_task_kind(std::string_view name) {
    for (auto k : {TaskKind::copy, TaskKind::linear_map, TaskKind::masked_reconstruction}) {
        if (to_string(k) == name) return k;
    }
    throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

SyntheticTask::SyntheticTask(TaskKind kind, std::size_t n_z, std::size_t latent_width,
                             std::vector<Segment> contexts, std::uint64_t seed)
    : kind_(kind), n_z_(n_z), latent_(latent_width), contexts_(std::move(contexts)) {
    const std::size_t needed = kind == TaskKind::masked_reconstruction ? 2 : 1;
    if (contexts_.size() < needed) {
        throw ConfigError(std::string(to_string(kind)) + " task needs " + std::to_string(needed) +
                          " context segment(s)");
    }
    for (std::size_t s = 0; s < needed; ++s) {
        if (contexts_[s].length < n_z) {
            throw ConfigError(std::string(to_string(kind)) + " task needs context segment '" +
                              contexts_[s].name + "' to hold at least n_z rows");
        }
    }
    if (kind == TaskKind::linear_map) {
        Rng rng(seed ^ 0x6c696e6561726d61ULL);
        map_ = rng.normal_tensor(latent_, latent_, 1.0 / std::sqrt(static_cast<Real>(latent_)));
    }
}

std::size_t SyntheticTask::n_c() const {
    std::size_t n = 0;
    for (const auto& s : contexts_) n += s.length;
    return n;
}

SyntheticTask::Sample SyntheticTask::draw(Rng& rng) const {
    Tensor context = rng.normal_tensor(n_c(), latent_);
    if (kind_ == TaskKind::masked_reconstruction) {
        const std::size_t second = contexts_[0].length;
        for (std::size_t i = 0; i < n_z_; ++i) {
            const bool in_first = rng.uniform() < 0.5;
            for (std::size_t j = 0; j < latent_; ++j) {
                const Real x = context(i, j);
                context(i, j) = in_first ? x : 0.0;
                context(second + i, j) = in_first ? 0.0 : x;
            }
        }
    }
    Tensor z1 = target_for(context);
    return {std::move(z1), std::move(context)};
}

Tensor SyntheticTask::target_for(const Tensor& context) const {
    if (context.rows() != n_c() || context.cols() != latent_) {
        throw DimensionError("SyntheticTask: context " + context.shape_string());
    }
    Tensor head = slice_rows(context, 0, n_z_);
    switch (kind_) {
        case TaskKind::copy: return head;
        case TaskKind::linear_map: return matmul(head, map_);
        case TaskKind::masked_reconstruction: {
            const std::size_t second = contexts_[0].length;
            add_inplace(head, slice_rows(context, second, second + n_z_));
            return head;
        }
    }
    return head;
}

}  // namespace fdt2
