#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "fdt2/attention.hpp"
#include "fdt2/rng.hpp"
#include "fdt2/tensor.hpp"

namespace fdt2 {

enum class TaskKind { copy, linear_map, masked_reconstruction };

std::string_view to_string(TaskKind k);
TaskKind parse_task_kind(std::string_view name);

// Desk-scale conditioning tasks. Contexts are drawn at random; the clean
// target is a fixed function of the context (and of the task seed for the
// linear map):
//   copy                   z1 = first n_z rows of segment 0
//   linear_map             z1 = (first n_z rows of segment 0) * M
//   masked_reconstruction  segments 0 and 1 carry complementary row masks of
//                          one signal x; z1 = x
class SyntheticTask {
public:
    SyntheticTask(TaskKind kind, std::size_t n_z, std::size_t latent_width,
                  std::vector<Segment> contexts, std::uint64_t seed);

    struct Sample {
        Tensor z1;       // n_z x latent
        Tensor context;  // n_c x latent
    };

    Sample draw(Rng& rng) const;
    Tensor target_for(const Tensor& context) const;

    TaskKind kind() const { return kind_; }
    std::size_t n_c() const;

private:
    TaskKind kind_;
    std::size_t n_z_;
    std::size_t latent_;
    std::vector<Segment> contexts_;
    Tensor map_;  // latent x latent, linear_map only
};

}  // namespace fdt2
