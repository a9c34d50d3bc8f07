#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "fdt2/tensor.hpp"

namespace fdt2 {

// SplitMix64 (Steele, Lea, Flood 2014). State advances by the golden-ratio
// increment 0x9E3779B97F4A7C15 and the output is finalized with the
// 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB multiply-xorshift mix. Normals use
// Box-Muller on two uniforms, so draw sequences do not depend on the standard
// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 bits of precision.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);
    double normal();

    Tensor normal_tensor(std::size_t rows, std::size_t cols, double scale = 1.0);

    // Child generator whose stream is independent of further draws from this one.
    Rng split() { return Rng(next_u64()); }

private:
    std::uint64_t state_;
    std::optional<double> spare_normal_;
};

}  // namespace fdt2
