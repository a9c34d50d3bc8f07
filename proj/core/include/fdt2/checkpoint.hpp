#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fdt2/model.hpp"
#include "fdt2/tensor.hpp"

namespace fdt2 {

// Binary tensor container, all integers little-endian:
//   "FDT2"  u16 version  u32 tensor_count
//   per tensor: u16 name_len, name (UTF-8), u8 rank, u32 extents[rank],
//               f32 values[product(extents)] (row-major)
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct Checkpoint {
    std::vector<NamedTensor> tensors;

    const Tensor* find(const std::string& name) const;
};

// Values are narrowed to 32-bit floats on encode.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Validates magic, version and exact byte length; throws FormatError.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint checkpoint_from_params(const ModelParams& params);
// Copies every named tensor into params; names and shapes must match exactly.
void load_params(const Checkpoint& ckpt, ModelParams& params);

}  // namespace fdt2
