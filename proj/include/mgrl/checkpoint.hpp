#pragma once

#include <cstdint>
#include <filesystem>

#include "mgrl/mlp.hpp"

namespace mgrl {

// Binary layout, all integers and floats little-endian:
//   "MGRLCKPT"  8-byte magic
//   u32 version (1), u32 n_layers, u64 layer_sizes[n_layers], u64 seed, u64 step
//   f64 parameters, per layer: weights (column-major, out x in) then biases
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Mlp<double> net;
    std::uint64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Mlp<double>& net, std::uint64_t step = 0);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace mgrl
