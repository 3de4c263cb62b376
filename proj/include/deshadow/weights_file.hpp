#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace deshadow {

/// Named float32 tensors in a flat, framework-neutral binary file:
///
///   "DSWB" | u32 version | u32 count |
///   count x ( u32 name_len | name | u32 ndim | i64 dims[ndim] | f32 data[] )
///
/// All integers and floats little-endian. tools/export_vgg_weights.py writes
/// this format from torchvision checkpoints.
using TensorBundle = std::vector<std::pair<std::string, torch::Tensor>>;

inline constexpr std::uint32_t kWeightsFileVersion = 1;

void write_weights_file(const std::filesystem::path& path, const TensorBundle& tensors);
TensorBundle read_weights_file(const std::filesystem::path& path);

/// Lower-case hex SHA-256 of the file contents.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace deshadow
