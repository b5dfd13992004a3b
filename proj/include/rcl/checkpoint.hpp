#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "rcl/models.hpp"

namespace rcl {

// Little-endian binary layout:
//   "RRLB" | u32 version | u8 encoder kind | u32 rank, u32 input dims... |
//   u32 n_widths, u32 widths... | u32 n_classes | u32 head_dim |
//   u64 rng_seed | u8 freeze_encoder |
//   3 x (u32 n_tensors, then per tensor: u32 rank, u32 dims..., f64 data...)
// Tensor groups are encoder, head, classifier.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ModelBundle& model);
ModelBundle deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const ModelBundle& model, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace rcl
