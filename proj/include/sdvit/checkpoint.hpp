#pragma once

#include <cstdint>
#include <filesystem>

#include "sdvit/vit.hpp"

namespace sdvit {

// Layout (all integers little-endian):
//   "SDVT" | u32 version | u32 json_len | json config |
//   u32 tensor_count | { u16 name_len | name | u8 ndim | ndim x u64 dims | f32 payload }*
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ViTModel& model, const std::filesystem::path& path);

// Throws FormatError (with the byte offset) on bad magic, version, truncation,
// or a tensor set that does not match the stored config.
ViTModel load_checkpoint(const std::filesystem::path& path);

}  // namespace sdvit
