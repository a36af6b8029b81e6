#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "magshift/autodiff.hpp"

namespace magshift {

// Flat named-tensor container, little-endian throughout:
//   magic "MSCK" (4 bytes), version byte (1), u32 entry count, then per entry
//   u16 name length, name bytes, u8 rank, u64 per dimension, f64 per value.
struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

void save_checkpoint(const std::filesystem::path& path,
                     std::span<const NamedTensor> tensors);

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace magshift
