#pragma once

// Weight checkpoint container.
//
// Layout (all integers little-endian):
//   "ITN1" | u32 entry_count | entries...
//   entry: u16 name_len | name (UTF-8) | u8 rank | rank x u32 dims | f32 payload

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pedintent/tensor.hpp"

namespace pedintent {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const NamedTensor&) const = default;
};

using StateDict = std::vector<NamedTensor>;

std::vector<std::uint8_t> encode_checkpoint(const StateDict& state);
StateDict decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const StateDict& state);
StateDict load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the raw file bytes; used to prove files were left untouched.
std::uint64_t file_fingerprint(const std::filesystem::path& path);

}  // namespace pedintent
