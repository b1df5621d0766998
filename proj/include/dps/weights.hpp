#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dps/tensor.hpp"

namespace dps {

inline constexpr char kWeightMagic[4] = {'D', 'P', 'S', 'W'};
inline constexpr std::uint16_t kWeightVersion = 1;

struct WeightRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
  friend bool operator==(const WeightRecord&, const WeightRecord&) = default;
};

// On-disk layout, all little-endian:
//   "DPSW" | version u16 | id length u8 + UTF-8 id | 6 x f32 (shift RGB, scale RGB)
//   | record count u32 | per record: name length u16 + UTF-8 name | rank u8
//   | rank x u32 dims | raw f32 values
struct WeightContainer {
  std::string backbone_id;
  InputScaling scaling;
  std::vector<WeightRecord> records;

  const WeightRecord* find(const std::string& name) const;
};

bool operator==(const WeightContainer& a, const WeightContainer& b);

// Byte-level parse only; no backbone validation.
WeightContainer read_weight_container(const std::filesystem::path& path);
WeightContainer parse_weight_container(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> serialize_weight_container(const WeightContainer& container);
void store_weights(const WeightContainer& container, const std::filesystem::path& path);

}  // namespace dps
