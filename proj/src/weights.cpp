#include "dps/weights.hpp"

#include <algorithm>

#include "byte_io.hpp"

namespace dps {

const WeightRecord* WeightContainer::find(const std::string& name) const {
  auto it = std::find_if(records.begin(), records.end(),
                         [&](const WeightRecord& r) { return r.name == name; });
  return it == records.end() ? nullptr : &*it;
}

bool operator==(const WeightContainer& a, const WeightContainer& b) {
  return a.backbone_id == b.backbone_id &&
         std::equal(std::begin(a.scaling.shift), std::end(a.scaling.shift),
                    std::begin(b.scaling.shift)) &&
         std::equal(std::begin(a.scaling.scale), std::end(a.scaling.scale),
                    std::begin(b.scaling.scale)) &&
         a.records == b.records;
}

std::vector<std::uint8_t> serialize_weight_container(const WeightContainer& container) {
  if (container.backbone_id.size() > 0xFF) {
    throw Error(ErrorCode::kInvalidArgument, "backbone id longer than 255 bytes");
  }
  detail::ByteWriter w;
  w.bytes(std::string_view(kWeightMagic, 4));
  w.u16(kWeightVersion);
  w.u8(static_cast<std::uint8_t>(container.backbone_id.size()));
  w.bytes(container.backbone_id);
  for (float v : container.scaling.shift) w.f32(v);
  for (float v : container.scaling.scale) w.f32(v);
  w.u32(static_cast<std::uint32_t>(container.records.size()));
  for (const WeightRecord& r : container.records) {
    if (r.name.size() > 0xFFFF) throw Error(ErrorCode::kInvalidArgument, "record name too long");
    if (r.dims.size() > 0xFF) throw Error(ErrorCode::kInvalidArgument, "record rank too large");
    std::size_t count = 1;
    for (auto d : r.dims) count *= d;
    if (count != r.values.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "record " + r.name + ": " + std::to_string(r.values.size()) +
                      " values for dims product " + std::to_string(count));
    }
    w.u16(static_cast<std::uint16_t>(r.name.size()));
    w.bytes(r.name);
    w.u8(static_cast<std::uint8_t>(r.dims.size()));
    for (auto d : r.dims) w.u32(d);
    for (float v : r.values) w.f32(v);
  }
  return std::move(w.buffer());
}

void store_weights(const WeightContainer& container, const std::filesystem::path& path) {
  detail::write_file(path, serialize_weight_container(container));
}

WeightContainer parse_weight_container(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "weight container");
  if (bytes.size() < 4 || r.bytes(4) != std::string_view(kWeightMagic, 4)) {
    throw Error(ErrorCode::kBadMagic, "weight container: bad magic (expected \"DPSW\")");
  }
  const std::uint16_t version = r.u16();
  if (version != kWeightVersion) {
    throw Error(ErrorCode::kVersionMismatch, "weight container: version " + std::to_string(version) +
                                                 " unsupported (expected " +
                                                 std::to_string(kWeightVersion) + ")");
  }
  WeightContainer c;
  c.backbone_id = r.bytes(r.u8());
  for (float& v : c.scaling.shift) v = r.f32();
  for (float& v : c.scaling.scale) v = r.f32();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    WeightRecord rec;
    rec.name = r.bytes(r.u16());
    const std::uint8_t rank = r.u8();
    std::size_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      rec.dims.push_back(r.u32());
      n *= rec.dims.back();
    }
    if (n * 4 > r.remaining()) {
      throw Error(ErrorCode::kTruncated, "weight container: record " + rec.name + " needs " +
                                             std::to_string(n * 4) + " bytes, " +
                                             std::to_string(r.remaining()) + " left");
    }
    rec.values.resize(n);
    r.f32_array(rec.values.data(), n);
    c.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::kParse, "weight container: " + std::to_string(r.remaining()) +
                                       " trailing bytes after last record");
  }
  return c;
}

WeightContainer read_weight_container(const std::filesystem::path& path) {
  try {
    return parse_weight_container(detail::read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace dps
