#pragma once

// Feature dataset file, little-endian:
//
//   "S8FV"  u16 version (1)  u8 feature kind  u32 record length  u32 record count
//   per record: f32 x length, u8 label (0 background, 1 UAV)
//   u32 CRC32 of all preceding bytes
//
// Kind 4 (raw) holds 0.8 s audio segments; their sample rate is
// record_length / 0.8.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "s8uv/dsp.hpp"
#include "s8uv/io.hpp"

namespace s8uv::dsp {

inline constexpr std::uint16_t kDatasetVersion = 1;

struct Dataset {
  FeatureKind kind = FeatureKind::Mel128;
  std::size_t record_length = 0;
  std::vector<std::vector<float>> records;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return records.size(); }

  void add(std::vector<float> values, std::uint8_t label) {
    if (label > 1) fail(ErrorCode::InvalidFormat, "label must be 0 or 1");
    if (records.empty() && record_length == 0) record_length = values.size();
    if (values.size() != record_length)
      fail(ErrorCode::ShapeMismatch, "record of length " + std::to_string(values.size()) + " in a dataset of length " +
                                         std::to_string(record_length));
    records.push_back(std::move(values));
    labels.push_back(label);
  }

  std::uint32_t raw_sample_rate() const {
    if (kind != FeatureKind::RawAudio) fail(ErrorCode::InvalidFormat, "dataset does not hold raw audio");
    return static_cast<std::uint32_t>(std::llround(static_cast<double>(record_length) / kSegmentSeconds));
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
  if (d.records.size() != d.labels.size()) fail(ErrorCode::ShapeMismatch, "records and labels differ in count");
  io::ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>("S8FV"), 4));
  w.u16(kDatasetVersion);
  w.u8(static_cast<std::uint8_t>(d.kind));
  w.u32(static_cast<std::uint32_t>(d.record_length));
  w.u32(static_cast<std::uint32_t>(d.records.size()));
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    if (d.records[i].size() != d.record_length) fail(ErrorCode::ShapeMismatch, "ragged record " + std::to_string(i));
    w.f32s(d.records[i]);
    w.u8(d.labels[i]);
  }
  return std::move(w).finish_with_crc();
}

inline Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  return io::decode_checked(bytes, "S8FV", [](io::ByteReader& r) {
    const auto version = r.u16();
    if (version != kDatasetVersion) fail(ErrorCode::UnsupportedVersion, "dataset version " + std::to_string(version));
    Dataset d;
    const auto kind = r.u8();
    if (kind > static_cast<std::uint8_t>(FeatureKind::RawAudio))
      fail(ErrorCode::InvalidFormat, "unknown feature kind tag " + std::to_string(kind));
    d.kind = static_cast<FeatureKind>(kind);
    d.record_length = r.u32();
    const std::size_t count = r.u32();
    const std::size_t per = d.record_length * 4 + 1;
    if (count > r.remaining() / per) fail(ErrorCode::TruncatedFile, std::to_string(count) + " records do not fit");
    d.records.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      d.records.push_back(r.f32s(d.record_length));
      const auto label = r.u8();
      if (label > 1) fail(ErrorCode::InvalidFormat, "label " + std::to_string(label) + " in record " + std::to_string(i));
      d.labels.push_back(label);
    }
    return d;
  });
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& p) { io::write_file(p, encode_dataset(d)); }

inline Dataset load_dataset(const std::filesystem::path& p) { return decode_dataset(io::read_file(p)); }

}  // namespace s8uv::dsp
