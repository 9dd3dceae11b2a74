#pragma once

// RIFF/WAVE, PCM 16-bit mono only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "s8uv/io.hpp"

namespace s8uv::wav {

struct Audio {
  std::vector<float> samples;  // [-1, 1)
  std::uint32_t sample_rate_hz = 0;
};

inline Audio decode(std::span<const std::uint8_t> bytes, std::optional<std::uint32_t> expected_rate = std::nullopt) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(ErrorCode::UnsupportedAudio, "not a RIFF/WAVE stream");
  io::ByteReader r(bytes.subspan(12));
  Audio a;
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    char id[4];
    for (char& c : id) c = static_cast<char>(r.u8());
    const std::uint32_t size = r.u32();
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) fail(ErrorCode::UnsupportedAudio, "short fmt chunk");
      r.need(size);
      const auto format = r.u16();
      const auto channels = r.u16();
      a.sample_rate_hz = r.u32();
      r.u32();
      r.u16();
      const auto bits = r.u16();
      for (std::uint32_t i = 16; i < size; ++i) r.u8();
      if (format != 1 || channels != 1 || bits != 16)
        fail(ErrorCode::UnsupportedAudio, "only PCM 16-bit mono is supported");
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) fail(ErrorCode::UnsupportedAudio, "data chunk before fmt chunk");
      const std::uint32_t usable = std::min<std::size_t>(size, r.remaining()) & ~1u;
      a.samples.resize(usable / 2);
      for (float& s : a.samples) s = static_cast<float>(static_cast<std::int16_t>(r.u16())) / 32768.0f;
      break;
    } else {
      r.need(size + (size & 1));
      for (std::uint32_t i = 0; i < size + (size & 1); ++i) r.u8();
    }
  }
  if (!have_fmt) fail(ErrorCode::UnsupportedAudio, "missing fmt chunk");
  if (expected_rate && *expected_rate != a.sample_rate_hz)
    fail(ErrorCode::SampleRateMismatch, std::to_string(a.sample_rate_hz) + " Hz, expected " +
                                            std::to_string(*expected_rate) + " Hz (resampling is not supported)");
  return a;
}

inline std::vector<std::uint8_t> encode(std::span<const float> samples, std::uint32_t rate) {
  io::ByteWriter w;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>("RIFF"), 4));
  w.u32(36 + data_bytes);
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>("WAVEfmt "), 8));
  w.u32(16);
  w.u16(1);
  w.u16(1);
  w.u32(rate);
  w.u32(rate * 2);
  w.u16(2);
  w.u16(16);
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>("data"), 4));
  w.u32(data_bytes);
  for (float s : samples) {
    const double v = std::nearbyint(std::clamp(static_cast<double>(s), -1.0, 1.0) * 32767.0);
    w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  return w.buffer();
}

inline Audio read(const std::filesystem::path& p, std::optional<std::uint32_t> expected_rate = std::nullopt) {
  return decode(io::read_file(p), expected_rate);
}

inline void write(const std::filesystem::path& p, std::span<const float> samples, std::uint32_t rate) {
  io::write_file(p, encode(samples, rate));
}

}  // namespace s8uv::wav
