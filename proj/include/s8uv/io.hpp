#pragma once

// Little-endian byte packing, CRC32 trailers and whole-file helpers shared by
// the binary container formats.

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "s8uv/error.hpp"

namespace s8uv::io {

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = ::crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void f32s(std::span<const float> v) {
    for (float x : v) f32(x);
  }

  /// Appends CRC32 of everything written so far and hands the buffer over.
  std::vector<std::uint8_t> finish_with_crc() && {
    u32(crc32(buf_));
    return std::move(buf_);
  }

  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : buf_(b) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::vector<float> f32s(std::size_t n) {
    need(n * 4);
    std::vector<float> out(n);
    for (auto& x : out) x = f32();
    return out;
  }

  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n)
      fail(ErrorCode::TruncatedFile, "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ", " +
                                         std::to_string(buf_.size() - pos_) + " left");
  }
  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

/// Checks magic, runs `parse` on the body and verifies the CRC32 trailer.
/// Running out of bytes is TruncatedFile; any other damage is
/// ChecksumMismatch unless the CRC still matches.
template <class ParseBody>
auto decode_checked(std::span<const std::uint8_t> bytes, const char (&magic)[5], ParseBody&& parse) {
  if (bytes.size() < 4) fail(ErrorCode::TruncatedFile, "file shorter than its magic");
  if (std::memcmp(bytes.data(), magic, 4) != 0) fail(ErrorCode::BadMagic, std::string("expected magic ") + magic);
  const auto crc_ok = [&] {
    if (bytes.size() < 8) return false;
    const auto* t = bytes.data() + bytes.size() - 4;
    const std::uint32_t stored = t[0] | (t[1] << 8) | (t[2] << 16) | (static_cast<std::uint32_t>(t[3]) << 24);
    return stored == crc32(bytes.first(bytes.size() - 4));
  };
  ByteReader r(bytes.subspan(4));
  auto value = [&] {
    try {
      return parse(r);
    } catch (const Error& e) {
      // a corrupted header field can make the body look malformed
      if (e.code() != ErrorCode::TruncatedFile && !crc_ok()) fail(ErrorCode::ChecksumMismatch, e.detail());
      throw;
    }
  }();
  if (r.remaining() < 4) fail(ErrorCode::TruncatedFile, "missing CRC32 trailer");
  if (r.remaining() > 4) fail(ErrorCode::ChecksumMismatch, "unexpected bytes after the body");
  if (!crc_ok()) fail(ErrorCode::ChecksumMismatch, "CRC32 does not match contents");
  return value;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "short write to " + p.string());
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string read_text(const std::filesystem::path& p) {
  const auto b = read_file(p);
  return {b.begin(), b.end()};
}

}  // namespace s8uv::io
