#pragma once

// Model container, little-endian:
//
//   "S8UV"  u16 version (1)  u16 layer_count
//   per layer:
//     u8 kind tag (LayerSpec alternative index)  u8 precision tag
//     u32 x 6 shape fields: in_channels, in_length, then per kind
//         conv1d  out_ch, kernel, stride, padding
//         maxpool window, stride, 0, 0
//         dropout rate (f32 bit pattern), 0, 0, 0
//         dense   in_dim, out_dim, 0, 0
//         other   0, 0, 0, 0
//     f32 k, W_l, W_h, alpha   u8 n   u8 frac_bits
//     f32 weights (row-major), f32 bias
//   u32 CRC32 of all preceding bytes

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "s8uv/io.hpp"
#include "s8uv/nn.hpp"

namespace s8uv::nn {

inline constexpr std::uint16_t kModelVersion = 1;

inline std::vector<std::uint8_t> encode_model(const ModelSpec& m) {
  const auto shapes = infer_shapes(m);
  if (m.layers.size() > 0xFFFF) fail(ErrorCode::InvalidFormat, "too many layers for the container");
  io::ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>("S8UV"), 4));
  w.u16(kModelVersion);
  w.u16(static_cast<std::uint16_t>(m.layers.size()));
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const Layer& l = m.layers[i];
    if (l.weight_quant.n != l.act_quant.n)
      fail(ErrorCode::InvalidFormat, "layer " + std::to_string(i) + ": container stores one bit width per layer");
    w.u8(static_cast<std::uint8_t>(l.spec.index()));
    w.u8(static_cast<std::uint8_t>(l.precision.kind()));
    std::uint32_t f[6] = {static_cast<std::uint32_t>(shapes[i].channels), static_cast<std::uint32_t>(shapes[i].length),
                          0, 0, 0, 0};
    if (auto* c = std::get_if<Conv1D>(&l.spec)) {
      f[2] = static_cast<std::uint32_t>(c->out_ch);
      f[3] = static_cast<std::uint32_t>(c->kernel);
      f[4] = static_cast<std::uint32_t>(c->stride);
      f[5] = static_cast<std::uint32_t>(c->padding);
    } else if (auto* p = std::get_if<MaxPool1D>(&l.spec)) {
      f[2] = static_cast<std::uint32_t>(p->window);
      f[3] = static_cast<std::uint32_t>(p->stride);
    } else if (auto* d = std::get_if<Dropout>(&l.spec)) {
      f[2] = std::bit_cast<std::uint32_t>(d->rate);
    } else if (auto* dn = std::get_if<Dense>(&l.spec)) {
      f[2] = static_cast<std::uint32_t>(dn->in_dim);
      f[3] = static_cast<std::uint32_t>(dn->out_dim);
    }
    for (auto v : f) w.u32(v);
    w.f32(l.weight_quant.k);
    w.f32(l.weight_quant.w_lo);
    w.f32(l.weight_quant.w_hi);
    w.f32(l.act_quant.alpha);
    w.u8(static_cast<std::uint8_t>(l.weight_quant.n));
    w.u8(l.precision.kind() == PrecisionKind::FXP8 ? static_cast<std::uint8_t>(l.precision.fxp_format().frac_bits) : 0);
    w.f32s(l.weights);
    w.f32s(l.bias);
  }
  return std::move(w).finish_with_crc();
}

inline ModelSpec decode_model(std::span<const std::uint8_t> bytes) {
  return io::decode_checked(bytes, "S8UV", [](io::ByteReader& r) {
    const auto version = r.u16();
    if (version != kModelVersion) fail(ErrorCode::UnsupportedVersion, "model version " + std::to_string(version));
    const auto count = r.u16();
    ModelSpec m;
    std::vector<Shape> declared;
    for (std::size_t i = 0; i < count; ++i) {
      const auto kind = r.u8();
      const auto prec = r.u8();
      std::uint32_t f[6];
      for (auto& v : f) v = r.u32();
      for (int j = 0; j < 4; ++j)
        if (f[j] > (1u << 28) && !(kind == 3 && j == 2)) fail(ErrorCode::InvalidFormat, "implausible shape field in layer " + std::to_string(i));
      if (i == 0) m.input = {f[0], f[1]};
      declared.push_back({f[0], f[1]});
      Layer l;
      switch (kind) {
        case 0: l.spec = Conv1D{f[0], f[2], f[3], f[4], static_cast<Padding>(f[5])}; break;
        case 1: l.spec = ReLU{}; break;
        case 2: l.spec = MaxPool1D{f[2], f[3]}; break;
        case 3: l.spec = Dropout{std::bit_cast<float>(f[2])}; break;
        case 4: l.spec = Flatten{}; break;
        case 5: l.spec = Dense{f[2], f[3]}; break;
        case 6: l.spec = Softmax{}; break;
        default: fail(ErrorCode::InvalidFormat, "unknown layer kind tag " + std::to_string(kind));
      }
      if (kind == 0 && f[5] > 1) fail(ErrorCode::InvalidFormat, "unknown padding tag");
      if (prec > 3) fail(ErrorCode::InvalidFormat, "unknown precision tag " + std::to_string(prec));
      l.weight_quant.k = r.f32();
      l.weight_quant.w_lo = r.f32();
      l.weight_quant.w_hi = r.f32();
      l.act_quant.alpha = r.f32();
      const auto n = r.u8();
      const auto frac = r.u8();
      l.weight_quant.n = n;
      l.act_quant.n = n;
      l.precision = numerics::PrecisionMode::of(static_cast<PrecisionKind>(prec), numerics::Fxp8Format{frac});
      output_shape(l.spec, declared.back());
      const auto nw = expected_weight_count(l.spec);
      const auto nb = expected_bias_count(l.spec);
      r.need((nw + nb) * 4);
      l.weights = r.f32s(nw);
      l.bias = r.f32s(nb);
      m.layers.push_back(std::move(l));
    }
    const auto shapes = infer_shapes(m);
    for (std::size_t i = 0; i < declared.size(); ++i)
      if (declared[i] != shapes[i])
        fail(ErrorCode::InvalidChain, "layer " + std::to_string(i) + " input shape disagrees with the chain");
    return m;
  });
}

inline void save_model(const ModelSpec& m, const std::filesystem::path& path) { io::write_file(path, encode_model(m)); }

inline ModelSpec load_model(const std::filesystem::path& path) { return decode_model(io::read_file(path)); }

}  // namespace s8uv::nn
