#pragma once

// Simplified intra-only lossy codec: per 8x8 block and channel, orthonormal
// DCT-II, quality-scaled quantization, rounding, dequantization, inverse DCT.
// Frame size is reported through a coefficient bit-count proxy rather than a
// real entropy-coded stream.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/video.hpp"

namespace prime::codec {

using Block = std::array<double, 64>;
using QuantTable = std::array<int, 64>;

// Standard JPEG luminance table (ITU-T T.81, Annex K), row-major.
inline constexpr QuantTable kBaseTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

enum class RateMode { constant_q, variable };

struct CodecConfig {
  int quality = 75;  // 0..100, 100 = lossless passthrough
  RateMode rate_mode = RateMode::constant_q;
  std::uint64_t variable_seed = 0;

  void validate() const {
    if (quality < 0 || quality > 100) {
      throw std::invalid_argument("codec: quality " + std::to_string(quality) + " outside [0,100]");
    }
  }
};

inline QuantTable quant_table(int quality) {
  if (quality < 0 || quality > 100) throw std::invalid_argument("codec: quality outside [0,100]");
  const int q = std::max(quality, 1);  // q=0 behaves as q=1, as in libjpeg
  const int scale = q < 50 ? 5000 / q : 200 - 2 * q;
  QuantTable t{};
  for (int i = 0; i < 64; ++i) t[i] = std::clamp((kBaseTable[i] * scale + 50) / 100, 1, 255);
  return t;
}

// Orthonormal DCT-II basis, basis()[u][x] = a(u) cos((2x+1) u pi / 16).
inline const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> m{};
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x) {
        const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
        m[u][x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    return m;
  }();
  return basis;
}

// Separable forward transform: C * B * C^T.
inline Block dct2d(const Block& b) {
  const auto& C = dct_basis();
  Block tmp{}, out{};
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += C[u][y] * b[y * 8 + x];
      tmp[u * 8 + x] = s;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += tmp[u * 8 + x] * C[v][x];
      out[u * 8 + v] = s;
    }
  return out;
}

inline Block idct2d(const Block& c) {
  const auto& C = dct_basis();
  Block tmp{}, out{};
  for (int y = 0; y < 8; ++y)
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += C[u][y] * c[u * 8 + v];
      tmp[y * 8 + v] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += tmp[y * 8 + v] * C[v][x];
      out[y * 8 + x] = s;
    }
  return out;
}

// Bits charged for one quantized coefficient: zero is free; otherwise
// magnitude bits + sign bit + 4 bits of run-length overhead.
inline std::int64_t coefficient_bits(std::int64_t level) {
  if (level == 0) return 0;
  const auto mag = static_cast<std::uint64_t>(level < 0 ? -level : level);
  return static_cast<std::int64_t>(std::bit_width(mag)) + 1 + 4;
}

struct CompressedFrame {
  Frame frame;
  std::int64_t size_bits = 0;
};

inline CompressedFrame compress_frame(const Frame& f, int quality) {
  const QuantTable table = quant_table(quality);
  if (f.width % kBlockSize != 0 || f.height % kBlockSize != 0) {
    throw ShapeError("codec: frame " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                     " is not a multiple of the 8x8 block size");
  }
  const bool passthrough = quality == 100;
  CompressedFrame out{f, 0};
  for (int by = 0; by < f.height; by += 8)
    for (int bx = 0; bx < f.width; bx += 8)
      for (int c = 0; c < kChannels; ++c) {
        Block b{};
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) b[y * 8 + x] = f.at(by + y, bx + x, c);
        Block coef = dct2d(b);
        for (int i = 0; i < 64; ++i) {
          const double level = std::round(coef[i] / table[i]);
          out.size_bits += coefficient_bits(static_cast<std::int64_t>(level));
          coef[i] = level * table[i];
        }
        if (passthrough) continue;
        const Block rec = idct2d(coef);
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            out.frame.at(by + y, bx + x, c) =
                static_cast<std::uint8_t>(std::clamp(std::round(rec[y * 8 + x]), 0.0, 255.0));
          }
      }
  return out;
}

// Per-frame qualities for a video. Variable mode jitters around the nominal
// quality by up to +-10, drawn up front from the seed.
inline std::vector<int> frame_qualities(const CodecConfig& cfg, std::size_t n) {
  cfg.validate();
  std::vector<int> q(n, cfg.quality);
  if (cfg.rate_mode == RateMode::variable) {
    std::mt19937_64 rng(cfg.variable_seed);
    for (auto& v : q) v = std::clamp(cfg.quality + static_cast<int>(rng() % 21) - 10, 0, 100);
  }
  return q;
}

struct CompressedVideo {
  Video video;
  std::vector<int> qualities;
  std::vector<std::int64_t> frame_bits;
  double bitrate_proxy = 0.0;  // proxy bits per second
};

inline CompressedVideo compress_video(const Video& v, const CodecConfig& cfg) {
  v.validate();
  CompressedVideo out;
  out.qualities = frame_qualities(cfg, v.size());
  out.video.fps = v.fps;
  std::int64_t total = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto cf = compress_frame(v.frames[i], out.qualities[i]);
    total += cf.size_bits;
    out.frame_bits.push_back(cf.size_bits);
    out.video.frames.push_back(std::move(cf.frame));
  }
  const double duration = static_cast<double>(v.size()) / v.fps.value();
  out.bitrate_proxy = static_cast<double>(total) / duration;
  return out;
}

inline RateMode parse_rate_mode(const std::string& s) {
  if (s == "constant_q" || s == "constant") return RateMode::constant_q;
  if (s == "variable") return RateMode::variable;
  throw std::invalid_argument("unknown codec mode '" + s + "' (expected constant_q or variable)");
}

inline const char* to_string(RateMode m) { return m == RateMode::constant_q ? "constant_q" : "variable"; }

}  // namespace prime::codec
