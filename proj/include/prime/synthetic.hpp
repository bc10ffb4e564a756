#pragma once

// Seeded synthetic content: test videos (moving textured shapes over a
// gradient) and target queues (textured noise plus geometric patterns).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "prime/video.hpp"

namespace prime::synthetic {

namespace detail {

inline std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0)); }

inline void check_dims(int width, int height) {
  if (width <= 0 || height <= 0 || width % kBlockSize != 0 || height % kBlockSize != 0) {
    throw ShapeError("synthetic: dimensions " + std::to_string(width) + "x" + std::to_string(height) +
                     " must be positive multiples of 8");
  }
}

struct Shape2d {
  bool circle;
  double cx, cy, vx, vy, size;
  std::array<double, 3> color;
};

}  // namespace detail

inline Video generate_video(std::uint64_t seed, int frames, int width, int height) {
  detail::check_dims(width, height);
  if (frames <= 0) throw std::invalid_argument("synthetic: frame count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  std::array<double, 3> top{}, bottom{};
  for (int c = 0; c < 3; ++c) {
    top[c] = 40 + 170 * u(rng);
    bottom[c] = 40 + 170 * u(rng);
  }
  std::vector<detail::Shape2d> shapes;
  const int count = 2 + static_cast<int>(rng() % 3);
  for (int s = 0; s < count; ++s) {
    shapes.push_back({u(rng) < 0.5, u(rng) * width, u(rng) * height, (u(rng) - 0.5) * 0.12 * width,
                      (u(rng) - 0.5) * 0.12 * height, (0.12 + 0.2 * u(rng)) * std::min(width, height),
                      {255 * u(rng), 255 * u(rng), 255 * u(rng)}});
  }
  // Static per-pixel texture gives shapes and background some detail.
  std::vector<double> texture(static_cast<std::size_t>(width) * height);
  std::normal_distribution<double> grain(0.0, 6.0);
  for (auto& t : texture) t = grain(rng);

  Video v;
  v.fps = {24, 1};
  for (int i = 0; i < frames; ++i) {
    Frame f(width, height);
    for (int y = 0; y < height; ++y) {
      const double a = static_cast<double>(y) / std::max(height - 1, 1);
      for (int x = 0; x < width; ++x) {
        std::array<double, 3> px{};
        for (int c = 0; c < 3; ++c) px[c] = (1 - a) * top[c] + a * bottom[c];
        for (const auto& s : shapes) {
          const double cx = s.cx + s.vx * i, cy = s.cy + s.vy * i;
          const double dx = x - cx, dy = y - cy;
          const bool inside = s.circle ? dx * dx + dy * dy <= s.size * s.size / 4
                                       : std::abs(dx) <= s.size / 2 && std::abs(dy) <= s.size / 3;
          if (inside) {
            const double stripe = 18.0 * std::sin((x + y) * 0.7 + i * 0.3);
            for (int c = 0; c < 3; ++c) px[c] = s.color[c] + stripe;
          }
        }
        const double t = texture[static_cast<std::size_t>(y) * width + x];
        for (int c = 0; c < 3; ++c) f.at(y, x, c) = detail::to_u8(px[c] + t);
      }
    }
    v.frames.push_back(std::move(f));
  }
  return v;
}

/// N target images alternating between smooth colored noise and geometric
/// patterns (stripes, checkerboards, rings).
inline std::vector<Frame> generate_queue(std::uint64_t seed, int count, int width, int height) {
  detail::check_dims(width, height);
  if (count <= 0) throw std::invalid_argument("synthetic: queue size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Frame> out;
  for (int n = 0; n < count; ++n) {
    Frame f(width, height);
    const int kind = n % 4;
    std::array<double, 3> c0{}, c1{};
    for (int c = 0; c < 3; ++c) {
      c0[c] = 255 * u(rng);
      c1[c] = 255 * u(rng);
    }
    const double freq = 0.1 + 0.6 * u(rng), angle = std::numbers::pi * u(rng);
    const int cell = 4 << (rng() % 3);
    // Coarse random grid, bilinearly upsampled, for the noise-texture kind.
    const int gw = 9, gh = 9;
    std::vector<double> grid(static_cast<std::size_t>(gw) * gh * 3);
    for (auto& g : grid) g = 255 * u(rng);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double mix = 0.0;
        switch (kind) {
          case 0: mix = 0.5 + 0.5 * std::sin(freq * (x * std::cos(angle) + y * std::sin(angle))); break;
          case 1: mix = ((x / cell + y / cell) % 2) ? 1.0 : 0.0; break;
          case 2: {
            const double dx = x - width / 2.0, dy = y - height / 2.0;
            mix = 0.5 + 0.5 * std::sin(freq * std::sqrt(dx * dx + dy * dy));
            break;
          }
          default: break;
        }
        for (int c = 0; c < 3; ++c) {
          double v = (1 - mix) * c0[c] + mix * c1[c];
          if (kind == 3) {
            const double gx = static_cast<double>(x) / width * (gw - 1), gy = static_cast<double>(y) / height * (gh - 1);
            const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
            const double fx = gx - ix, fy = gy - iy;
            auto at = [&](int xx, int yy) { return grid[(static_cast<std::size_t>(yy) * gw + xx) * 3 + c]; };
            v = (1 - fx) * (1 - fy) * at(ix, iy) + fx * (1 - fy) * at(ix + 1, iy) + (1 - fx) * fy * at(ix, iy + 1) +
                fx * fy * at(ix + 1, iy + 1);
          }
          f.at(y, x, c) = detail::to_u8(v + 20 * (u(rng) - 0.5));
        }
      }
    out.push_back(std::move(f));
  }
  return out;
}

/// Frame of i.i.d. uniform pixels.
inline Frame noise_frame(std::uint64_t seed, int width, int height) {
  std::mt19937_64 rng(seed);
  Frame f(width, height);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);
  return f;
}

}  // namespace prime::synthetic
