#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/tensor.hpp"

namespace prime {

inline constexpr int kChannels = 3;
inline constexpr int kBlockSize = 8;

/// An RGB frame, 8 bits per channel, stored row-major with interleaved
/// channels (HWC). The pixel type makes the [0,255] range structural.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Frame() = default;
  Frame(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * kChannels, 0) {}
  Frame(int w, int h, std::vector<std::uint8_t> px) : width(w), height(h), pixels(std::move(px)) {
    if (pixels.size() != size()) throw ShapeError("frame: pixel buffer does not match dimensions");
  }

  std::size_t size() const { return static_cast<std::size_t>(width) * height * kChannels; }

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }

  bool same_dims(const Frame& o) const { return width == o.width && height == o.height; }
  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Rational {
  std::uint32_t num = 24;
  std::uint32_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

struct Video {
  std::vector<Frame> frames;
  Rational fps;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }

  // Throws unless the video is nonempty and every frame shares dimensions.
  void validate() const {
    if (frames.empty()) throw std::invalid_argument("video: no frames");
    for (std::size_t i = 1; i < frames.size(); ++i) {
      if (!frames[i].same_dims(frames[0])) {
        throw ShapeError("video: frame " + std::to_string(i) + " is " + std::to_string(frames[i].width) +
                         "x" + std::to_string(frames[i].height) + ", expected " +
                         std::to_string(frames[0].width) + "x" + std::to_string(frames[0].height));
      }
    }
    if (fps.num == 0 || fps.den == 0) throw std::invalid_argument("video: fps must be positive");
  }

  friend bool operator==(const Video&, const Video&) = default;
};

// Replicates the last row/column so both dimensions become multiples of the
// codec block size.
inline Frame pad_to_block(const Frame& f) {
  const int w = (f.width + kBlockSize - 1) / kBlockSize * kBlockSize;
  const int h = (f.height + kBlockSize - 1) / kBlockSize * kBlockSize;
  if (w == f.width && h == f.height) return f;
  Frame out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < kChannels; ++c) out.at(y, x, c) = f.at(std::min(y, f.height - 1), std::min(x, f.width - 1), c);
  return out;
}

// Pixel <-> model space. The model sees NCHW tensors in [-1,1].
inline double pixel_to_model(double p) { return p / 127.5 - 1.0; }

inline std::uint8_t model_to_pixel(double v) {
  double p = std::nearbyint((v + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(p, 0.0, 255.0));
}

inline Tensor frame_to_tensor(const Frame& f, bool requires_grad = false) {
  const std::size_t H = f.height, W = f.width;
  std::vector<double> v(3 * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) v[(c * H + y) * W + x] = pixel_to_model(f.pixels[(y * W + x) * 3 + c]);
  return Tensor::from(Shape{1, 3, H, W}, std::move(v), requires_grad);
}

// Same layout as frame_to_tensor, but from real-valued pixel intensities.
inline Tensor pixels_to_tensor(std::span<const double> px, int width, int height, bool requires_grad = false) {
  const std::size_t H = height, W = width;
  if (px.size() != 3 * H * W) throw ShapeError("pixels_to_tensor: buffer does not match dimensions");
  std::vector<double> v(3 * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) v[(c * H + y) * W + x] = pixel_to_model(px[(y * W + x) * 3 + c]);
  return Tensor::from(Shape{1, 3, H, W}, std::move(v), requires_grad);
}

inline Frame tensor_to_frame(const Tensor& t) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 3) {
    throw ShapeError("tensor_to_frame: expected [1,3,H,W], got " + shape_str(t.shape()));
  }
  const std::size_t H = t.dim(2), W = t.dim(3);
  Frame f(static_cast<int>(W), static_cast<int>(H));
  auto d = t.data();
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) f.pixels[(y * W + x) * 3 + c] = model_to_pixel(d[(c * H + y) * W + x]);
  return f;
}

// Reorders a [1,3,H,W] gradient back into the frame's HWC pixel order.
inline std::vector<double> tensor_to_hwc(std::span<const double> nchw, int width, int height) {
  const std::size_t H = height, W = width;
  std::vector<double> out(3 * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) out[(y * W + x) * 3 + c] = nchw[(c * H + y) * W + x];
  return out;
}

}  // namespace prime
