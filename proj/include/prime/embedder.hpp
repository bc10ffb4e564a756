#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/tensor.hpp"
#include "prime/video.hpp"

namespace prime {

class UndefinedSimilarityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Cosine similarity of two equal-length vectors, clamped to [-1,1].
inline double sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("sim: length mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw UndefinedSimilarityError("sim: similarity with a zero vector is undefined");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Latent similarity: flattens both tensors.
inline double sim(const Tensor& a, const Tensor& b) { return sim(a.data(), b.data()); }

struct EmbeddingVector {
  std::vector<double> values;
  bool unit_norm = false;
};

inline double sim(const EmbeddingVector& a, const EmbeddingVector& b) { return sim(a.values, b.values); }

struct EmbedderConfig {
  int grid = 8;          // frames are area-pooled onto a grid x grid x 3 input
  int hidden = 128;
  int dimension = 64;
  std::uint64_t seed = 99;
};

/// Frozen stand-in for a CLIP image encoder: area pooling onto a fixed grid,
/// two bias-free random projections with a tanh between, L2 normalization.
/// Works at any frame size whose sides are multiples of the grid.
class Embedder {
 public:
  explicit Embedder(EmbedderConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.grid <= 0 || cfg_.hidden <= 0 || cfg_.dimension <= 0) {
      throw std::invalid_argument("embedder: sizes must be positive");
    }
    std::mt19937_64 rng(cfg_.seed);
    const std::size_t in = input_size();
    w1_ = random_matrix(static_cast<std::size_t>(cfg_.hidden), in, rng);
    w2_ = random_matrix(static_cast<std::size_t>(cfg_.dimension), static_cast<std::size_t>(cfg_.hidden), rng);
  }

  const EmbedderConfig& config() const { return cfg_; }
  std::size_t input_size() const { return static_cast<std::size_t>(cfg_.grid) * cfg_.grid * kChannels; }

  EmbeddingVector embed(const Frame& f) const {
    const int g = cfg_.grid;
    if (f.width <= 0 || f.height <= 0 || f.width % g != 0 || f.height % g != 0) {
      throw ShapeError("embed: frame " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                       " is not a multiple of the " + std::to_string(g) + "-cell grid");
    }
    const int cw = f.width / g, ch = f.height / g;
    const double inv = 1.0 / (static_cast<double>(cw) * ch);
    std::vector<double> pooled(input_size(), 0.0);
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x)
        for (int c = 0; c < kChannels; ++c)
          pooled[(static_cast<std::size_t>(c) * g + y / ch) * g + x / cw] += pixel_to_model(f.at(y, x, c)) * inv;

    std::vector<double> hidden = apply(w1_, cfg_.hidden, pooled);
    for (auto& h : hidden) h = std::tanh(h);
    EmbeddingVector e{apply(w2_, cfg_.dimension, hidden), true};
    double norm = 0.0;
    for (double v : e.values) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw UndefinedSimilarityError("embed: frame maps to the zero embedding");
    for (auto& v : e.values) v /= norm;
    return e;
  }

 private:
  static std::vector<double> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
    std::vector<double> m(rows * cols);
    for (auto& v : m) v = dist(rng);
    return m;
  }

  static std::vector<double> apply(const std::vector<double>& m, int rows, const std::vector<double>& x) {
    std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
    for (std::size_t r = 0; r < out.size(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < x.size(); ++c) s += m[r * x.size() + c] * x[c];
      out[r] = s;
    }
    return out;
  }

  EmbedderConfig cfg_;
  std::vector<double> w1_, w2_;
};

}  // namespace prime
