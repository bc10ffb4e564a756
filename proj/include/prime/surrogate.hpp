#pragma once

// A small, deterministic latent-diffusion stand-in: encoder, decoder and a
// noise-predicting U-Net with frozen seeded weights, plus the DDIM machinery
// that turns one image into the feature set compared during protection.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/tensor.hpp"

namespace prime {

/// Cumulative noise schedule abar[0..T] with abar[0] = 1 and strictly
/// decreasing positive entries.
class DiffusionSchedule {
 public:
  DiffusionSchedule() : abar_{1.0} {}

  /// abar_t = prod_{s<=t} (1 - beta_s), betas spaced linearly over `steps`.
  static DiffusionSchedule linear(int steps, double beta_start = 1e-4, double beta_end = 0.02) {
    if (steps < 0) throw std::invalid_argument("schedule: negative step count");
    std::vector<double> abar{1.0};
    for (int t = 0; t < steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
      const double beta = beta_start + frac * (beta_end - beta_start);
      abar.push_back(abar.back() * (1.0 - beta));
    }
    return from_abar(std::move(abar));
  }

  static DiffusionSchedule from_abar(std::vector<double> abar) {
    if (abar.empty() || abar[0] != 1.0) throw std::invalid_argument("schedule: abar[0] must be exactly 1");
    for (std::size_t t = 1; t < abar.size(); ++t) {
      if (!(abar[t] < abar[t - 1]) || !(abar[t] > 0.0)) {
        throw std::invalid_argument("schedule: abar must strictly decrease and stay positive (violated at t=" +
                                    std::to_string(t) + ")");
      }
    }
    DiffusionSchedule s;
    s.abar_ = std::move(abar);
    return s;
  }

  /// Degenerate noise-free schedule (abar == 1 everywhere). Every DDIM update
  /// reduces to the identity; exempt from the monotonicity check.
  static DiffusionSchedule identity(int steps) {
    DiffusionSchedule s;
    s.abar_.assign(static_cast<std::size_t>(steps) + 1, 1.0);
    return s;
  }

  int steps() const { return static_cast<int>(abar_.size()) - 1; }
  double abar(int t) const { return abar_.at(static_cast<std::size_t>(t)); }
  const std::vector<double>& abar() const { return abar_; }

  /// First `t1` steps only (SDEdit-style partial diffusion).
  DiffusionSchedule truncated(int t1) const {
    if (t1 < 0 || t1 > steps()) throw std::invalid_argument("schedule: truncation outside [0,T]");
    DiffusionSchedule s;
    s.abar_.assign(abar_.begin(), abar_.begin() + t1 + 1);
    return s;
  }

 private:
  std::vector<double> abar_;
};

/// The 2T+2 feature tensors of one image.
struct FeatureSet {
  Tensor f_enc;               // encoder latent
  std::vector<Tensor> f_fwd;  // DDIM inversion latents, t = 1..T
  std::vector<Tensor> f_smp;  // DDIM sampling latents, t = T-1..0
  Tensor f_dec;               // decoder output

  std::size_t size() const { return f_fwd.size() + f_smp.size() + 2; }

  std::vector<Tensor> all() const {
    std::vector<Tensor> v{f_enc};
    v.insert(v.end(), f_fwd.begin(), f_fwd.end());
    v.insert(v.end(), f_smp.begin(), f_smp.end());
    v.push_back(f_dec);
    return v;
  }

  FeatureSet detached() const {
    FeatureSet d{f_enc.detach(), {}, {}, f_dec.detach()};
    for (const auto& t : f_fwd) d.f_fwd.push_back(t.detach());
    for (const auto& t : f_smp) d.f_smp.push_back(t.detach());
    return d;
  }
};

struct SurrogateConfig {
  int image_height = 64;
  int image_width = 64;
  int latent_channels = 4;
  int encoder_channels = 8;
  int unet_channels = 16;
  int cond_dim = 8;
  int time_embed_dim = 8;
  // Fixed-point corrections applied to each DDIM inversion step; 0 is the
  // plain reversal that evaluates the noise at the previous latent.
  int inversion_refinements = 6;
  std::uint64_t seed = 1234;
};

class SurrogateLDM {
 public:
  static constexpr int kDownscale = 4;

  explicit SurrogateLDM(SurrogateConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.image_height <= 0 || cfg_.image_width <= 0 || cfg_.image_height % (2 * kDownscale) != 0 ||
        cfg_.image_width % (2 * kDownscale) != 0) {
      throw ShapeError("surrogate: image size " + std::to_string(cfg_.image_width) + "x" +
                       std::to_string(cfg_.image_height) + " must be a positive multiple of 8");
    }
    if (cfg_.inversion_refinements < 0) throw std::invalid_argument("surrogate: negative refinement count");
    std::mt19937_64 rng(cfg_.seed);
    const std::size_t L = cfg_.latent_channels, E = cfg_.encoder_channels, U = cfg_.unet_channels;
    enc1_w_ = init({E, 3, 3, 3}, rng);
    enc1_b_ = init({E}, rng, 0.1);
    enc2_w_ = init({L, E, 3, 3}, rng);
    enc2_b_ = init({L}, rng, 0.1);
    dec1_w_ = init({E, L, 3, 3}, rng);
    dec1_b_ = init({E}, rng, 0.1);
    dec2_w_ = init({3, E, 3, 3}, rng);
    dec2_b_ = init({3}, rng, 0.1);
    unet1_w_ = init({U, L, 3, 3}, rng);
    unet1_b_ = init({1, U}, rng, 0.1);
    time_proj_ = init({static_cast<std::size_t>(cfg_.time_embed_dim), U}, rng);
    cond_proj_ = init({static_cast<std::size_t>(cfg_.cond_dim), U}, rng);
    unet2_w_ = init({U, U, 3, 3}, rng);
    unet2_b_ = init({U}, rng, 0.1);
    unet3_w_ = init({L, U, 3, 3}, rng, 0.5);
    unet3_b_ = init({L}, rng, 0.05);
  }

  const SurrogateConfig& config() const { return cfg_; }
  Shape image_shape() const {
    return {1, 3, static_cast<std::size_t>(cfg_.image_height), static_cast<std::size_t>(cfg_.image_width)};
  }
  Shape latent_shape() const {
    return {1, static_cast<std::size_t>(cfg_.latent_channels),
            static_cast<std::size_t>(cfg_.image_height / kDownscale),
            static_cast<std::size_t>(cfg_.image_width / kDownscale)};
  }

  /// The empty prompt: an all-zero conditioning vector.
  Tensor empty_condition() const { return Tensor::zeros({static_cast<std::size_t>(cfg_.cond_dim)}); }

  /// Image [1,3,H,W] in [-1,1] -> latent [1,L,H/4,W/4].
  Tensor encode(const Tensor& img) const {
    if (img.shape() != image_shape()) {
      throw ShapeError("encode: expected image " + shape_str(image_shape()) + ", got " + shape_str(img.shape()));
    }
    for (double v : img.data()) {
      if (!(v >= -1.0 && v <= 1.0)) throw ContractError("encode: image values must lie in [-1,1]");
    }
    Tensor h = tanh(conv2d(img, enc1_w_, enc1_b_, {2, 1}));
    return tanh(conv2d(h, enc2_w_, enc2_b_, {2, 1}));
  }

  /// Latent -> image in [-1,1] (tanh output).
  Tensor decode(const Tensor& z) const {
    check_latent("decode", z);
    Tensor h = tanh(conv2d(upsample(z, 2), dec1_w_, dec1_b_, {1, 1}));
    return tanh(conv2d(upsample(h, 2), dec2_w_, dec2_b_, {1, 1}));
  }

  /// Noise prediction U(z, t, cond). Timestep and conditioning enter as an
  /// additive per-channel bias on the first layer.
  Tensor predict_noise(const Tensor& z, int t, const Tensor& cond) const {
    check_latent("predict_noise", z);
    if (cond.shape() != Shape{static_cast<std::size_t>(cfg_.cond_dim)}) {
      throw ShapeError("predict_noise: conditioning " + shape_str(cond.shape()) + ", expected [" +
                       std::to_string(cfg_.cond_dim) + "]");
    }
    const std::size_t U = cfg_.unet_channels;
    Tensor emb = add(add(unet1_b_, matmul(time_embedding(t), time_proj_)),
                     matmul(cond.reshape({1, static_cast<std::size_t>(cfg_.cond_dim)}), cond_proj_));
    Tensor h1 = relu(conv2d(z, unet1_w_, emb.reshape({U}), {1, 1}));
    Tensor h2 = relu(conv2d(avg_pool(h1, 2), unet2_w_, unet2_b_, {1, 1}));
    return conv2d(add(upsample(h2, 2), h1), unet3_w_, unet3_b_, {1, 1});
  }

  /// Deterministic DDIM inversion: [z_1, ..., z_T] from z_0.
  std::vector<Tensor> ddim_invert(const Tensor& z0, const DiffusionSchedule& s, const Tensor& cond) const {
    std::vector<Tensor> out;
    Tensor z = z0;
    for (int t = 1; t <= s.steps(); ++t) {
      const auto [c1, c2] = step_coefficients(s, t);
      Tensor next = add(scale(z, c1), scale(predict_noise(z, t, cond), c2));
      for (int r = 0; r < cfg_.inversion_refinements; ++r) {
        next = add(scale(z, c1), scale(predict_noise(next, t, cond), c2));
      }
      out.push_back(next);
      z = next;
    }
    return out;
  }

  /// Deterministic DDIM sampling from z_T: [z_{T-1}, ..., z_0].
  std::vector<Tensor> ddim_sample(const Tensor& zT, const DiffusionSchedule& s, const Tensor& cond) const {
    std::vector<Tensor> out;
    Tensor z = zT;
    for (int t = s.steps(); t >= 1; --t) {
      const auto [c1, c2] = step_coefficients(s, t);
      z = scale(sub(z, scale(predict_noise(z, t, cond), c2)), 1.0 / c1);
      out.push_back(z);
    }
    return out;
  }

  FeatureSet features(const Tensor& img, const DiffusionSchedule& s, const Tensor& cond) const {
    FeatureSet f;
    f.f_enc = encode(img);
    f.f_fwd = ddim_invert(f.f_enc, s, cond);
    f.f_smp = ddim_sample(f.f_fwd.empty() ? f.f_enc : f.f_fwd.back(), s, cond);
    f.f_dec = decode(f.f_smp.empty() ? f.f_enc : f.f_smp.back());
    return f;
  }

  /// One DDIM step between t-1 and t is affine in the latent:
  /// z_t = c1 * z_{t-1} + c2 * eps.
  static std::pair<double, double> step_coefficients(const DiffusionSchedule& s, int t) {
    const double a_prev = s.abar(t - 1), a = s.abar(t);
    const double c1 = std::sqrt(a / a_prev);
    const double c2 = std::sqrt(1.0 - a) - c1 * std::sqrt(1.0 - a_prev);
    return {c1, c2};
  }

 private:
  Tensor time_embedding(int t) const {
    const std::size_t d = cfg_.time_embed_dim;
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      v[i] = i % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq);
    }
    return Tensor::from({1, d}, std::move(v));
  }

  void check_latent(const char* op, const Tensor& z) const {
    if (z.shape() != latent_shape()) {
      throw ShapeError(std::string(op) + ": expected latent " + shape_str(latent_shape()) + ", got " +
                       shape_str(z.shape()));
    }
  }

  // Weights ~ N(0, gain^2 / fan_in). Conv kernels are [out, in, kh, kw],
  // projection matrices [in, out]; vectors use fan_in = 1.
  static Tensor init(Shape shape, std::mt19937_64& rng, double gain = 1.0) {
    const std::size_t n = shape_numel(shape);
    double fan_in = 1.0;
    if (shape.size() == 2) fan_in = static_cast<double>(shape[0]);
    if (shape.size() == 4) fan_in = static_cast<double>(n / shape[0]);
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(fan_in));
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return Tensor::from(std::move(shape), std::move(v));
  }

  SurrogateConfig cfg_;
  Tensor enc1_w_, enc1_b_, enc2_w_, enc2_b_;
  Tensor dec1_w_, dec1_b_, dec2_w_, dec2_b_;
  Tensor unet1_w_, unet1_b_, time_proj_, cond_proj_;
  Tensor unet2_w_, unet2_b_, unet3_w_, unet3_b_;
};

}  // namespace prime
