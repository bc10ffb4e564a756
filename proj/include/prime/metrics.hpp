#pragma once

// Quality metrics between edited videos, and the surrogate editor that
// produces them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/embedder.hpp"
#include "prime/surrogate.hpp"
#include "prime/video.hpp"

namespace prime::metrics {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(255^2 / MSE); +inf for identical frames.
inline double psnr(const Frame& a, const Frame& b) {
  if (!a.same_dims(b)) throw ShapeError("psnr: frame dimensions differ");
  double se = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.pixels.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline double capped(double psnr_db) { return std::min(psnr_db, kPsnrCap); }

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = (0.01 * 255) * (0.01 * 255);
inline constexpr double kSsimC2 = (0.03 * 255) * (0.03 * 255);

inline const std::array<double, kSsimWindow>& gaussian_window() {
  static const auto w = [] {
    std::array<double, kSsimWindow> g{};
    double total = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double x = i - kSsimWindow / 2;
      g[i] = std::exp(-x * x / (2 * kSsimSigma * kSsimSigma));
      total += g[i];
    }
    for (auto& v : g) v /= total;
    return g;
  }();
  return w;
}

namespace detail {

// Valid-mode separable Gaussian filter of a single plane.
inline std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h) {
  const auto& g = gaussian_window();
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * plane[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace detail

/// Gaussian-window SSIM (11x11, sigma 1.5), averaged over all valid window
/// positions, then over channels.
inline double ssim(const Frame& a, const Frame& b) {
  if (!a.same_dims(b)) throw ShapeError("ssim: frame dimensions differ");
  if (a.width < kSsimWindow || a.height < kSsimWindow) {
    throw ShapeError("ssim: frames must be at least 11x11, got " + std::to_string(a.width) + "x" +
                     std::to_string(a.height));
  }
  const int w = a.width, h = a.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  double total = 0.0;
  for (int c = 0; c < kChannels; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.pixels[i * kChannels + c];
      y[i] = b.pixels[i * kChannels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = detail::filter_valid(x, w, h), my = detail::filter_valid(y, w, h);
    const auto sxx = detail::filter_valid(xx, w, h), syy = detail::filter_valid(yy, w, h);
    const auto sxy = detail::filter_valid(xy, w, h);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + kSsimC1) * (2 * cov + kSsimC2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + kSsimC1) * (vx + vy + kSsimC2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / kChannels;
}

/// Stand-in "malicious prompt": a fixed, nonzero conditioning vector.
inline Tensor edit_condition(int cond_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(cond_dim));
  for (auto& x : v) x = dist(rng) + 0.5;
  const std::size_t n = v.size();
  return Tensor::from({n}, std::move(v));
}

/// SDEdit-style per-frame edit: encode, noise the latent to `strength_steps`
/// with seeded Gaussian noise, DDIM-sample back under `cond`, decode.
inline Video surrogate_edit(const Video& video, const SurrogateLDM& model, const DiffusionSchedule& schedule,
                            const Tensor& cond, int strength_steps, std::uint64_t seed) {
  video.validate();
  if (strength_steps < 0 || strength_steps > schedule.steps()) {
    throw std::invalid_argument("surrogate_edit: strength_steps " + std::to_string(strength_steps) +
                                " outside [0," + std::to_string(schedule.steps()) + "]");
  }
  const DiffusionSchedule partial = schedule.truncated(strength_steps);
  const double a = partial.abar(strength_steps);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Video out;
  out.fps = video.fps;
  for (const auto& f : video.frames) {
    const Tensor z0 = model.encode(frame_to_tensor(f));
    Tensor z = z0;
    if (strength_steps > 0) {
      std::vector<double> v(z0.numel());
      auto zd = z0.data();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(a) * zd[i] + std::sqrt(1.0 - a) * noise(rng);
      const auto traj = model.ddim_sample(Tensor::from(z0.shape(), std::move(v)), partial, cond);
      z = traj.back();
    }
    out.frames.push_back(tensor_to_frame(model.decode(z)));
  }
  return out;
}

struct MetricReport {
  std::vector<double> psnr_per_frame;  // may contain +inf for identical frames
  std::vector<double> ssim_per_frame;
  std::vector<double> embed_sim_per_frame;
  double mean_psnr = 0.0;  // mean of per-frame values capped at kPsnrCap
  double mean_ssim = 0.0;
  double embed_sim = 0.0;
};

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Per-frame metrics of `protected_edit` against the reference `clean_edit`.
inline MetricReport evaluate(const Video& protected_edit, const Video& clean_edit, const Embedder& embedder) {
  if (protected_edit.size() != clean_edit.size()) {
    throw std::invalid_argument("evaluate: frame counts differ (" + std::to_string(protected_edit.size()) + " vs " +
                                std::to_string(clean_edit.size()) + ")");
  }
  protected_edit.validate();
  clean_edit.validate();
  MetricReport r;
  std::vector<double> capped_psnr;
  for (std::size_t i = 0; i < protected_edit.size(); ++i) {
    const Frame& p = protected_edit.frames[i];
    const Frame& c = clean_edit.frames[i];
    r.psnr_per_frame.push_back(psnr(p, c));
    capped_psnr.push_back(capped(r.psnr_per_frame.back()));
    r.ssim_per_frame.push_back(ssim(p, c));
    r.embed_sim_per_frame.push_back(sim(embedder.embed(p), embedder.embed(c)));
  }
  r.mean_psnr = mean(capped_psnr);
  r.mean_ssim = mean(r.ssim_per_frame);
  r.embed_sim = mean(r.embed_sim_per_frame);
  return r;
}

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// key=value lines.
inline void write_report_text(std::ostream& os, const MetricReport& r) {
  os << "frames=" << r.psnr_per_frame.size() << '\n';
  os << "mean_psnr=" << format_number(r.mean_psnr) << '\n';
  os << "mean_ssim=" << format_number(r.mean_ssim) << '\n';
  os << "embed_sim=" << format_number(r.embed_sim) << '\n';
  for (std::size_t i = 0; i < r.psnr_per_frame.size(); ++i) {
    os << "psnr." << i << '=' << format_number(r.psnr_per_frame[i]) << '\n';
    os << "ssim." << i << '=' << format_number(r.ssim_per_frame[i]) << '\n';
  }
}

/// Tab-separated per-frame table with a header row.
inline void write_report_table(std::ostream& os, const MetricReport& r) {
  os << "frame\tpsnr\tssim\tembed_sim\n";
  for (std::size_t i = 0; i < r.psnr_per_frame.size(); ++i) {
    os << i << '\t' << format_number(r.psnr_per_frame[i]) << '\t' << format_number(r.ssim_per_frame[i]) << '\t'
       << format_number(r.embed_sim_per_frame[i]) << '\n';
  }
}

}  // namespace prime::metrics
