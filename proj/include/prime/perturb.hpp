#pragma once

// Per-frame adversarial perturbation under an l-inf pixel budget.
//
// The optimizer keeps a real-valued pixel-space perturbation, evaluates the
// model on its quantized projection and steps along the sign of the loss
// gradient (the projection counts as identity on the backward pass). In
// `prime` mode each frame's target comes from the target selector and the
// loop stops once the latent similarity to already protected frames stalls.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/embedder.hpp"
#include "prime/surrogate.hpp"
#include "prime/target_selector.hpp"
#include "prime/tensor.hpp"
#include "prime/video.hpp"

namespace prime {

enum class ProtectionMode { prime, photoguard_diffusion, photoguard_encoder };

inline const char* to_string(ProtectionMode m) {
  switch (m) {
    case ProtectionMode::prime: return "prime";
    case ProtectionMode::photoguard_diffusion: return "photoguard_diffusion";
    case ProtectionMode::photoguard_encoder: return "photoguard_encoder";
  }
  return "?";
}

inline ProtectionMode parse_mode(const std::string& s) {
  if (s == "prime") return ProtectionMode::prime;
  if (s == "photoguard_diffusion") return ProtectionMode::photoguard_diffusion;
  if (s == "photoguard_encoder") return ProtectionMode::photoguard_encoder;
  throw ConfigError("unknown mode '" + s + "' (expected prime, photoguard_diffusion or photoguard_encoder)");
}

struct ProtectionConfig {
  int epsilon = 8;              // l-inf budget, pixel units
  int max_steps = 100;          // K
  int diffusion_steps = 2;      // T, per direction
  int quant_step = 2;           // pixel quantization granularity
  double step_size = 1.0;       // pixel units per signed-gradient step
  int patience = 5;             // non-improving steps tolerated before stopping
  double stop_tolerance = 1e-4; // minimal decrease of c that counts as progress
  ProtectionMode mode = ProtectionMode::prime;

  void validate() const {
    if (epsilon < 0 || epsilon > 255) throw ConfigError("epsilon must lie in [0,255]");
    if (quant_step < 1 || quant_step > 255) throw ConfigError("quant_step must lie in [1,255]");
    if (epsilon % quant_step != 0) {
      throw ConfigError("epsilon " + std::to_string(epsilon) + " is not a multiple of quant_step " +
                        std::to_string(quant_step));
    }
    if (max_steps < 1) throw ConfigError("max_steps (K) must be at least 1");
    if (diffusion_steps < 0) throw ConfigError("diffusion_steps (T) must be non-negative");
    if (!(step_size > 0.0)) throw ConfigError("step_size must be positive");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (!(stop_tolerance >= 0.0)) throw ConfigError("stop_tolerance must be non-negative");
  }

  // Baselines save plain 8-bit images, i.e. perturbations rounded to whole
  // pixel values; only prime quantizes more coarsely.
  int effective_quant_step() const { return mode == ProtectionMode::prime ? quant_step : 1; }
  bool early_stopping() const { return mode == ProtectionMode::prime; }
};

class OptimizationDivergedError : public std::runtime_error {
 public:
  explicit OptimizationDivergedError(int step)
      : std::runtime_error("optimization diverged: non-finite loss at step " + std::to_string(step)), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct Perturbation {
  std::vector<int> delta;  // HWC, pixel units
  int quant_step = 1;
  bool quantized = false;

  int max_abs() const {
    int m = 0;
    for (int d : delta) m = std::max(m, d < 0 ? -d : d);
    return m;
  }

  Frame apply(const Frame& f) const {
    if (f.size() != delta.size()) throw ShapeError("perturbation: size does not match frame");
    Frame out = f;
    for (std::size_t i = 0; i < delta.size(); ++i) {
      out.pixels[i] = static_cast<std::uint8_t>(std::clamp(static_cast<int>(f.pixels[i]) + delta[i], 0, 255));
    }
    return out;
  }
};

/// Rounds to the nearest multiple of `quant_step` (ties to even), clips to
/// [-epsilon, epsilon], then to the largest quantized range keeping the pixel
/// inside [0,255].
inline int project_value(std::uint8_t pixel, double raw, int epsilon, int quant_step) {
  const double q = quant_step;
  double m = std::nearbyint(raw / q) * q;
  m = std::clamp(m, -static_cast<double>(epsilon), static_cast<double>(epsilon));
  const int lo = -((pixel / quant_step) * quant_step);
  const int hi = ((255 - pixel) / quant_step) * quant_step;
  return std::clamp(static_cast<int>(m), lo, hi);
}

inline Perturbation project(const Frame& frame, std::span<const double> raw_delta, int epsilon, int quant_step) {
  if (raw_delta.size() != frame.size()) {
    throw ShapeError("project: delta of " + std::to_string(raw_delta.size()) + " values for frame of " +
                     std::to_string(frame.size()));
  }
  Perturbation p{std::vector<int>(raw_delta.size()), quant_step, quant_step > 1};
  for (std::size_t i = 0; i < raw_delta.size(); ++i) {
    p.delta[i] = project_value(frame.pixels[i], raw_delta[i], epsilon, quant_step);
  }
  return p;
}

inline Perturbation project(const Frame& frame, std::span<const double> raw_delta, const ProtectionConfig& cfg) {
  return project(frame, raw_delta, cfg.epsilon, cfg.quant_step);
}

namespace detail {

inline void require_same_structure(const FeatureSet& a, const FeatureSet& b) {
  if (a.f_fwd.size() != b.f_fwd.size() || a.f_smp.size() != b.f_smp.size()) {
    throw ContractError("loss: feature sets differ in diffusion step count");
  }
}

}  // namespace detail

/// Sum of L1 distances over all 2T+2 feature pairs.
inline Tensor prime_loss(const FeatureSet& f, const FeatureSet& target) {
  detail::require_same_structure(f, target);
  Tensor loss = add(l1_sum(f.f_enc, target.f_enc), l1_sum(f.f_dec, target.f_dec));
  for (std::size_t t = 0; t < f.f_fwd.size(); ++t) {
    loss = add(loss, add(l1_sum(f.f_fwd[t], target.f_fwd[t]), l1_sum(f.f_smp[t], target.f_smp[t])));
  }
  return loss;
}

/// Photoguard-style objectives: decoder output only (diffusion attack) or
/// encoder latent only (encoder attack).
inline Tensor baseline_loss(const FeatureSet& f, const FeatureSet& target, ProtectionMode mode) {
  switch (mode) {
    case ProtectionMode::photoguard_diffusion: return l1_sum(f.f_dec, target.f_dec);
    case ProtectionMode::photoguard_encoder: return l1_sum(f.f_enc, target.f_enc);
    case ProtectionMode::prime: break;
  }
  throw ContractError("baseline_loss: mode must be photoguard_diffusion or photoguard_encoder");
}

inline Tensor latent_of(const Frame& f, const SurrogateLDM& model) { return model.encode(frame_to_tensor(f)); }

/// Largest latent similarity between `candidate` and any earlier protected
/// frame. With no history, similarity to the clean frame's latent.
inline double early_stop_metric(const Tensor& candidate_latent, std::span<const Tensor> history_latents,
                                const Tensor& clean_latent) {
  if (history_latents.empty()) return sim(candidate_latent, clean_latent);
  double c = -1.0;
  for (const auto& h : history_latents) c = std::max(c, sim(candidate_latent, h));
  return c;
}

inline double early_stop_metric(const Frame& candidate, std::span<const Frame> protected_so_far, const Frame& clean,
                                const SurrogateLDM& model) {
  std::vector<Tensor> hist;
  hist.reserve(protected_so_far.size());
  for (const auto& f : protected_so_far) hist.push_back(latent_of(f, model));
  return early_stop_metric(latent_of(candidate, model), hist, latent_of(clean, model));
}

/// Windowed non-decrease rule: stop once `patience` consecutive values fail
/// to undercut the best value so far by at least `tolerance`.
class StallDetector {
 public:
  StallDetector(int patience, double tolerance) : patience_(patience), tolerance_(tolerance) {}

  bool update(double c) {
    if (!seen_ || c < best_ - tolerance_) {
      best_ = c;
      seen_ = true;
      stale_ = 0;
    } else {
      ++stale_;
    }
    return stale_ >= patience_;
  }

 private:
  int patience_;
  double tolerance_;
  double best_ = 0.0;
  bool seen_ = false;
  int stale_ = 0;
};

/// True when replaying the rule over `trace` fires exactly at its last entry.
inline bool stall_fires_at_end(std::span<const double> trace, int patience, double tolerance) {
  StallDetector d(patience, tolerance);
  for (std::size_t k = 0; k < trace.size(); ++k) {
    if (d.update(trace[k])) return k + 1 == trace.size();
  }
  return false;
}

enum class StopReason { converged, budget_exhausted };

inline const char* to_string(StopReason r) { return r == StopReason::converged ? "converged" : "budget_exhausted"; }

struct FrameResult {
  Frame protected_frame;
  Perturbation delta;
  int steps_used = 0;
  double initial_loss = 0.0;  // loss at the unperturbed frame
  double final_loss = 0.0;    // loss at protected_frame
  StopReason stop_reason = StopReason::budget_exhausted;
  std::size_t target_index = 0;
  double target_score = 0.0;
  std::vector<double> c_trace;
};

namespace detail {

inline Tensor mode_loss(const SurrogateLDM& model, const Tensor& img, const FeatureSet& target,
                        const DiffusionSchedule& schedule, const Tensor& cond, ProtectionMode mode) {
  if (mode == ProtectionMode::photoguard_encoder) {
    // Only the encoder term contributes, so skip the diffusion passes.
    return l1_sum(model.encode(img), target.f_enc);
  }
  FeatureSet f = model.features(img, schedule, cond);
  return mode == ProtectionMode::prime ? prime_loss(f, target) : baseline_loss(f, target, mode);
}

}  // namespace detail

inline FrameResult protect_frame(const Frame& frame, const Frame& target, std::span<const Frame> history,
                                 const SurrogateLDM& model, const ProtectionConfig& cfg) {
  cfg.validate();
  if (!frame.same_dims(target)) throw ShapeError("protect_frame: target and frame dimensions differ");
  const DiffusionSchedule schedule = DiffusionSchedule::linear(cfg.diffusion_steps);
  const Tensor cond = model.empty_condition();
  const int qstep = cfg.effective_quant_step();

  const FeatureSet target_features = model.features(frame_to_tensor(target), schedule, cond).detached();
  std::vector<Tensor> history_latents;
  history_latents.reserve(history.size());
  for (const auto& h : history) history_latents.push_back(latent_of(h, model));
  const Tensor clean_latent = latent_of(frame, model);

  std::vector<double> raw(frame.size(), 0.0);
  std::vector<double> perturbed(frame.size());
  FrameResult result;
  StallDetector stall(cfg.patience, cfg.stop_tolerance);
  Perturbation current = project(frame, raw, cfg.epsilon, qstep);

  for (int k = 1; k <= cfg.max_steps; ++k) {
    for (std::size_t i = 0; i < raw.size(); ++i) perturbed[i] = frame.pixels[i] + current.delta[i];
    Tensor img = pixels_to_tensor(perturbed, frame.width, frame.height, true);
    Tensor loss = detail::mode_loss(model, img, target_features, schedule, cond, cfg.mode);
    if (!std::isfinite(loss.item())) throw OptimizationDivergedError(k);
    if (k == 1) result.initial_loss = loss.item();
    backward(loss);

    // d/d(pixel) differs from d/d(model input) by a positive factor, so the
    // sign is unchanged.
    const std::vector<double> grad = tensor_to_hwc(img.grad(), frame.width, frame.height);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double g = grad[i];
      raw[i] -= cfg.step_size * (g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0));
      raw[i] = std::clamp(raw[i], -static_cast<double>(cfg.epsilon), static_cast<double>(cfg.epsilon));
      raw[i] = std::clamp(raw[i], -static_cast<double>(frame.pixels[i]), 255.0 - frame.pixels[i]);
    }
    current = project(frame, raw, cfg.epsilon, qstep);

    const Frame candidate = current.apply(frame);
    const double c = early_stop_metric(latent_of(candidate, model), history_latents, clean_latent);
    result.c_trace.push_back(c);
    result.steps_used = k;
    if (stall.update(c) && cfg.early_stopping()) {
      result.stop_reason = StopReason::converged;
      break;
    }
  }

  result.protected_frame = current.apply(frame);
  result.delta = std::move(current);
  const Tensor final_loss =
      detail::mode_loss(model, frame_to_tensor(result.protected_frame), target_features, schedule, cond, cfg.mode);
  result.final_loss = final_loss.item();
  if (!std::isfinite(result.final_loss)) throw OptimizationDivergedError(result.steps_used);
  return result;
}

class ProtectionAborted : public std::runtime_error {
 public:
  ProtectionAborted(const std::string& what, std::size_t frame_index, std::vector<FrameResult> partial,
                    bool numerical)
      : std::runtime_error("frame " + std::to_string(frame_index) + ": " + what),
        frame_index_(frame_index),
        partial_(std::move(partial)),
        numerical_(numerical) {}

  std::size_t frame_index() const { return frame_index_; }
  const std::vector<FrameResult>& partial() const { return partial_; }
  bool numerical() const { return numerical_; }

 private:
  std::size_t frame_index_;
  std::vector<FrameResult> partial_;
  bool numerical_;
};

/// Protects every frame in order. In prime mode each frame's target is
/// selected against the previous choice; baselines reuse queue image 0 as
/// their fixed target. Earlier protected frames form the stopping history.
inline std::vector<FrameResult> protect_video(const Video& video, const TargetQueue& queue, const SurrogateLDM& model,
                                              const Embedder& embedder, const ProtectionConfig& cfg) {
  video.validate();
  cfg.validate();
  if (queue.size() == 0) throw ConfigError("protect_video: target queue is empty");

  std::vector<FrameResult> results;
  std::vector<Frame> protected_frames;
  std::optional<TargetChoice> prev;
  for (std::size_t i = 0; i < video.size(); ++i) {
    const Frame& x = video.frames[i];
    try {
      TargetChoice choice{0, 0.0, i};
      if (cfg.mode == ProtectionMode::prime) choice = select(x, prev, queue, embedder);
      FrameResult r = protect_frame(x, queue.images.at(choice.index), protected_frames, model, cfg);
      r.target_index = choice.index;
      r.target_score = choice.score;
      protected_frames.push_back(r.protected_frame);
      results.push_back(std::move(r));
      prev = choice;
    } catch (const OptimizationDivergedError& e) {
      throw ProtectionAborted(e.what(), i, std::move(results), true);
    } catch (const std::exception& e) {
      throw ProtectionAborted(e.what(), i, std::move(results), false);
    }
  }
  return results;
}

}  // namespace prime
