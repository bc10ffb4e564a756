#pragma once

// Command-line front end: gen-synthetic, protect, evaluate, compare.
//
// Every option may also come from a key=value config file (--config);
// options given on the command line win. Exit codes: 0 success, 2 usage or
// path errors, 3 numerical failure, 1 anything else.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prime/codec.hpp"
#include "prime/container.hpp"
#include "prime/embedder.hpp"
#include "prime/metrics.hpp"
#include "prime/perturb.hpp"
#include "prime/surrogate.hpp"
#include "prime/synthetic.hpp"
#include "prime/target_selector.hpp"

namespace prime::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ProtectionConfig protection;
  codec::CodecConfig codec;
  std::uint64_t seed = 2024;
  std::uint64_t model_seed = 1234;
  std::uint64_t embedder_seed = 99;

  std::string input;
  std::string output;
  std::string target_dir;
  std::string reference;
  bool edit = false;

  int queue_size = 16;
  int edit_steps = 4;     // editor's diffusion schedule length
  int edit_strength = 3;  // noising depth used by the editor

  int frames = 4;
  int width = 64;
  int height = 64;

  // Derived seeds keep the independent random streams apart.
  std::uint64_t queue_seed() const { return seed + 1; }
  std::uint64_t codec_seed() const { return seed + 2; }
  std::uint64_t edit_seed() const { return seed + 3; }
  std::uint64_t edit_condition_seed() const { return seed + 4; }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

inline void require_readable(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string("missing required ") + flag);
  if (!std::filesystem::is_regular_file(path)) throw UsageError(std::string(flag) + ": no such file '" + path + "'");
}

inline void require_output(const std::string& path) {
  if (path.empty()) throw UsageError("missing required --output");
}

inline std::filesystem::path prepare_output_dir(const std::string& path) {
  require_output(path);
  std::filesystem::path dir(path);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw UsageError("--output: cannot create directory '" + path + "'");
  return dir;
}

inline SurrogateLDM make_model(const RunConfig& cfg, const Video& v) {
  SurrogateConfig sc;
  sc.image_width = v.width();
  sc.image_height = v.height();
  sc.seed = cfg.model_seed;
  return SurrogateLDM(sc);
}

inline Embedder make_embedder(const RunConfig& cfg) {
  EmbedderConfig ec;
  ec.seed = cfg.embedder_seed;
  return Embedder(ec);
}

// Every file in the directory (sorted by name) is read as a container; all
// of their frames join the queue.
inline TargetQueue load_queue(const RunConfig& cfg, const Video& v, const Embedder& embedder) {
  if (cfg.target_dir.empty()) {
    if (cfg.queue_size < 1) throw UsageError("--queue-size must be at least 1");
    return TargetQueue::build(synthetic::generate_queue(cfg.queue_seed(), cfg.queue_size, v.width(), v.height()),
                              embedder);
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(cfg.target_dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Frame> images;
  for (const auto& f : files) {
    Video tv = read_frames(f.string());
    for (auto& frame : tv.frames) {
      if (!frame.same_dims(v.frames[0])) {
        throw UsageError("--target-dir: '" + f.string() + "' has frames of " + std::to_string(frame.width) + "x" +
                         std::to_string(frame.height) + ", video is " + std::to_string(v.width()) + "x" +
                         std::to_string(v.height()));
      }
      images.push_back(std::move(frame));
    }
  }
  if (images.empty()) throw UsageError("--target-dir: no target images in '" + cfg.target_dir + "'");
  return TargetQueue::build(std::move(images), embedder);
}

inline void validate_target_dir(const RunConfig& cfg) {
  if (!cfg.target_dir.empty() && !std::filesystem::is_directory(cfg.target_dir)) {
    throw UsageError("--target-dir: no such directory '" + cfg.target_dir + "'");
  }
}

inline nlohmann::json frame_record(std::size_t i, const FrameResult& r) {
  return {{"frame", i},
          {"target_index", r.target_index},
          {"target_score", r.target_score},
          {"steps_used", r.steps_used},
          {"initial_loss", r.initial_loss},
          {"final_loss", r.final_loss},
          {"stop_reason", to_string(r.stop_reason)},
          {"max_abs_delta", r.delta.max_abs()},
          {"c_trace", r.c_trace}};
}

inline void write_log(const std::filesystem::path& path, const std::vector<FrameResult>& results) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  for (std::size_t i = 0; i < results.size(); ++i) os << frame_record(i, results[i]).dump() << '\n';
}

inline Video protected_video(const Video& source, const std::vector<FrameResult>& results) {
  Video v;
  v.fps = source.fps;
  for (const auto& r : results) v.frames.push_back(r.protected_frame);
  return v;
}

inline Video edit(const RunConfig& cfg, const SurrogateLDM& model, const Video& v) {
  if (cfg.edit_steps < 0 || cfg.edit_strength < 0 || cfg.edit_strength > cfg.edit_steps) {
    throw UsageError("--edit-strength must lie in [0, --edit-steps]");
  }
  const auto schedule = DiffusionSchedule::linear(cfg.edit_steps);
  const auto cond = metrics::edit_condition(model.config().cond_dim, cfg.edit_condition_seed());
  return metrics::surrogate_edit(v, model, schedule, cond, cfg.edit_strength, cfg.edit_seed());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << text;
}

}  // namespace detail

inline int cmd_gen_synthetic(const RunConfig& cfg, Context ctx) {
  detail::require_output(cfg.output);
  if (cfg.frames < 1) throw UsageError("--frames must be at least 1");
  if (cfg.width <= 0 || cfg.height <= 0 || cfg.width % kBlockSize != 0 || cfg.height % kBlockSize != 0) {
    throw UsageError("--width/--height must be positive multiples of 8, got " + std::to_string(cfg.width) + "x" +
                     std::to_string(cfg.height));
  }
  const Video v = synthetic::generate_video(cfg.seed, cfg.frames, cfg.width, cfg.height);
  write_frames(v, cfg.output);
  ctx.out << "wrote " << v.size() << " frames (" << cfg.width << "x" << cfg.height << ") to " << cfg.output << '\n';
  return kExitOk;
}

inline int cmd_protect(const RunConfig& cfg, Context ctx) {
  detail::require_readable(cfg.input, "--input");
  detail::require_output(cfg.output);
  detail::validate_target_dir(cfg);
  cfg.protection.validate();

  const Video video = read_frames(cfg.input);
  const SurrogateLDM model = detail::make_model(cfg, video);
  const Embedder embedder = detail::make_embedder(cfg);
  const TargetQueue queue = detail::load_queue(cfg, video, embedder);
  const auto dir = detail::prepare_output_dir(cfg.output);

  std::vector<FrameResult> results;
  try {
    results = protect_video(video, queue, model, embedder, cfg.protection);
  } catch (const ProtectionAborted& e) {
    detail::write_log(dir / "protect_log.jsonl", e.partial());
    throw;
  }
  write_frames(detail::protected_video(video, results), (dir / "protected.prmv").string());
  detail::write_log(dir / "protect_log.jsonl", results);

  int total = 0;
  for (const auto& r : results) total += r.steps_used;
  ctx.out << "protected " << results.size() << " frames in " << total << " steps (mode "
          << to_string(cfg.protection.mode) << ") -> " << (dir / "protected.prmv").string() << '\n';
  return kExitOk;
}

// --input is the protected (edited) video and --reference the clean one.
// With --edit both are first run through the surrogate editor.
inline int cmd_evaluate(const RunConfig& cfg, Context ctx) {
  detail::require_readable(cfg.input, "--input");
  detail::require_readable(cfg.reference, "--reference");
  detail::require_output(cfg.output);

  Video prot = read_frames(cfg.input);
  Video clean = read_frames(cfg.reference);
  if (prot.size() != clean.size() || !prot.frames[0].same_dims(clean.frames[0])) {
    throw UsageError("evaluate: videos differ in frame count or dimensions");
  }
  const Embedder embedder = detail::make_embedder(cfg);
  if (cfg.edit) {
    const SurrogateLDM model = detail::make_model(cfg, clean);
    prot = detail::edit(cfg, model, prot);
    clean = detail::edit(cfg, model, clean);
  }
  const auto report = metrics::evaluate(prot, clean, embedder);
  const auto dir = detail::prepare_output_dir(cfg.output);
  std::ostringstream text, table;
  metrics::write_report_text(text, report);
  metrics::write_report_table(table, report);
  detail::write_text(dir / "report.txt", text.str());
  detail::write_text(dir / "report.tsv", table.str());
  ctx.out << text.str();
  return kExitOk;
}

struct CompareRow {
  ProtectionMode mode;
  int total_steps = 0;
  double bitrate_proxy = 0.0;
  metrics::MetricReport report;
};

// Runs all three modes under identical seeds. Protected videos pass through
// the codec and the surrogate editor; metrics compare against the edit of the
// equally compressed clean video.
inline int cmd_compare(const RunConfig& cfg, Context ctx) {
  detail::require_readable(cfg.input, "--input");
  detail::require_output(cfg.output);
  detail::validate_target_dir(cfg);
  cfg.protection.validate();
  cfg.codec.validate();

  const Video video = read_frames(cfg.input);
  const SurrogateLDM model = detail::make_model(cfg, video);
  const Embedder embedder = detail::make_embedder(cfg);
  const TargetQueue queue = detail::load_queue(cfg, video, embedder);
  const auto dir = detail::prepare_output_dir(cfg.output);

  codec::CodecConfig codec_cfg = cfg.codec;
  codec_cfg.variable_seed = cfg.codec_seed();
  const auto clean_compressed = codec::compress_video(video, codec_cfg);
  const Video clean_edit = detail::edit(cfg, model, clean_compressed.video);

  std::vector<CompareRow> rows;
  for (auto mode : {ProtectionMode::prime, ProtectionMode::photoguard_diffusion, ProtectionMode::photoguard_encoder}) {
    ProtectionConfig pc = cfg.protection;
    pc.mode = mode;
    const auto results = protect_video(video, queue, model, embedder, pc);
    detail::write_log(dir / (std::string("log_") + to_string(mode) + ".jsonl"), results);
    const auto compressed = codec::compress_video(detail::protected_video(video, results), codec_cfg);
    CompareRow row{mode, 0, compressed.bitrate_proxy, metrics::evaluate(detail::edit(cfg, model, compressed.video),
                                                                        clean_edit, embedder)};
    for (const auto& r : results) row.total_steps += r.steps_used;
    rows.push_back(std::move(row));
  }

  std::ostringstream table;
  table << std::setprecision(10);
  table << "mode\ttotal_steps\tbitrate_proxy\tbitrate_delta_pct\tmean_psnr\tmean_ssim\tembed_sim\n";
  for (const auto& r : rows) {
    const double delta_pct = 100.0 * (r.bitrate_proxy - clean_compressed.bitrate_proxy) / clean_compressed.bitrate_proxy;
    table << to_string(r.mode) << '\t' << r.total_steps << '\t' << r.bitrate_proxy << '\t' << delta_pct << '\t'
          << r.report.mean_psnr << '\t' << r.report.mean_ssim << '\t' << r.report.embed_sim << '\n';
  }
  detail::write_text(dir / "compare.tsv", table.str());
  ctx.out << "clean bitrate_proxy " << std::setprecision(10) << clean_compressed.bitrate_proxy << '\n' << table.str();
  return kExitOk;
}

enum class Command { none, gen_synthetic, protect, evaluate, compare };

// Registers every option on `app`. Options live on the top-level app (with
// subcommand fallthrough) so a flat key=value config file can set them.
inline void register_options(CLI::App& app, RunConfig& cfg, Command& cmd, std::string& mode, std::string& codec_mode) {
  app.set_config("--config", "", "key=value configuration file; command-line flags take precedence");
  app.add_option("--input", cfg.input, "Input video container");
  app.add_option("--output", cfg.output, "Output path (file for gen-synthetic, directory otherwise)");
  app.add_option("--target-dir", cfg.target_dir, "Directory of target-image containers (default: synthetic queue)");
  app.add_option("--reference", cfg.reference, "Reference (clean) video for evaluate");
  app.add_flag("--edit", cfg.edit, "Run both evaluate inputs through the surrogate editor first");
  app.add_option("--epsilon", cfg.protection.epsilon, "Perturbation budget in pixel units")->capture_default_str();
  app.add_option("--steps", cfg.protection.max_steps, "Maximum optimization steps per frame (K)")->capture_default_str();
  app.add_option("--diffusion-steps", cfg.protection.diffusion_steps, "DDIM steps per direction (T)")
      ->capture_default_str();
  app.add_option("--quant-step", cfg.protection.quant_step, "Pixel quantization step")->capture_default_str();
  app.add_option("--step-size", cfg.protection.step_size, "Signed-gradient step in pixel units")->capture_default_str();
  app.add_option("--patience", cfg.protection.patience, "Non-improving steps before early stop")->capture_default_str();
  app.add_option("--stop-tolerance", cfg.protection.stop_tolerance, "Minimal decrease that counts as progress")
      ->capture_default_str();
  app.add_option("--mode", mode, "prime | photoguard_diffusion | photoguard_encoder")->capture_default_str();
  app.add_option("--codec-quality", cfg.codec.quality, "Codec quality 0-100")->capture_default_str();
  app.add_option("--codec-mode", codec_mode, "constant_q | variable")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Master seed")->envname("PRIME_SEED")->capture_default_str();
  app.add_option("--model-seed", cfg.model_seed, "Surrogate model seed")->capture_default_str();
  app.add_option("--embedder-seed", cfg.embedder_seed, "Embedder seed")->capture_default_str();
  app.add_option("--queue-size", cfg.queue_size, "Synthetic target queue size")->capture_default_str();
  app.add_option("--edit-steps", cfg.edit_steps, "Surrogate editor schedule length")->capture_default_str();
  app.add_option("--edit-strength", cfg.edit_strength, "Surrogate editor noising depth")->capture_default_str();
  app.add_option("--frames", cfg.frames, "Frames to generate")->capture_default_str();
  app.add_option("--width", cfg.width, "Frame width (multiple of 8)")->capture_default_str();
  app.add_option("--height", cfg.height, "Frame height (multiple of 8)")->capture_default_str();

  app.add_subcommand("gen-synthetic", "Write a seeded synthetic video")->fallthrough()->callback([&cmd] {
    cmd = Command::gen_synthetic;
  });
  app.add_subcommand("protect", "Protect every frame of a video")->fallthrough()->callback([&cmd] {
    cmd = Command::protect;
  });
  app.add_subcommand("evaluate", "PSNR/SSIM/embedding similarity between two videos")->fallthrough()->callback([&cmd] {
    cmd = Command::evaluate;
  });
  app.add_subcommand("compare", "Run all protection modes and tabulate cost, bitrate and metrics")
      ->fallthrough()
      ->callback([&cmd] { cmd = Command::compare; });
  app.require_subcommand(1);
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig cfg;
  Command cmd = Command::none;
  std::string mode = to_string(cfg.protection.mode);
  std::string codec_mode = codec::to_string(cfg.codec.rate_mode);
  CLI::App app{"Adversarial video protection against latent-diffusion editing", "prime"};
  register_options(app, cfg, cmd, mode, codec_mode);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  Context ctx{out, err};
  try {
    cfg.protection.mode = parse_mode(mode);
    cfg.codec.rate_mode = codec::parse_rate_mode(codec_mode);
    switch (cmd) {
      case Command::gen_synthetic: return cmd_gen_synthetic(cfg, ctx);
      case Command::protect: return cmd_protect(cfg, ctx);
      case Command::evaluate: return cmd_evaluate(cfg, ctx);
      case Command::compare: return cmd_compare(cfg, ctx);
      case Command::none: break;
    }
    err << "error: no subcommand\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    // ConfigError, ShapeError and bad option values.
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ProtectionAborted& e) {
    err << "error: " << e.what() << '\n';
    return e.numerical() ? kExitNumerical : kExitFailure;
  } catch (const OptimizationDivergedError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace prime::cli
