// pandora: zero-shot object removal on a deterministic toy denoiser.
// Subcommands: run (single removal), sweep (percentile ablation),
// verify (built-in invariant suite).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "pandora/errors.hpp"
#include "pandora/image_io.hpp"
#include "pandora/masking.hpp"
#include "pandora/pipeline.hpp"
#include "pandora/scheduler.hpp"
#include "pandora/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace pandora;

namespace {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("PANDORA_LOG");
    if (!env) return LogLevel::kError;
    const std::string v = env;
    if (v == "debug") return LogLevel::kDebug;
    if (v == "info") return LogLevel::kInfo;
    return LogLevel::kError;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::kInfo) std::fprintf(stderr, "[info] %s\n", msg.c_str());
}
void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::kDebug) std::fprintf(stderr, "[debug] %s\n", msg.c_str());
}

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitIo = 2;
constexpr int kExitPipeline = 3;

struct CommonOpts {
  std::string image_path;
  std::string mask_path;
  std::string out_dir;
  int steps = 50;
  double alpha = 1.3;
  double alpha_end = std::numeric_limits<double>::quiet_NaN();
  int active_steps = 45;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string cache_trace;
};

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--image", o.image_path, "Input image (8-bit PGM or PNG, 1 or 3 channels, square power-of-two side >= 8)")
      ->required();
  cmd->add_option("--mask", o.mask_path, "Object mask, same dimensions as the image (grayscale; pixel > 127 marks the object)")
      ->required();
  cmd->add_option("--out", o.out_dir, "Output directory")->required();
  cmd->add_option("--steps", o.steps, "Denoising step count")->capture_default_str();
  cmd->add_option("--alpha", o.alpha, "Guidance weight (constant schedule)")->capture_default_str();
  cmd->add_option("--alpha-end", o.alpha_end, "Guidance weight at the last step; enables the linear schedule from --alpha");
  cmd->add_option("--active-steps", o.active_steps, "Number of initial denoising iterations with BPA/PAD active")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Denoiser weight seed")->capture_default_str();
  cmd->add_option("--jobs", o.jobs, "Concurrent runs (sweep only)")->capture_default_str();
  cmd->add_option("--cache-trace", o.cache_trace, "Inversion trace cache file; loaded when present, written otherwise");
}

// Pixel values map linearly to [-1, 1] per channel; the inverse clamps.
LatentGrid image_to_latent(const Image& img) {
  LatentGrid g = LatentGrid::zeros(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const std::uint8_t px =
            img.pixels[(size_t(y) * img.width + x) * img.channels + c];
        g.at(c, y, x) = double(px) / 255.0 * 2.0 - 1.0;
      }
    }
  }
  return g;
}

Image latent_to_image(const LatentGrid& g) {
  Image img;
  img.width = g.width;
  img.height = g.height;
  img.channels = g.channels;
  img.pixels.resize(size_t(g.width) * g.height * g.channels);
  for (int c = 0; c < g.channels; ++c) {
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const double v = std::clamp((g.at(c, y, x) + 1.0) / 2.0, 0.0, 1.0);
        img.pixels[(size_t(y) * g.width + x) * g.channels + c] =
            std::uint8_t(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

struct LoadedInputs {
  Image image;
  LatentGrid latent;
  ObjectMask mask;
};

LoadedInputs load_inputs(const CommonOpts& o) {
  LoadedInputs in;
  in.image = read_image(o.image_path);
  if (in.image.channels != 1 && in.image.channels != 3) {
    throw IoError(o.image_path + ": expected 1 or 3 channels");
  }
  const int side = in.image.width;
  if (in.image.height != side || side < 8 || (side & (side - 1)) != 0) {
    throw IoError(o.image_path + ": image must be square with power-of-two side >= 8");
  }
  in.mask = load_mask_file(o.mask_path);
  if (in.mask.width != in.image.width || in.mask.height != in.image.height) {
    throw IoError(o.mask_path + ": mask dimensions do not match the image");
  }
  if (!in.mask.any_background()) {
    throw IoError(o.mask_path + ": mask has no background pixels");
  }
  in.latent = image_to_latent(in.image);
  return in;
}

RemovalConfig make_config(const CommonOpts& o) {
  if (o.steps < 1) throw IoError("--steps must be at least 1");
  if (o.active_steps < 0) throw IoError("--active-steps must be non-negative");
  if (o.jobs < 1) throw IoError("--jobs must be at least 1");
  RemovalConfig cfg;
  cfg.steps = o.steps;
  cfg.alpha.alpha_start = o.alpha;
  if (std::isnan(o.alpha_end)) {
    cfg.alpha.mode = AlphaMode::kConstant;
    cfg.alpha.alpha_end = o.alpha;
  } else {
    cfg.alpha.mode = AlphaMode::kLinear;
    cfg.alpha.alpha_end = o.alpha_end;
  }
  cfg.active_steps = o.active_steps;
  cfg.seed = o.seed;
  return cfg;
}

// Loads the cached trace when the file exists (validating it against the
// run), otherwise inverts and optionally writes the cache.
InversionTrace obtain_trace(const CommonOpts& o, const LatentGrid& latent,
                            const Denoiser& denoiser) {
  if (!o.cache_trace.empty() && fs::exists(o.cache_trace)) {
    log_info("loading inversion trace from " + o.cache_trace);
    InversionTrace trace = load_trace(o.cache_trace);
    if (trace.steps() != o.steps || !trace.latents.front().same_shape(latent)) {
      throw IoError(o.cache_trace + ": cached trace does not match this run (steps/shape)");
    }
    if ((trace.latents.front().data != latent.data).any()) {
      throw IoError(o.cache_trace + ": cached trace was computed for a different image");
    }
    return trace;
  }
  log_info("inverting input (" + std::to_string(o.steps) + " steps)");
  const DiffusionSchedule sched = make_schedule(o.steps);
  InversionTrace trace = invert(
      latent,
      [&denoiser](const LatentGrid& x, int t) { return forward(denoiser, x, t).eps; },
      sched);
  if (!o.cache_trace.empty()) {
    save_trace(trace, o.cache_trace);
    log_info("wrote inversion trace to " + o.cache_trace);
  }
  return trace;
}

void write_run_outputs(const fs::path& dir, const RemovalResult& result) {
  fs::create_directories(dir);
  write_image((dir / "result.png").string(), latent_to_image(result.output));
  const std::string json = report_to_json(result.report).dump(2) + "\n";
  write_file_atomic((dir / "report.json").string(),
                    {reinterpret_cast<const std::uint8_t*>(json.data()), json.size()});
}

int cmd_run(const CommonOpts& o, double percentile) {
  if (!(percentile >= 0.0 && percentile < 1.0)) {
    throw IoError("--percentile must lie in [0, 1)");
  }
  const LoadedInputs in = load_inputs(o);
  RemovalConfig cfg = make_config(o);
  cfg.percentile = percentile;

  const Denoiser denoiser = build_denoiser(o.seed, in.latent.channels,
                                           in.latent.height, in.latent.width);
  const InversionTrace trace = obtain_trace(o, in.latent, denoiser);
  const LatentGrid reference = reconstruct_traced(trace, denoiser, cfg);
  const RemovalResult result =
      remove_objects_traced(trace, in.mask, denoiser, cfg, &reference);

  write_run_outputs(o.out_dir, result);
  std::printf("result: %s\n", (fs::path(o.out_dir) / "result.png").c_str());
  std::printf("background_mse=%.6g masked_divergence=%.6g wall_ms=%.1f\n",
              result.report.background_mse.value_or(-1.0),
              result.report.masked_divergence, result.report.wall_ms);
  return kExitOk;
}

int cmd_sweep(const CommonOpts& o, const std::vector<double>& percentiles) {
  if (percentiles.empty()) throw IoError("--percentiles is empty");
  for (double p : percentiles) {
    if (!(p >= 0.0 && p < 1.0)) throw IoError("--percentiles entries must lie in [0, 1)");
  }
  const LoadedInputs in = load_inputs(o);
  const RemovalConfig base_cfg = make_config(o);

  const Denoiser denoiser = build_denoiser(o.seed, in.latent.channels,
                                           in.latent.height, in.latent.width);
  const InversionTrace trace = obtain_trace(o, in.latent, denoiser);
  const LatentGrid reference = reconstruct_traced(trace, denoiser, base_cfg);
  const auto entries = percentile_sweep_traced(trace, in.mask, denoiser,
                                               base_cfg, percentiles, o.jobs,
                                               &reference);

  // Per-percentile output directories keep duplicates distinct.
  std::vector<size_t> order(entries.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return entries[a].percentile < entries[b].percentile;
  });

  nlohmann::json summary = nlohmann::json::array();
  bool any_failed = false;
  for (size_t rank = 0; rank < order.size(); ++rank) {
    const SweepEntry& entry = entries[order[rank]];
    char name[64];
    std::snprintf(name, sizeof(name), "p%02zu_%.4f", rank, entry.percentile);
    const fs::path dir = fs::path(o.out_dir) / name;

    nlohmann::json item;
    item["percentile"] = entry.percentile;
    item["dir"] = std::string(name);
    if (entry.result) {
      write_run_outputs(dir, *entry.result);
      const RunReport& rep = entry.result->report;
      item["background_mse"] = rep.background_mse.value_or(-1.0);
      item["masked_divergence"] = rep.masked_divergence;
      int dissolved_total = 0;
      for (const auto& step : rep.steps)
        for (const auto& [layer, r] : step.dissolved) dissolved_total += r.count;
      item["dissolved_total"] = dissolved_total;
    } else {
      any_failed = true;
      item["error"] = entry.error;
      std::fprintf(stderr, "sweep p=%.4f failed: %s\n", entry.percentile,
                   entry.error.c_str());
    }
    summary.push_back(item);
  }

  fs::create_directories(o.out_dir);
  const std::string json = summary.dump(2) + "\n";
  write_file_atomic((fs::path(o.out_dir) / "summary.json").string(),
                    {reinterpret_cast<const std::uint8_t*>(json.data()), json.size()});
  std::printf("sweep complete: %zu runs, summary at %s\n", entries.size(),
              (fs::path(o.out_dir) / "summary.json").c_str());
  return any_failed ? kExitPipeline : kExitOk;
}

// Accepts "N" or an inclusive range "A..B".
std::vector<std::uint64_t> parse_seed_spec(const std::string& spec) {
  try {
    const auto dots = spec.find("..");
    if (dots == std::string::npos) return {std::stoull(spec)};
    const std::uint64_t a = std::stoull(spec.substr(0, dots));
    const std::uint64_t b = std::stoull(spec.substr(dots + 2));
    if (b < a || b - a > 64) throw IoError("seed range too large or inverted");
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = a; s <= b; ++s) seeds.push_back(s);
    return seeds;
  } catch (const std::logic_error&) {
    throw IoError("--seed expects an integer or range A..B, got '" + spec + "'");
  }
}

int cmd_verify(const std::string& seed_spec) {
  const std::vector<std::uint64_t> seeds = parse_seed_spec(seed_spec);
  bool all_pass = true;
  for (std::uint64_t seed : seeds) {
    const auto results = run_selfchecks(seed);
    for (const CheckResult& r : results) {
      std::string name = r.name;
      if (seeds.size() > 1) name += " @ seed " + std::to_string(seed);
      std::printf("[%s] %-42s %s\n", r.pass ? "PASS" : "FAIL", name.c_str(),
                  r.detail.c_str());
      all_pass = all_pass && r.pass;
    }
  }
  return all_pass ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot object removal on a deterministic toy diffusion denoiser"};
  app.require_subcommand(1);

  CommonOpts run_opts;
  double percentile = 0.05;
  CLI::App* run = app.add_subcommand("run", "Remove the masked objects from one image");
  add_common_flags(run, run_opts);
  run->add_option("--percentile", percentile,
                  "Fraction of keys dissolved per masked query")
      ->capture_default_str();

  CommonOpts sweep_opts;
  std::vector<double> percentiles;
  CLI::App* sweep = app.add_subcommand("sweep", "Run once per percentile and summarize");
  add_common_flags(sweep, sweep_opts);
  sweep->add_option("--percentiles", percentiles, "Comma-separated percentile list")
      ->required()
      ->delimiter(',');

  std::string seed_spec = "0";
  CLI::App* verify = app.add_subcommand("verify", "Run the built-in invariant suite");
  verify->add_option("--seed", seed_spec, "Seed or inclusive range A..B")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitIo;
  }

  try {
    if (run->parsed()) return cmd_run(run_opts, percentile);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, percentiles);
    if (verify->parsed()) return cmd_verify(seed_spec);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const PipelineError& e) {
    std::fprintf(stderr, "pipeline error: %s\n", e.what());
    return kExitPipeline;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitPipeline;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitPipeline;
  }
  return kExitOk;
}
