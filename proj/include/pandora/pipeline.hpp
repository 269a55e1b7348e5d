// End-to-end object removal: inversion, the T-step edit loop that wires the
// attention processors and localized guidance into the denoiser, and run
// reporting. The encoder/decoder is the identity at this scale; a learned
// VAE would plug in where image grids enter and leave.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pandora/denoiser.hpp"
#include "pandora/guidance.hpp"
#include "pandora/masking.hpp"
#include "pandora/metrics.hpp"
#include "pandora/scheduler.hpp"
#include "pandora/types.hpp"

namespace pandora {

struct RemovalConfig {
  int steps = 50;
  double percentile = 0.05;
  GuidanceSchedule alpha{};  // constant 1.3
  // BPA/PAD engage for the first active_steps denoising iterations
  // (t = T .. T-active_steps+1); vanilla attention is restored afterwards.
  int active_steps = 45;
  std::uint64_t seed = 0;
  std::optional<std::vector<int>> layer_filter;
  // Also run the empty-mask reconstruction (sharing the trace) so the
  // report can state background divergence against it.
  bool compute_reference = true;
};

struct DissolutionRecord {
  int count = 0;
  int k = 0;
};

struct StepRecord {
  int t = 0;
  double alpha = 0.0;
  std::map<int, DissolutionRecord> dissolved;  // by layer id
  double latent_norm = 0.0;
};

struct RunReport {
  RemovalConfig config;
  std::vector<StepRecord> steps;  // exactly T records, t = T .. 1
  // Against the empty-mask reconstruction run; unset when not computed.
  std::optional<double> background_mse;
  double background_psnr = 0.0;
  double background_mse_vs_input = 0.0;
  double masked_divergence = 0.0;
  long long denoiser_forwards = 0;
  double wall_ms = 0.0;
};

nlohmann::json report_to_json(const RunReport& report);

struct RemovalResult {
  LatentGrid output;
  RunReport report;
};

// Binary pixel mask broadcast over channels, at the latent resolution
// (max-pool downsample of the object mask; the identity at this scale).
LatentGrid latent_pixel_mask(const ObjectMask& mask, int channels);

// Full run: invert, edit loop, identity decode.
RemovalResult remove_objects(const LatentGrid& image, const ObjectMask& mask,
                             const Denoiser& denoiser, const RemovalConfig& cfg);

// Edit loop on a precomputed trace. reference, when given, is the
// empty-mask reconstruction used for the report's background_mse.
RemovalResult remove_objects_traced(const InversionTrace& trace,
                                    const ObjectMask& mask,
                                    const Denoiser& denoiser,
                                    const RemovalConfig& cfg,
                                    const LatentGrid* reference = nullptr);

// The empty-mask run: every edit path collapses to reconstruction with
// injected keys/values.
LatentGrid reconstruct_traced(const InversionTrace& trace,
                              const Denoiser& denoiser,
                              const RemovalConfig& cfg);

struct SweepEntry {
  double percentile = 0.0;
  std::optional<RemovalResult> result;
  std::string error;  // nonempty when the run failed
};

// One full run per percentile over a shared inversion trace (computed
// once). Failed runs are recorded and the sweep continues. jobs > 1 runs
// entries concurrently; outputs are independent of the job count.
std::vector<SweepEntry> percentile_sweep(const LatentGrid& image,
                                         const ObjectMask& mask,
                                         const Denoiser& denoiser,
                                         const RemovalConfig& base_cfg,
                                         const std::vector<double>& p_values,
                                         int jobs = 1);

// Sweep over an existing trace (e.g. loaded from the trace cache).
std::vector<SweepEntry> percentile_sweep_traced(
    const InversionTrace& trace, const ObjectMask& mask,
    const Denoiser& denoiser, const RemovalConfig& base_cfg,
    const std::vector<double>& p_values, int jobs = 1,
    const LatentGrid* reference = nullptr);

}  // namespace pandora
