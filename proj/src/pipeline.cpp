#include "pandora/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "pandora/attnctl.hpp"
#include "pandora/errors.hpp"

namespace pandora {

namespace {

void check_inputs(const LatentGrid& image, const ObjectMask& mask,
                  const Denoiser& denoiser) {
  if (image.channels != denoiser.channels || image.height != denoiser.height ||
      image.width != denoiser.width) {
    throw DimensionError("image shape does not match denoiser");
  }
  if (mask.width != image.width || mask.height != image.height) {
    throw DimensionError("mask dimensions do not match image");
  }
  if (!mask.any_background()) {
    throw NoBackgroundKeysError("mask has no background pixels");
  }
}

EpsFn plain_eps(const Denoiser& denoiser) {
  return [&denoiser](const LatentGrid& x, int t) {
    return forward(denoiser, x, t).eps;
  };
}

}  // namespace

LatentGrid latent_pixel_mask(const ObjectMask& mask, int channels) {
  const TokenMask tm = downsample(mask, mask.height);
  LatentGrid grid = LatentGrid::zeros(channels, mask.height, mask.width);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < mask.height; ++y) {
      for (int x = 0; x < mask.width; ++x) {
        grid.at(c, y, x) = tm.bits[size_t(y) * mask.width + x] ? 1.0 : 0.0;
      }
    }
  }
  return grid;
}

RemovalResult remove_objects_traced(const InversionTrace& trace,
                                    const ObjectMask& mask,
                                    const Denoiser& denoiser,
                                    const RemovalConfig& cfg,
                                    const LatentGrid* reference) {
  const auto start = std::chrono::steady_clock::now();

  const LatentGrid& input = trace.latents.front();
  check_inputs(input, mask, denoiser);
  const int T = trace.steps();
  if (T != cfg.steps) throw Error("trace step count does not match config");

  const DiffusionSchedule sched = make_schedule(T);

  // Per-layer token masks and the latent-resolution pixel mask, computed
  // once and shared across all steps.
  std::map<int, TokenMask> token_masks;
  for (const AttentionLayerDesc& l : denoiser.layers) {
    token_masks.emplace(l.id, downsample(mask, l.tokens_per_side));
  }
  const LatentGrid pixel_mask = latent_pixel_mask(mask, input.channels);

  DissolutionConfig dcfg;
  dcfg.percentile = cfg.percentile;
  dcfg.layer_filter = cfg.layer_filter;
  const int active = std::min(std::max(cfg.active_steps, 0), T);
  dcfg.window_start = T - active + 1;  // first `active` denoising iterations
  dcfg.window_end = T;
  if (active == 0) dcfg.window_start = T + 1;

  RemovalResult res;
  res.report.config = cfg;
  res.report.steps.reserve(T);

  LatentGrid x = trace.latents.back();
  long long forwards = 0;

  for (int t = T; t >= 1; --t) {
    StepRecord rec;
    rec.t = t;
    try {
      // Inversion branch: noise prediction plus captured (K, V) packets.
      ForwardResult inv = forward(denoiser, trace.latents[t], t, {}, true);
      ++forwards;

      std::map<int, AttentionProcessor> procs;
      for (AttentionPacket& packet : inv.captured) {
        const int layer = packet.layer_id;
        auto sink = [&rec](int layer_id, int count, int k) {
          rec.dissolved[layer_id] = DissolutionRecord{count, k};
        };
        AttentionProcessor inner = pandora_processor(
            dcfg, std::move(packet), token_masks.at(layer), sink);
        procs.emplace(layer, [inner = std::move(inner), layer,
                              t](const AttentionPacket& cur) -> Matd {
          try {
            return inner(cur);
          } catch (const Error& e) {
            throw PipelineError(t, layer, e.what());
          }
        });
      }

      // Editing branch with BPA/PAD injected.
      ForwardResult edit = forward(denoiser, x, t, procs, false);
      ++forwards;

      rec.alpha = alpha_at(cfg.alpha, t, T);
      const LatentGrid eps_hat =
          ladg_blend(edit.eps, inv.eps, pixel_mask, rec.alpha);
      x = ddim_step(x, eps_hat, t, sched);
    } catch (const PipelineError&) {
      throw;
    } catch (const Error& e) {
      throw PipelineError(t, -1, e.what());
    }
    rec.latent_norm = std::sqrt((x.data * x.data).sum());
    res.report.steps.push_back(std::move(rec));
  }

  res.output = std::move(x);  // identity decode

  res.report.background_mse_vs_input = background_mse(res.output, input, mask);
  res.report.masked_divergence =
      mask.any_object() ? masked_divergence(res.output, input, mask) : 0.0;
  if (reference) {
    res.report.background_mse = background_mse(res.output, *reference, mask);
    res.report.background_psnr =
        psnr_from_mse(*res.report.background_mse, *reference);
  }
  res.report.denoiser_forwards = forwards;

  const auto end = std::chrono::steady_clock::now();
  res.report.wall_ms =
      std::chrono::duration<double, std::milli>(end - start).count();
  return res;
}

LatentGrid reconstruct_traced(const InversionTrace& trace,
                              const Denoiser& denoiser,
                              const RemovalConfig& cfg) {
  ObjectMask empty;
  empty.width = trace.latents.front().width;
  empty.height = trace.latents.front().height;
  empty.bits.assign(size_t(empty.width) * empty.height, 0);
  return remove_objects_traced(trace, empty, denoiser, cfg, nullptr).output;
}

RemovalResult remove_objects(const LatentGrid& image, const ObjectMask& mask,
                             const Denoiser& denoiser, const RemovalConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  check_inputs(image, mask, denoiser);

  const DiffusionSchedule sched = make_schedule(cfg.steps);
  const InversionTrace trace = invert(image, plain_eps(denoiser), sched);

  LatentGrid reference;
  if (cfg.compute_reference) {
    reference = reconstruct_traced(trace, denoiser, cfg);
  }
  RemovalResult res = remove_objects_traced(
      trace, mask, denoiser, cfg, cfg.compute_reference ? &reference : nullptr);

  // Account for the inversion (T forwards) and, when computed, the
  // reference run (2T more).
  res.report.denoiser_forwards +=
      cfg.steps + (cfg.compute_reference ? 2LL * cfg.steps : 0LL);
  const auto end = std::chrono::steady_clock::now();
  res.report.wall_ms =
      std::chrono::duration<double, std::milli>(end - start).count();
  return res;
}

std::vector<SweepEntry> percentile_sweep(const LatentGrid& image,
                                         const ObjectMask& mask,
                                         const Denoiser& denoiser,
                                         const RemovalConfig& base_cfg,
                                         const std::vector<double>& p_values,
                                         int jobs) {
  if (p_values.empty()) return {};
  check_inputs(image, mask, denoiser);
  const DiffusionSchedule sched = make_schedule(base_cfg.steps);
  const InversionTrace trace = invert(image, plain_eps(denoiser), sched);
  LatentGrid reference;
  const LatentGrid* ref_ptr = nullptr;
  if (base_cfg.compute_reference) {
    reference = reconstruct_traced(trace, denoiser, base_cfg);
    ref_ptr = &reference;
  }
  return percentile_sweep_traced(trace, mask, denoiser, base_cfg, p_values,
                                 jobs, ref_ptr);
}

std::vector<SweepEntry> percentile_sweep_traced(
    const InversionTrace& trace, const ObjectMask& mask,
    const Denoiser& denoiser, const RemovalConfig& base_cfg,
    const std::vector<double>& p_values, int jobs,
    const LatentGrid* reference) {
  std::vector<SweepEntry> entries(p_values.size());
  if (p_values.empty()) return entries;
  const LatentGrid* ref_ptr = reference;

  auto run_one = [&](size_t i) {
    entries[i].percentile = p_values[i];
    RemovalConfig cfg = base_cfg;
    cfg.percentile = p_values[i];
    try {
      entries[i].result =
          remove_objects_traced(trace, mask, denoiser, cfg, ref_ptr);
    } catch (const Error& e) {
      entries[i].error = e.what();
    }
  };

  jobs = std::max(1, jobs);
  if (jobs == 1) {
    for (size_t i = 0; i < p_values.size(); ++i) run_one(i);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&]() {
      for (size_t i = next.fetch_add(1); i < p_values.size();
           i = next.fetch_add(1)) {
        run_one(i);
      }
    };
    std::vector<std::thread> pool;
    const size_t n = std::min(size_t(jobs), p_values.size());
    pool.reserve(n);
    for (size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return entries;
}

nlohmann::json report_to_json(const RunReport& report) {
  nlohmann::json cfg;
  cfg["steps"] = report.config.steps;
  cfg["percentile"] = report.config.percentile;
  cfg["alpha"] = {
      {"mode", report.config.alpha.mode == AlphaMode::kConstant ? "constant" : "linear"},
      {"start", report.config.alpha.alpha_start},
      {"end", report.config.alpha.alpha_end},
  };
  cfg["active_steps"] = report.config.active_steps;
  cfg["seed"] = report.config.seed;
  if (report.config.layer_filter) {
    cfg["layer_filter"] = *report.config.layer_filter;
  } else {
    cfg["layer_filter"] = nullptr;
  }

  nlohmann::json steps = nlohmann::json::array();
  for (const StepRecord& rec : report.steps) {
    nlohmann::json dissolved = nlohmann::json::object();
    nlohmann::json ks = nlohmann::json::object();
    for (const auto& [layer, r] : rec.dissolved) {
      dissolved[std::to_string(layer)] = r.count;
      ks[std::to_string(layer)] = r.k;
    }
    steps.push_back({{"t", rec.t},
                     {"alpha", rec.alpha},
                     {"dissolved", dissolved},
                     {"k", ks},
                     {"latent_norm", rec.latent_norm}});
  }

  nlohmann::json j;
  j["config"] = cfg;
  j["steps"] = steps;
  j["background_mse"] = report.background_mse
                            ? nlohmann::json(*report.background_mse)
                            : nlohmann::json(nullptr);
  j["metrics"] = {
      {"background_psnr", std::isfinite(report.background_psnr)
                              ? nlohmann::json(report.background_psnr)
                              : nlohmann::json(nullptr)},
      {"background_mse_vs_input", report.background_mse_vs_input},
      {"masked_divergence", report.masked_divergence},
      {"denoiser_forwards", report.denoiser_forwards},
  };
  j["wall_ms"] = report.wall_ms;
  return j;
}

}  // namespace pandora
