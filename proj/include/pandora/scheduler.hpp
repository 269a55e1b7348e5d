// Deterministic DDIM machinery: the noise schedule, the reverse sampling
// step, and image-to-noise inversion with intermediate latents stored.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pandora/types.hpp"

namespace pandora {

// Cumulative signal coefficients for a linear-beta schedule. alpha_bar has
// T+1 entries: alpha_bar[0] = 1 and the sequence is strictly decreasing.
struct DiffusionSchedule {
  int steps = 0;
  Arrd alpha_bar;
};

// Linear betas from 1e-4 to 2e-2 across the T steps (the single-step
// schedule uses the lower endpoint).
DiffusionSchedule make_schedule(int steps);

// Ordered latents produced by one invert() call: latents[0] is the encoded
// input, latents[T] the terminal noise. All entries share one shape.
struct InversionTrace {
  std::vector<LatentGrid> latents;
  int steps() const { return int(latents.size()) - 1; }
};

// Noise prediction callback: eps(x_t, t).
using EpsFn = std::function<LatentGrid(const LatentGrid&, int)>;

// One reverse step of deterministic DDIM (eta = 0):
//   x_{t-1} = sqrt(ab_{t-1}) * (x_t - sqrt(1-ab_t)*eps) / sqrt(ab_t)
//           + sqrt(1-ab_{t-1}) * eps
// t must lie in [1, T].
LatentGrid ddim_step(const LatentGrid& x_t, const LatentGrid& eps, int t,
                     const DiffusionSchedule& sched);

// First-order DDIM inversion: reverses the recurrence with the noise
// prediction evaluated at the previous latent, storing every intermediate.
InversionTrace invert(const LatentGrid& x0, const EpsFn& eps,
                      const DiffusionSchedule& sched);

// Plain reverse process from x_T down to x_0.
LatentGrid sample(const LatentGrid& x_T, const EpsFn& eps,
                  const DiffusionSchedule& sched);

// Flat binary trace cache. Header: magic "PNDR", then version, T, channels,
// height, width as u32 little-endian, followed by T+1 grids as f64
// little-endian.
void save_trace(const InversionTrace& trace, const std::string& path);
InversionTrace load_trace(const std::string& path);

}  // namespace pandora
