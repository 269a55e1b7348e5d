// Localized guidance: mask-gated blend of the editing branch's noise
// prediction with the inversion branch's, weighted by a per-step alpha.
#pragma once

#include "pandora/types.hpp"

namespace pandora {

enum class AlphaMode { kConstant, kLinear };

struct GuidanceSchedule {
  AlphaMode mode = AlphaMode::kConstant;
  double alpha_start = 1.3;
  double alpha_end = 1.3;
};

// Constant mode returns alpha_start. Linear mode interpolates from
// alpha_start at t = T down to alpha_end at t = 1.
double alpha_at(const GuidanceSchedule& sched, int t, int total_steps);

// Elementwise, with a binary pixel mask broadcast to the grid's shape:
//   masked:   alpha * eps_edit + (1 - alpha) * eps_inv
//   unmasked: eps_edit, copied bit-exactly.
LatentGrid ladg_blend(const LatentGrid& eps_edit, const LatentGrid& eps_inv,
                      const LatentGrid& pixel_mask, double alpha);

}  // namespace pandora
