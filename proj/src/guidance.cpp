#include "pandora/guidance.hpp"

#include <cmath>

#include "pandora/errors.hpp"

namespace pandora {

double alpha_at(const GuidanceSchedule& sched, int t, int total_steps) {
  if (t < 1 || t > total_steps) throw Error("alpha_at: timestep out of range");
  if (sched.mode == AlphaMode::kConstant || total_steps == 1) {
    return sched.alpha_start;
  }
  const double frac = double(total_steps - t) / double(total_steps - 1);
  return sched.alpha_start + (sched.alpha_end - sched.alpha_start) * frac;
}

LatentGrid ladg_blend(const LatentGrid& eps_edit, const LatentGrid& eps_inv,
                      const LatentGrid& pixel_mask, double alpha) {
  if (!eps_edit.same_shape(eps_inv) || !eps_edit.same_shape(pixel_mask)) {
    throw DimensionError("ladg_blend: shape mismatch");
  }
  if (!std::isfinite(alpha)) throw Error("ladg_blend: alpha must be finite");

  // alpha = 1 collapses the masked branch to eps_edit exactly.
  if (alpha == 1.0) return eps_edit;

  LatentGrid out = eps_edit;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (pixel_mask.data[i] != 0.0) {
      out.data[i] = alpha * eps_edit.data[i] + (1.0 - alpha) * eps_inv.data[i];
    }
  }
  return out;
}

}  // namespace pandora
