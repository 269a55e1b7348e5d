// Region-restricted fidelity measures over latent grids.
#pragma once

#include "pandora/masking.hpp"
#include "pandora/types.hpp"

namespace pandora {

struct RegionMetrics {
  double background_mse = 0.0;
  double background_psnr = 0.0;  // dB; peak is the reference's dynamic range
  double masked_divergence = 0.0;
};

// Mean squared difference over background pixels (mask bit 0) only, across
// all channels. Values inside the mask never contribute.
double background_mse(const LatentGrid& output, const LatentGrid& reference,
                      const ObjectMask& mask);

// Mean absolute difference over object pixels (mask bit 1) only.
double masked_divergence(const LatentGrid& output, const LatentGrid& input,
                         const ObjectMask& mask);

// 10 * log10(peak^2 / mse) with peak = max - min of the reference grid.
double psnr_from_mse(double mse, const LatentGrid& reference);

RegionMetrics region_metrics(const LatentGrid& output,
                             const LatentGrid& reference,
                             const LatentGrid& input, const ObjectMask& mask);

}  // namespace pandora
