#include "pandora/metrics.hpp"

#include <cmath>
#include <limits>

#include "pandora/errors.hpp"

namespace pandora {

namespace {
void check_shapes(const LatentGrid& a, const LatentGrid& b, const ObjectMask& mask) {
  if (!a.same_shape(b)) throw DimensionError("metric: grid shape mismatch");
  if (mask.width != a.width || mask.height != a.height) {
    throw DimensionError("metric: mask dimensions do not match grids");
  }
}
}  // namespace

double background_mse(const LatentGrid& output, const LatentGrid& reference,
                      const ObjectMask& mask) {
  check_shapes(output, reference, mask);
  double sum = 0.0;
  long count = 0;
  for (int y = 0; y < output.height; ++y) {
    for (int x = 0; x < output.width; ++x) {
      if (mask.bit(y, x)) continue;
      for (int c = 0; c < output.channels; ++c) {
        const double d = output.at(c, y, x) - reference.at(c, y, x);
        sum += d * d;
        ++count;
      }
    }
  }
  if (count == 0) throw Error("background_mse: mask has no background pixels");
  return sum / double(count);
}

double masked_divergence(const LatentGrid& output, const LatentGrid& input,
                         const ObjectMask& mask) {
  check_shapes(output, input, mask);
  double sum = 0.0;
  long count = 0;
  for (int y = 0; y < output.height; ++y) {
    for (int x = 0; x < output.width; ++x) {
      if (!mask.bit(y, x)) continue;
      for (int c = 0; c < output.channels; ++c) {
        sum += std::abs(output.at(c, y, x) - input.at(c, y, x));
        ++count;
      }
    }
  }
  if (count == 0) throw Error("masked_divergence: mask has no object pixels");
  return sum / double(count);
}

double psnr_from_mse(double mse, const LatentGrid& reference) {
  const double peak = reference.data.maxCoeff() - reference.data.minCoeff();
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

RegionMetrics region_metrics(const LatentGrid& output,
                             const LatentGrid& reference,
                             const LatentGrid& input, const ObjectMask& mask) {
  RegionMetrics m;
  m.background_mse = background_mse(output, reference, mask);
  m.background_psnr = psnr_from_mse(m.background_mse, reference);
  m.masked_divergence =
      mask.any_object() ? masked_divergence(output, input, mask) : 0.0;
  return m;
}

}  // namespace pandora
