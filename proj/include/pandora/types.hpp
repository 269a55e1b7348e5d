// Core dense types shared by every module.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>

namespace pandora {

// Row-major so that a matrix row (a query's logits, a token's features) is
// contiguous in memory.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// The project computes in 64-bit reals throughout.
using Matd = Mat<double>;
using Vecd = Vec<double>;
using Arrd = Eigen::ArrayXd;

// Sentinel marking an entry as excluded from softmax. It is a representable
// extreme value, never the result of arithmetic; NaN is never stored.
inline constexpr double kExcluded = -std::numeric_limits<double>::infinity();

inline bool is_excluded(double v) { return v == kExcluded; }

// Real-valued [channels x height x width] tensor: latents x_t, noise
// predictions, and pixel-level masks all use this layout. Flat storage is
// (c, y, x) row-major.
struct LatentGrid {
  int channels = 0;
  int height = 0;
  int width = 0;
  Arrd data;

  static LatentGrid zeros(int channels, int height, int width) {
    LatentGrid g;
    g.channels = channels;
    g.height = height;
    g.width = width;
    g.data = Arrd::Zero(static_cast<Eigen::Index>(channels) * height * width);
    return g;
  }

  Eigen::Index size() const { return data.size(); }

  double& at(int c, int y, int x) {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }

  bool same_shape(const LatentGrid& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

}  // namespace pandora
