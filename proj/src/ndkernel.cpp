#include "pandora/ndkernel.hpp"

#include <cmath>
#include <string>

namespace pandora {

Matd matmul(const Matd& a, const Matd& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " * " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
  return a * b;
}

Vecd softmax_row(const Eigen::Ref<const Vecd>& row) {
  const Eigen::Index n = row.size();

  // Max over non-sentinel entries; exponentiating the sentinel itself would
  // risk (-inf) - (-inf) = NaN in the shift below.
  double m = kExcluded;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!is_excluded(row[i]) && row[i] > m) m = row[i];
  }
  if (is_excluded(m)) {
    throw AllExcludedError("softmax_row: every entry is excluded");
  }

  Vecd out(n);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (is_excluded(row[i])) {
      out[i] = 0.0;
    } else {
      out[i] = std::exp(row[i] - m);
      sum += out[i];
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!is_excluded(row[i])) out[i] /= sum;
  }
  return out;
}

Matd softmax_rows(const Matd& m) {
  Matd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.row(i) = softmax_row(m.row(i).transpose()).transpose();
  }
  return out;
}

Matd scale(const Matd& a, double s) {
  if (!std::isfinite(s) || s == 0.0) {
    throw Error("scale: factor must be finite and nonzero");
  }
  Matd out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double v = a(i, j);
      out(i, j) = is_excluded(v) ? v : v * s;
    }
  }
  return out;
}

}  // namespace pandora
