// Deterministic numeric kernels: matrix product, sentinel-aware row softmax,
// elementwise scaling. All functions are pure; repeated invocation on
// identical inputs is bit-identical (single-threaded, fixed reduction order).
#pragma once

#include "pandora/errors.hpp"
#include "pandora/types.hpp"

namespace pandora {

// Standard matrix product. Inputs must be finite (no sentinels).
Matd matmul(const Matd& a, const Matd& b);

// Softmax over one row. Sentinel entries map to exactly 0.0; the remaining
// entries are positive and sum to 1. Stabilized by max-subtraction over the
// non-sentinel entries. Throws AllExcludedError when every entry is a
// sentinel.
Vecd softmax_row(const Eigen::Ref<const Vecd>& row);

// Row-wise softmax of a matrix; each row follows the softmax_row contract.
Matd softmax_rows(const Matd& m);

// Multiplies every non-sentinel entry by s; sentinels are preserved.
// s must be finite and nonzero.
Matd scale(const Matd& a, double s);

}  // namespace pandora
