#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pandora/errors.hpp"
#include "pandora/ndkernel.hpp"

using namespace pandora;

TEST_CASE("matmul identity and dot product") {
  Matd id(2, 2);
  id << 1, 0, 0, 1;
  Matd b(2, 2);
  b << 3, 1, 2, 0;
  CHECK(matmul(id, b) == b);

  Matd r(1, 2);
  r << 1, 2;
  Matd c(2, 1);
  c << 3, 4;
  CHECK(matmul(r, c)(0, 0) == 11.0);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  std::mt19937_64 rng(41);

  // Integer-valued inputs: exact agreement regardless of summation order.
  Matd a = oracle::random_int_matrix(rng, 7, 5);
  Matd b = oracle::random_int_matrix(rng, 5, 3);
  CHECK(matmul(a, b) == oracle::matmul_naive(a, b));

  // Real inputs up to 64x64: within 1e-10 relative error.
  for (int trial = 0; trial < 5; ++trial) {
    const int m = oracle::uniform_int(rng, 1, 64);
    const int k = oracle::uniform_int(rng, 1, 64);
    const int n = oracle::uniform_int(rng, 1, 64);
    Matd x = oracle::random_matrix(rng, m, k);
    Matd y = oracle::random_matrix(rng, k, n);
    Matd got = matmul(x, y);
    Matd want = oracle::matmul_naive(x, y);
    const double denom = std::max(1.0, want.cwiseAbs().maxCoeff());
    CHECK((got - want).cwiseAbs().maxCoeff() / denom <= 1e-10);
  }
}

TEST_CASE("matmul is deterministic and rejects bad shapes") {
  std::mt19937_64 rng(7);
  Matd a = oracle::random_matrix(rng, 13, 17);
  Matd b = oracle::random_matrix(rng, 17, 11);
  CHECK(matmul(a, b) == matmul(a, b));
  CHECK_THROWS_AS(matmul(b, a), DimensionError);
}

TEST_CASE("softmax_row basic values") {
  Vecd flat(3);
  flat << 0, 0, 0;
  Vecd w = softmax_row(flat);
  for (int i = 0; i < 3; ++i) CHECK(w[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  Vecd with_excluded(4);
  with_excluded << kExcluded, 1, 2, kExcluded;
  w = softmax_row(with_excluded);
  CHECK(w[0] == 0.0);
  CHECK(w[3] == 0.0);
  CHECK(w[1] == doctest::Approx(0.26894).epsilon(1e-4));
  CHECK(w[2] == doctest::Approx(0.73106).epsilon(1e-4));
  // Against the direct (unstabilized) evaluation.
  Vecd direct = oracle::softmax_direct(with_excluded);
  CHECK((w - direct).cwiseAbs().maxCoeff() <= 1e-15);

  Vecd all_excluded(2);
  all_excluded << kExcluded, kExcluded;
  CHECK_THROWS_AS(softmax_row(all_excluded), AllExcludedError);
}

TEST_CASE("softmax_row survives magnitudes that overflow exp") {
  // Max-subtraction keeps exp in range; the direct evaluation would
  // produce inf/inf here.
  Vecd row(3);
  row << 700.0, 710.0, kExcluded;
  const Vecd w = softmax_row(row);
  CHECK(std::isfinite(w[0]));
  CHECK(std::isfinite(w[1]));
  CHECK(w[2] == 0.0);
  CHECK(std::abs(w.sum() - 1.0) <= 1e-12);
  CHECK(w[1] > w[0]);

  Vecd deep(2);
  deep << -1e308, -1e308;
  const Vecd d = softmax_row(deep);
  CHECK(d[0] == 0.5);
  CHECK(d[1] == 0.5);
}

TEST_CASE("softmax_row properties over random rows") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = oracle::uniform_int(rng, 1, 64);
    Vecd row(n);
    bool any_kept = false;
    for (int i = 0; i < n; ++i) {
      if (oracle::uniform01(rng) < 0.3) {
        row[i] = kExcluded;
      } else {
        row[i] = oracle::uniform(rng, -30.0, 30.0);
        any_kept = true;
      }
    }
    if (!any_kept) row[0] = 0.0;

    Vecd w = softmax_row(row);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      if (is_excluded(row[i])) {
        CHECK(w[i] == 0.0);
      } else {
        CHECK(w[i] >= 0.0);
      }
      sum += w[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    // Invariance to a constant shift of the kept entries.
    const double shift = oracle::uniform(rng, -50.0, 50.0);
    Vecd shifted = row;
    for (int i = 0; i < n; ++i) {
      if (!is_excluded(shifted[i])) shifted[i] += shift;
    }
    CHECK((softmax_row(shifted) - w).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("scale applies elementwise and preserves sentinels") {
  Matd a(1, 2);
  a << 2, 4;
  Matd scaled = scale(a, 0.5);
  CHECK(scaled(0, 0) == 1.0);
  CHECK(scaled(0, 1) == 2.0);

  Matd s(1, 2);
  s << kExcluded, 3;
  Matd out = scale(s, 2.0);
  CHECK(is_excluded(out(0, 0)));
  CHECK(out(0, 1) == 6.0);

  std::mt19937_64 rng(5);
  Matd m = oracle::random_matrix(rng, 3, 3);
  const double f = 1.0 / std::sqrt(64.0);
  Matd got = scale(m, f);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(got(i, j) == m(i, j) * f);

  CHECK_THROWS_AS(scale(a, 0.0), Error);
  CHECK_THROWS_AS(scale(a, std::numeric_limits<double>::infinity()), Error);
}
