#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pandora/errors.hpp"
#include "pandora/metrics.hpp"

using namespace pandora;

namespace {
ObjectMask half_mask(int side) {
  // Left half object, right half background.
  ObjectMask m;
  m.width = side;
  m.height = side;
  m.bits.resize(size_t(side) * side, 0);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side / 2; ++x) m.bits[size_t(y) * side + x] = 1;
  return m;
}
}  // namespace

TEST_CASE("background_mse basics") {
  std::mt19937_64 rng(157);
  const LatentGrid ref = oracle::random_grid(rng, 2, 8, 8);
  const ObjectMask mask = half_mask(8);

  CHECK(background_mse(ref, ref, mask) == 0.0);

  LatentGrid offset = ref;
  offset.data += 0.1;
  CHECK(background_mse(offset, ref, mask) == doctest::Approx(0.01).epsilon(1e-12));

  // Differences confined to the mask do not register.
  LatentGrid inside = ref;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 2; ++c) inside.at(c, y, x) += 5.0;
  CHECK(background_mse(inside, ref, mask) == 0.0);

  ObjectMask all_ones = mask;
  all_ones.bits.assign(all_ones.bits.size(), 1);
  CHECK_THROWS_AS(background_mse(ref, ref, all_ones), Error);
}

TEST_CASE("masked_divergence basics") {
  std::mt19937_64 rng(163);
  const LatentGrid input = oracle::random_grid(rng, 2, 8, 8);
  const ObjectMask mask = half_mask(8);

  CHECK(masked_divergence(input, input, mask) == 0.0);

  LatentGrid bumped = input;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 2; ++c) bumped.at(c, y, x) += 1.0;
  CHECK(masked_divergence(bumped, input, mask) == doctest::Approx(1.0).epsilon(1e-12));

  // Random pair against a direct loop.
  const LatentGrid out = oracle::random_grid(rng, 2, 8, 8);
  double sum = 0.0;
  long count = 0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      if (!mask.bit(y, x)) continue;
      for (int c = 0; c < 2; ++c) {
        sum += std::abs(out.at(c, y, x) - input.at(c, y, x));
        ++count;
      }
    }
  }
  CHECK(masked_divergence(out, input, mask) ==
        doctest::Approx(sum / double(count)).epsilon(1e-14));

  ObjectMask empty = mask;
  empty.bits.assign(empty.bits.size(), 0);
  CHECK_THROWS_AS(masked_divergence(out, input, empty), Error);
}

TEST_CASE("psnr uses the reference dynamic range") {
  LatentGrid ref = LatentGrid::zeros(1, 8, 8);
  ref.data.setLinSpaced(64, -1.0, 1.0);
  CHECK(psnr_from_mse(0.04, ref) == doctest::Approx(10.0 * std::log10(4.0 / 0.04)));
  CHECK(std::isinf(psnr_from_mse(0.0, ref)));
}

TEST_CASE("background_mse orders reference quality sanely") {
  std::mt19937_64 rng(167);
  const ObjectMask mask = half_mask(16);
  const LatentGrid recon = oracle::random_grid(rng, 3, 16, 16);
  LatentGrid output = recon;
  output.data += 0.01;  // close to the reconstruction
  const LatentGrid unrelated = oracle::random_grid(rng, 3, 16, 16);

  CHECK(background_mse(output, recon, mask) <
        background_mse(output, unrelated, mask));
}

TEST_CASE("region_metrics bundles the three measures") {
  std::mt19937_64 rng(173);
  const LatentGrid input = oracle::random_grid(rng, 2, 8, 8);
  const LatentGrid ref = oracle::random_grid(rng, 2, 8, 8);
  const LatentGrid out = oracle::random_grid(rng, 2, 8, 8);
  const ObjectMask mask = half_mask(8);

  const RegionMetrics m = region_metrics(out, ref, input, mask);
  CHECK(m.background_mse == background_mse(out, ref, mask));
  CHECK(m.masked_divergence == masked_divergence(out, input, mask));
  CHECK(m.background_psnr == psnr_from_mse(m.background_mse, ref));
}
