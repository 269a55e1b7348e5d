#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "oracles.hpp"
#include "pandora/denoiser.hpp"
#include "pandora/errors.hpp"
#include "pandora/image_io.hpp"
#include "pandora/scheduler.hpp"

using namespace pandora;

namespace {
LatentGrid constant_grid(int c, int h, int w, double v) {
  LatentGrid g = LatentGrid::zeros(c, h, w);
  g.data.setConstant(v);
  return g;
}
}  // namespace

TEST_CASE("make_schedule endpoints and shape") {
  const DiffusionSchedule one = make_schedule(1);
  REQUIRE(one.alpha_bar.size() == 2);
  CHECK(one.alpha_bar[0] == 1.0);
  CHECK(one.alpha_bar[1] == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));

  const DiffusionSchedule two = make_schedule(2);
  CHECK(two.alpha_bar[1] == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
  CHECK(two.alpha_bar[2] == doctest::Approx((1.0 - 1e-4) * (1.0 - 2e-2)).epsilon(1e-15));

  const DiffusionSchedule fifty = make_schedule(50);
  REQUIRE(fifty.alpha_bar.size() == 51);

  CHECK_THROWS_AS(make_schedule(0), Error);
}

TEST_CASE("schedules are strictly decreasing in (0, 1]") {
  for (int steps = 1; steps <= 200; ++steps) {
    const DiffusionSchedule s = make_schedule(steps);
    REQUIRE(s.alpha_bar.size() == steps + 1);
    CHECK(s.alpha_bar[0] == 1.0);
    for (int t = 1; t <= steps; ++t) {
      CHECK(s.alpha_bar[t] > 0.0);
      CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    }
  }
}

TEST_CASE("ddim_step closed forms") {
  const DiffusionSchedule sched = make_schedule(10);

  // Zero noise: pure rescale by sqrt(ab_{t-1} / ab_t).
  const LatentGrid x = constant_grid(2, 8, 8, 0.7);
  const LatentGrid zero = constant_grid(2, 8, 8, 0.0);
  for (int t = 1; t <= 10; ++t) {
    const LatentGrid out = ddim_step(x, zero, t, sched);
    const double want =
        0.7 * std::sqrt(sched.alpha_bar[t - 1]) / std::sqrt(sched.alpha_bar[t]);
    CHECK(out.data[0] == doctest::Approx(want).epsilon(1e-14));
  }

  // Final step with ab_0 = 1: x_0 = (x_1 - sqrt(1-ab_1) eps) / sqrt(ab_1).
  const LatentGrid eps = constant_grid(2, 8, 8, 0.3);
  const LatentGrid x0 = ddim_step(x, eps, 1, sched);
  const double ab1 = sched.alpha_bar[1];
  CHECK(x0.data[0] ==
        doctest::Approx((0.7 - std::sqrt(1.0 - ab1) * 0.3) / std::sqrt(ab1))
            .epsilon(1e-14));

  CHECK_THROWS_AS(ddim_step(x, eps, 0, sched), Error);
  CHECK_THROWS_AS(ddim_step(x, eps, 11, sched), Error);
}

TEST_CASE("ddim_step matches the scalar oracle and is linear") {
  // Hand-built coefficients pin a mid-trajectory step to scalar arithmetic.
  DiffusionSchedule sched;
  sched.steps = 1;
  sched.alpha_bar = Arrd(2);
  sched.alpha_bar[0] = 0.5;
  sched.alpha_bar[1] = 0.25;

  const LatentGrid x1 = constant_grid(1, 8, 8, 1.0);
  const LatentGrid e = constant_grid(1, 8, 8, 0.5);
  const LatentGrid out = ddim_step(x1, e, 1, sched);
  CHECK(out.data[0] == doctest::Approx(oracle::ddim_scalar(1.0, 0.5, 0.25, 0.5))
                           .epsilon(1e-15));

  std::mt19937_64 rng(31);
  const DiffusionSchedule real = make_schedule(50);
  for (int trial = 0; trial < 100; ++trial) {
    const int t = oracle::uniform_int(rng, 1, 50);
    const double xv = oracle::uniform(rng, -2.0, 2.0);
    const double ev = oracle::uniform(rng, -2.0, 2.0);
    const LatentGrid gx = constant_grid(1, 8, 8, xv);
    const LatentGrid ge = constant_grid(1, 8, 8, ev);
    const double want =
        oracle::ddim_scalar(xv, ev, real.alpha_bar[t], real.alpha_bar[t - 1]);
    CHECK(std::abs(ddim_step(gx, ge, t, real).data[0] - want) <= 1e-12);

    // Linearity in (x, eps).
    const double a = oracle::uniform(rng, -1.5, 1.5);
    const double b = oracle::uniform(rng, -1.5, 1.5);
    LatentGrid gx2 = gx;
    gx2.data *= a;
    LatentGrid ge2 = ge;
    ge2.data *= b;
    const double lhs = ddim_step(gx2, ge2, t, real).data[0];
    const double rhs =
        oracle::ddim_scalar(a * xv, b * ev, real.alpha_bar[t], real.alpha_bar[t - 1]);
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("invert with a zero denoiser is a pure rescaling chain") {
  const DiffusionSchedule sched = make_schedule(20);
  std::mt19937_64 rng(37);
  const LatentGrid x0 = oracle::random_grid(rng, 2, 8, 8);
  const EpsFn zero = [](const LatentGrid& x, int) {
    LatentGrid e = x;
    e.data.setZero();
    return e;
  };
  const InversionTrace trace = invert(x0, zero, sched);
  REQUIRE(int(trace.latents.size()) == 21);
  for (int t = 0; t <= 20; ++t) {
    const Arrd want = std::sqrt(sched.alpha_bar[t]) * x0.data;
    CHECK((trace.latents[t].data - want).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("invert-then-sample round trip with the toy denoiser") {
  const Denoiser d = build_denoiser(0, 4, 16, 16);
  std::mt19937_64 rng(43);
  const LatentGrid x0 = oracle::random_grid(rng, 4, 16, 16);
  const DiffusionSchedule sched = make_schedule(50);
  const EpsFn eps = [&d](const LatentGrid& x, int t) { return forward(d, x, t).eps; };

  const InversionTrace trace = invert(x0, eps, sched);
  REQUIRE(trace.steps() == 50);
  const LatentGrid rec = sample(trace.latents.back(), eps, sched);
  CHECK((rec.data - x0.data).abs().maxCoeff() <= 1e-3);
}

TEST_CASE("trace serialization round trip") {
  const DiffusionSchedule sched = make_schedule(5);
  std::mt19937_64 rng(47);
  const LatentGrid x0 = oracle::random_grid(rng, 3, 8, 8);
  const EpsFn noise = [&](const LatentGrid& x, int t) {
    LatentGrid e = x;
    e.data = x.data * 0.01 + 0.001 * double(t);
    return e;
  };
  const InversionTrace trace = invert(x0, noise, sched);

  const auto path = std::filesystem::temp_directory_path() / "pandora_trace_test.bin";
  save_trace(trace, path.string());
  const InversionTrace loaded = load_trace(path.string());

  REQUIRE(loaded.steps() == trace.steps());
  for (size_t i = 0; i < trace.latents.size(); ++i) {
    CHECK((loaded.latents[i].data == trace.latents[i].data).all());
  }

  // Pinned byte layout: magic, then version/T/channels/height/width as
  // little-endian u32, then f64 little-endian payload.
  const auto bytes_ok = read_file(path.string());
  auto u32_at = [&](size_t off) {
    return std::uint32_t(bytes_ok[off]) | (std::uint32_t(bytes_ok[off + 1]) << 8) |
           (std::uint32_t(bytes_ok[off + 2]) << 16) |
           (std::uint32_t(bytes_ok[off + 3]) << 24);
  };
  CHECK(std::string(bytes_ok.begin(), bytes_ok.begin() + 4) == "PNDR");
  CHECK(u32_at(4) == 1);   // version
  CHECK(u32_at(8) == 5);   // steps
  CHECK(u32_at(12) == 3);  // channels
  CHECK(u32_at(16) == 8);  // height
  CHECK(u32_at(20) == 8);  // width
  CHECK(bytes_ok.size() == 24 + size_t(6) * 3 * 8 * 8 * 8);
  std::uint64_t first = 0;
  for (int i = 0; i < 8; ++i) first |= std::uint64_t(bytes_ok[24 + i]) << (8 * i);
  CHECK(std::bit_cast<double>(first) == trace.latents[0].data[0]);

  // Header validation.
  auto bytes = read_file(path.string());
  bytes[0] = 'X';
  const auto bad = path.string() + ".bad";
  write_file_atomic(bad, bytes);
  CHECK_THROWS_AS(load_trace(bad), IoError);

  auto truncated = read_file(path.string());
  truncated.resize(truncated.size() - 3);
  write_file_atomic(bad, truncated);
  CHECK_THROWS_AS(load_trace(bad), IoError);

  std::filesystem::remove(path);
  std::filesystem::remove(bad);
}
