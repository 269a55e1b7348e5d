#include "pandora/scheduler.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "pandora/errors.hpp"
#include "pandora/image_io.hpp"

namespace pandora {

namespace {
constexpr double kBetaStart = 1e-4;
constexpr double kBetaEnd = 2e-2;

void check_step_range(int t, const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.steps) {
    throw Error("timestep " + std::to_string(t) + " outside [1, " +
                std::to_string(sched.steps) + "]");
  }
}
}  // namespace

DiffusionSchedule make_schedule(int steps) {
  if (steps < 1) throw Error("schedule needs at least one step");
  DiffusionSchedule sched;
  sched.steps = steps;
  sched.alpha_bar = Arrd(steps + 1);
  sched.alpha_bar[0] = 1.0;
  double prod = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double beta =
        steps == 1 ? kBetaStart
                   : kBetaStart + (kBetaEnd - kBetaStart) * (t - 1) / (steps - 1);
    prod *= 1.0 - beta;
    sched.alpha_bar[t] = prod;
  }
  return sched;
}

LatentGrid ddim_step(const LatentGrid& x_t, const LatentGrid& eps, int t,
                     const DiffusionSchedule& sched) {
  check_step_range(t, sched);
  if (!x_t.same_shape(eps)) throw DimensionError("ddim_step: shape mismatch");

  const double ab_t = sched.alpha_bar[t];
  const double ab_prev = sched.alpha_bar[t - 1];
  const double a_t = std::sqrt(ab_t);
  const double a_prev = std::sqrt(ab_prev);
  const double b_t = std::sqrt(1.0 - ab_t);
  const double b_prev = std::sqrt(1.0 - ab_prev);

  LatentGrid out = x_t;
  out.data = a_prev * ((x_t.data - b_t * eps.data) / a_t) + b_prev * eps.data;
  return out;
}

InversionTrace invert(const LatentGrid& x0, const EpsFn& eps,
                      const DiffusionSchedule& sched) {
  InversionTrace trace;
  trace.latents.reserve(sched.steps + 1);
  trace.latents.push_back(x0);
  for (int t = 1; t <= sched.steps; ++t) {
    const LatentGrid& prev = trace.latents.back();
    // Noise evaluated at the previous latent: first-order inversion.
    const LatentGrid e = eps(prev, t - 1);
    if (!e.same_shape(prev)) throw DimensionError("invert: denoiser changed shape");

    const double ab_t = sched.alpha_bar[t];
    const double ab_prev = sched.alpha_bar[t - 1];
    const double a_t = std::sqrt(ab_t);
    const double a_prev = std::sqrt(ab_prev);
    const double b_t = std::sqrt(1.0 - ab_t);
    const double b_prev = std::sqrt(1.0 - ab_prev);

    LatentGrid next = prev;
    next.data = a_t * ((prev.data - b_prev * e.data) / a_prev) + b_t * e.data;
    trace.latents.push_back(std::move(next));
  }
  return trace;
}

LatentGrid sample(const LatentGrid& x_T, const EpsFn& eps,
                  const DiffusionSchedule& sched) {
  LatentGrid x = x_T;
  for (int t = sched.steps; t >= 1; --t) {
    x = ddim_step(x, eps(x, t), t, sched);
  }
  return x;
}

namespace {

constexpr std::uint32_t kTraceVersion = 1;

void push_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

void push_f64_le(std::vector<std::uint8_t>& out, double v) {
  const auto u = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(u >> (8 * i)));
}

double read_f64_le(const std::uint8_t* p) {
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= std::uint64_t(p[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

}  // namespace

void save_trace(const InversionTrace& trace, const std::string& path) {
  if (trace.latents.empty()) throw Error("save_trace: empty trace");
  const LatentGrid& first = trace.latents.front();

  std::vector<std::uint8_t> bytes;
  bytes.reserve(24 + trace.latents.size() * size_t(first.size()) * 8);
  bytes.insert(bytes.end(), {'P', 'N', 'D', 'R'});
  push_u32_le(bytes, kTraceVersion);
  push_u32_le(bytes, std::uint32_t(trace.steps()));
  push_u32_le(bytes, std::uint32_t(first.channels));
  push_u32_le(bytes, std::uint32_t(first.height));
  push_u32_le(bytes, std::uint32_t(first.width));
  for (const LatentGrid& g : trace.latents) {
    if (!g.same_shape(first)) throw Error("save_trace: inconsistent shapes");
    for (Eigen::Index i = 0; i < g.size(); ++i) push_f64_le(bytes, g.data[i]);
  }
  write_file_atomic(path, bytes);
}

InversionTrace load_trace(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 24 || std::memcmp(bytes.data(), "PNDR", 4) != 0) {
    throw IoError(path + ": not a trace file");
  }
  const std::uint32_t version = read_u32_le(bytes.data() + 4);
  if (version != kTraceVersion) {
    throw IoError(path + ": unsupported trace version " + std::to_string(version));
  }
  const std::uint32_t steps = read_u32_le(bytes.data() + 8);
  const std::uint32_t channels = read_u32_le(bytes.data() + 12);
  const std::uint32_t height = read_u32_le(bytes.data() + 16);
  const std::uint32_t width = read_u32_le(bytes.data() + 20);

  const size_t grid_values = size_t(channels) * height * width;
  const size_t expected = 24 + (size_t(steps) + 1) * grid_values * 8;
  if (grid_values == 0 || bytes.size() != expected) {
    throw IoError(path + ": trace payload size mismatch");
  }

  InversionTrace trace;
  trace.latents.reserve(steps + 1);
  const std::uint8_t* p = bytes.data() + 24;
  for (std::uint32_t t = 0; t <= steps; ++t) {
    LatentGrid g = LatentGrid::zeros(int(channels), int(height), int(width));
    for (size_t i = 0; i < grid_values; ++i, p += 8) {
      g.data[Eigen::Index(i)] = read_f64_le(p);
    }
    trace.latents.push_back(std::move(g));
  }
  return trace;
}

}  // namespace pandora
