#pragma once

#include <stdexcept>
#include <string>

namespace pandora {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible matrix/grid shapes.
struct DimensionError : Error {
  using Error::Error;
};

// A softmax row where every entry carries the exclusion sentinel.
struct AllExcludedError : Error {
  using Error::Error;
};

// Dissolution would leave a masked query with no surviving key; the caller
// should reduce the percentile.
struct AllKeysDissolvedError : Error {
  explicit AllKeysDissolvedError(int row_index)
      : Error("dissolution leaves no surviving key for query row " +
              std::to_string(row_index) + "; reduce the percentile"),
        row(row_index) {}
  int row;
};

// Background-restricted attention with an all-object token mask.
struct NoBackgroundKeysError : Error {
  using Error::Error;
};

// File and format problems (CLI exit code 2).
struct IoError : Error {
  using Error::Error;
};

// A failure inside the denoising loop, annotated with the offending
// (timestep, layer). layer == -1 when the failing layer is unknown.
struct PipelineError : Error {
  PipelineError(int timestep, int layer_id, const std::string& what)
      : Error("step t=" + std::to_string(timestep) + " layer=" +
              (layer_id < 0 ? std::string("?") : std::to_string(layer_id)) +
              ": " + what),
        step(timestep),
        layer(layer_id) {}
  int step;
  int layer;
};

}  // namespace pandora
