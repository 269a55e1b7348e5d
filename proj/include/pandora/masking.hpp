// Binary object masks and their token-level downsamples. A pixel/token bit of
// 1 means object (to be removed), 0 means background.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pandora/types.hpp"

namespace pandora {

struct ObjectMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, one byte per pixel, 0 or 1

  bool bit(int y, int x) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
  bool any_object() const;
  bool any_background() const;
};

// The object mask at one attention layer's token grid. Token index is
// ty * resolution + tx, matching the row/column order of that layer's
// attention matrices.
struct TokenMask {
  int resolution = 0;              // tokens per side
  std::vector<std::uint8_t> bits;  // resolution^2 entries
  std::vector<int> object_indices;      // sorted, bits == 1
  std::vector<int> background_indices;  // sorted, bits == 0

  int tokens() const { return resolution * resolution; }
  bool is_object(int token) const { return bits[token] != 0; }
};

// Builds the index sets from bits; the two sets partition [0, resolution^2).
TokenMask make_token_mask(int resolution, std::vector<std::uint8_t> bits);

// Decodes a grayscale PGM (binary P5) or PNG file; pixel > 127 becomes 1.
ObjectMask load_mask(std::span<const std::uint8_t> bytes);
ObjectMask load_mask_file(const std::string& path);

// Max-pool downsample: a token is object iff any covered pixel is object.
// Covering windows use ceiling division, so every pixel belongs to exactly
// one token. resolution must be in [1, min(width, height)].
TokenMask downsample(const ObjectMask& mask, int resolution);

// Flips bits and swaps the index sets.
TokenMask complement(const TokenMask& mask);

// Nearest-neighbor upsample of a token mask back to pixel resolution.
ObjectMask upsample_nearest(const TokenMask& mask, int width, int height);

}  // namespace pandora
