#include "pandora/masking.hpp"

#include <algorithm>

#include "pandora/errors.hpp"
#include "pandora/image_io.hpp"

namespace pandora {

bool ObjectMask::any_object() const {
  return std::any_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; });
}

bool ObjectMask::any_background() const {
  return std::any_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b == 0; });
}

TokenMask make_token_mask(int resolution, std::vector<std::uint8_t> bits) {
  if (resolution <= 0) throw Error("token mask resolution must be positive");
  if (bits.size() != size_t(resolution) * resolution) {
    throw DimensionError("token mask bits do not match resolution^2");
  }
  TokenMask tm;
  tm.resolution = resolution;
  tm.bits = std::move(bits);
  for (int i = 0; i < tm.tokens(); ++i) {
    (tm.bits[i] ? tm.object_indices : tm.background_indices).push_back(i);
  }
  return tm;
}

ObjectMask load_mask(std::span<const std::uint8_t> bytes) {
  const Image img = decode_image(bytes);
  if (img.channels != 1) {
    throw IoError("mask must be single-channel grayscale");
  }
  ObjectMask mask;
  mask.width = img.width;
  mask.height = img.height;
  mask.bits.resize(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    mask.bits[i] = img.pixels[i] > 127 ? 1 : 0;
  }
  return mask;
}

ObjectMask load_mask_file(const std::string& path) {
  try {
    return load_mask(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

TokenMask downsample(const ObjectMask& mask, int resolution) {
  if (resolution <= 0) throw Error("downsample: resolution must be positive");
  if (resolution > mask.width || resolution > mask.height) {
    throw Error("downsample: resolution exceeds mask dimensions");
  }

  // Ceiling-division windows; a trailing window may be narrower.
  const int win_h = (mask.height + resolution - 1) / resolution;
  const int win_w = (mask.width + resolution - 1) / resolution;

  std::vector<std::uint8_t> bits(size_t(resolution) * resolution, 0);
  for (int ty = 0; ty < resolution; ++ty) {
    const int y0 = ty * win_h;
    const int y1 = std::min((ty + 1) * win_h, mask.height);
    for (int tx = 0; tx < resolution; ++tx) {
      const int x0 = tx * win_w;
      const int x1 = std::min((tx + 1) * win_w, mask.width);
      std::uint8_t any = 0;
      for (int y = y0; y < y1 && !any; ++y) {
        for (int x = x0; x < x1; ++x) {
          if (mask.bit(y, x)) {
            any = 1;
            break;
          }
        }
      }
      bits[size_t(ty) * resolution + tx] = any;
    }
  }
  return make_token_mask(resolution, std::move(bits));
}

TokenMask complement(const TokenMask& mask) {
  TokenMask out;
  out.resolution = mask.resolution;
  out.bits.resize(mask.bits.size());
  for (size_t i = 0; i < mask.bits.size(); ++i) out.bits[i] = mask.bits[i] ? 0 : 1;
  out.object_indices = mask.background_indices;
  out.background_indices = mask.object_indices;
  return out;
}

ObjectMask upsample_nearest(const TokenMask& mask, int width, int height) {
  ObjectMask out;
  out.width = width;
  out.height = height;
  out.bits.resize(size_t(width) * height);
  const int win_h = (height + mask.resolution - 1) / mask.resolution;
  const int win_w = (width + mask.resolution - 1) / mask.resolution;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int ty = std::min(y / win_h, mask.resolution - 1);
      const int tx = std::min(x / win_w, mask.resolution - 1);
      out.bits[size_t(y) * width + x] = mask.bits[size_t(ty) * mask.resolution + tx];
    }
  }
  return out;
}

}  // namespace pandora
