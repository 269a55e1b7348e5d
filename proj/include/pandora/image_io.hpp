// 8-bit image reading and writing: binary PGM (P5) and PNG (grayscale or
// RGB, non-interlaced). PNG filtering/compression is handled via zlib.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pandora {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;                 // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels; // row-major, interleaved channels
};

// Sniffs the format from the magic bytes. Throws IoError on malformed or
// unsupported content (16-bit, palette, alpha, interlaced PNG, ASCII PGM).
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::string& path);

std::vector<std::uint8_t> encode_pgm(const Image& img);  // 1-channel only
std::vector<std::uint8_t> encode_png(const Image& img);

// Writes atomically (temp file + rename). Format chosen by extension
// (.pgm -> P5, anything else -> PNG).
void write_image(const std::string& path, const Image& img);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace pandora
