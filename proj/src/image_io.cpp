#include "pandora/image_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "pandora/errors.hpp"

namespace pandora {

namespace {

constexpr std::uint8_t kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

std::uint32_t read_u32_be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void push_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                const std::vector<std::uint8_t>& data) {
  push_u32_be(out, std::uint32_t(data.size()));
  const size_t crc_from = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc =
      crc32(0L, out.data() + crc_from, uInt(out.size() - crc_from));
  push_u32_be(out, std::uint32_t(crc));
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a);
  const int pb = std::abs(p - b);
  const int pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0) {
    throw IoError("not a PNG file");
  }

  int width = 0, height = 0, channels = 0;
  bool have_ihdr = false;
  std::vector<std::uint8_t> idat;

  size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = read_u32_be(bytes.data() + pos);
    if (pos + 12 + len > bytes.size()) throw IoError("PNG: truncated chunk");
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const std::uint8_t* data = bytes.data() + pos + 8;

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError("PNG: bad IHDR length");
      width = int(read_u32_be(data));
      height = int(read_u32_be(data + 4));
      const int bit_depth = data[8];
      const int color_type = data[9];
      const int interlace = data[12];
      if (bit_depth != 8) throw IoError("PNG: only 8-bit depth supported");
      if (interlace != 0) throw IoError("PNG: interlaced images unsupported");
      if (color_type == 0) {
        channels = 1;
      } else if (color_type == 2) {
        channels = 3;
      } else {
        throw IoError("PNG: only grayscale and RGB color types supported");
      }
      have_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }

  if (!have_ihdr) throw IoError("PNG: missing IHDR");
  if (width <= 0 || height <= 0) throw IoError("PNG: zero-sized image");
  if (idat.empty()) throw IoError("PNG: missing IDAT");

  const size_t stride = size_t(width) * channels;
  std::vector<std::uint8_t> raw((stride + 1) * height);
  uLongf raw_len = uLongf(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size())) != Z_OK ||
      raw_len != raw.size()) {
    throw IoError("PNG: corrupt IDAT stream");
  }

  Image img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.resize(stride * height);

  const int bpp = channels;
  for (int y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[(stride + 1) * y];
    const std::uint8_t* src = raw.data() + (stride + 1) * y + 1;
    std::uint8_t* cur = img.pixels.data() + stride * y;
    const std::uint8_t* up = y > 0 ? cur - stride : nullptr;
    for (size_t x = 0; x < stride; ++x) {
      const int left = x >= size_t(bpp) ? cur[x - bpp] : 0;
      const int above = up ? up[x] : 0;
      const int upleft = (up && x >= size_t(bpp)) ? up[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += left; break;
        case 2: v += above; break;
        case 3: v += (left + above) / 2; break;
        case 4: v += paeth(left, above, upleft); break;
        default: throw IoError("PNG: unknown filter type");
      }
      cur[x] = std::uint8_t(v);
    }
  }
  return img;
}

Image decode_pgm(std::span<const std::uint8_t> bytes) {
  size_t pos = 2;  // past "P5"
  auto next_token = [&]() -> long {
    // Skip whitespace and '#' comment lines.
    while (pos < bytes.size()) {
      const char c = char(bytes[pos]);
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    long v = -1;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      if (v < 0) v = 0;
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
    }
    if (v < 0) throw IoError("PGM: malformed header");
    return v;
  };

  const long width = next_token();
  const long height = next_token();
  const long maxval = next_token();
  if (width <= 0 || height <= 0) throw IoError("PGM: zero-sized image");
  if (maxval <= 0 || maxval > 255) throw IoError("PGM: only 8-bit maxval supported");
  // Exactly one whitespace byte separates the header from pixel data.
  ++pos;

  const size_t need = size_t(width) * size_t(height);
  if (pos + need > bytes.size()) throw IoError("PGM: truncated pixel data");

  Image img;
  img.width = int(width);
  img.height = int(height);
  img.channels = 1;
  img.pixels.assign(bytes.begin() + pos, bytes.begin() + pos + need);
  return img;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) {
    return decode_png(bytes);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
    return decode_pgm(bytes);
  }
  throw IoError("unrecognized image format (expected binary PGM or PNG)");
}

Image read_image(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_pgm(const Image& img) {
  if (img.channels != 1) throw IoError("PGM supports one channel only");
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n",
                              img.width, img.height);
  std::vector<std::uint8_t> out(header, header + n);
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw IoError("PNG encoder supports 1 or 3 channels");
  }
  const size_t stride = size_t(img.width) * img.channels;
  if (img.pixels.size() != stride * img.height) {
    throw IoError("PNG encoder: pixel buffer size mismatch");
  }

  // Filter type 0 on every scanline.
  std::vector<std::uint8_t> raw((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw[(stride + 1) * y] = 0;
    std::memcpy(raw.data() + (stride + 1) * y + 1,
                img.pixels.data() + stride * y, stride);
  }

  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), uLong(raw.size()),
                Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw IoError("PNG encoder: deflate failed");
  }
  compressed.resize(bound);

  std::vector<std::uint8_t> ihdr;
  push_u32_be(ihdr, std::uint32_t(img.width));
  push_u32_be(ihdr, std::uint32_t(img.height));
  ihdr.push_back(8);                                  // bit depth
  ihdr.push_back(img.channels == 1 ? 0 : 2);          // color type
  ihdr.push_back(0);                                  // compression
  ihdr.push_back(0);                                  // filter
  ihdr.push_back(0);                                  // interlace

  std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
  push_chunk(out, "IHDR", ihdr);
  push_chunk(out, "IDAT", compressed);
  push_chunk(out, "IEND", {});
  return out;
}

void write_image(const std::string& path, const Image& img) {
  const bool pgm = path.size() >= 4 && path.compare(path.size() - 4, 4, ".pgm") == 0;
  write_file_atomic(path, pgm ? encode_pgm(img) : encode_png(img));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path + ": read failed");
  return bytes;
}

void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              std::streamsize(bytes.size()));
    if (!out) throw IoError(tmp + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path + ": rename failed: " + ec.message());
}

}  // namespace pandora
