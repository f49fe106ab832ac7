#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

// Minimal 8-bit grayscale PNG codec, enough for the lane rasters.

namespace osha::png {

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
                      const std::uint8_t* data, std::size_t len) {
  put_u32(out, static_cast<std::uint32_t>(len));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data, data + len);
  const auto crc = ::crc32(0, out.data() + start, static_cast<uInt>(4 + len));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

inline std::vector<std::uint8_t> zlib_compress(const std::vector<std::uint8_t>& in) {
  uLongf bound = ::compressBound(static_cast<uLong>(in.size()));
  std::vector<std::uint8_t> out(bound);
  if (::compress2(out.data(), &bound, in.data(), static_cast<uLong>(in.size()), 6) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  out.resize(bound);
  return out;
}

inline std::vector<std::uint8_t> zlib_decompress(const std::uint8_t* in, std::size_t len,
                                                 std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  uLongf out_len = static_cast<uLongf>(expected);
  if (::uncompress(out.data(), &out_len, in, static_cast<uLong>(len)) != Z_OK ||
      out_len != expected)
    throw std::runtime_error("png: inflate failed");
  return out;
}

} // namespace detail

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels; // row-major, height*width
};

inline std::vector<std::uint8_t> encode(const Image& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
    throw std::invalid_argument("png: bad image dimensions");
  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::uint8_t ihdr[13];
  ihdr[0] = std::uint8_t(img.width >> 24); ihdr[1] = std::uint8_t(img.width >> 16);
  ihdr[2] = std::uint8_t(img.width >> 8);  ihdr[3] = std::uint8_t(img.width);
  ihdr[4] = std::uint8_t(img.height >> 24); ihdr[5] = std::uint8_t(img.height >> 16);
  ihdr[6] = std::uint8_t(img.height >> 8);  ihdr[7] = std::uint8_t(img.height);
  ihdr[8] = 8;  // bit depth
  ihdr[9] = 0;  // grayscale
  ihdr[10] = ihdr[11] = ihdr[12] = 0;
  detail::put_chunk(out, "IHDR", ihdr, sizeof ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (img.width + 1));
  for (int r = 0; r < img.height; ++r) {
    raw.push_back(0); // filter: none
    const auto* row = img.pixels.data() + static_cast<std::size_t>(r) * img.width;
    raw.insert(raw.end(), row, row + img.width);
  }
  const auto compressed = detail::zlib_compress(raw);
  detail::put_chunk(out, "IDAT", compressed.data(), compressed.size());
  detail::put_chunk(out, "IEND", nullptr, 0);
  return out;
}

inline Image decode(const std::vector<std::uint8_t>& bytes) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
    throw std::runtime_error("png: bad signature");
  Image img;
  std::vector<std::uint8_t> idat;
  std::size_t off = 8;
  while (off + 8 <= bytes.size()) {
    const std::uint32_t len = detail::get_u32(bytes.data() + off);
    const char* type = reinterpret_cast<const char*>(bytes.data() + off + 4);
    const std::uint8_t* data = bytes.data() + off + 8;
    if (off + 12 + len > bytes.size()) throw std::runtime_error("png: truncated chunk");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      img.width = static_cast<int>(detail::get_u32(data));
      img.height = static_cast<int>(detail::get_u32(data + 4));
      if (data[8] != 8 || data[9] != 0)
        throw std::runtime_error("png: only 8-bit grayscale supported");
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    off += 12 + len;
  }
  if (img.width <= 0 || img.height <= 0) throw std::runtime_error("png: missing IHDR");
  const std::size_t stride = static_cast<std::size_t>(img.width) + 1;
  auto raw = detail::zlib_decompress(idat.data(), idat.size(),
                                     stride * static_cast<std::size_t>(img.height));
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, 0);
  for (int r = 0; r < img.height; ++r) {
    const std::uint8_t filter = raw[r * stride];
    const std::uint8_t* src = raw.data() + r * stride + 1;
    std::uint8_t* dst = img.pixels.data() + static_cast<std::size_t>(r) * img.width;
    const std::uint8_t* up =
        r > 0 ? img.pixels.data() + static_cast<std::size_t>(r - 1) * img.width : nullptr;
    for (int c = 0; c < img.width; ++c) {
      const int a = c > 0 ? dst[c - 1] : 0;
      const int b = up ? up[c] : 0;
      const int d = (c > 0 && up) ? up[c - 1] : 0;
      int x = src[c];
      switch (filter) {
        case 0: break;
        case 1: x += a; break;
        case 2: x += b; break;
        case 3: x += (a + b) / 2; break;
        case 4: {
          const int p = a + b - d;
          const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - d);
          x += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : d);
          break;
        }
        default: throw std::runtime_error("png: unknown filter");
      }
      dst[c] = static_cast<std::uint8_t>(x & 0xff);
    }
  }
  return img;
}

inline void write_file(const std::string& path, const Image& img) {
  const auto bytes = encode(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("png: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("png: write failed: " + path);
}

inline Image read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("png: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode(bytes);
}

} // namespace osha::png
