#pragma once

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "moca/data/sample.hpp"
#include "moca/errors.hpp"

namespace moca::data {

// Raw image blob:
//   bytes 0..7   ASCII "MOCAIMG1"
//   bytes 8..11  height, u32 little-endian
//   bytes 12..15 width, u32 little-endian
//   then height*width IEEE-754 f32 little-endian pixels, row-major
inline constexpr char kImageMagic[8] = {'M', 'O', 'C', 'A', 'I', 'M', 'G', '1'};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open image file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline std::string encode_f32_image(const Image& img) {
  if (img.pixels.size() != img.height * img.width) throw DimensionError("image pixel count mismatch");
  std::string out(kImageMagic, sizeof kImageMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(img.height));
  detail::put_u32(out, static_cast<std::uint32_t>(img.width));
  out.reserve(out.size() + 4 * img.pixels.size());
  for (double v : img.pixels) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

inline Image decode_f32_image(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kImageMagic, 8) != 0) {
    throw ParseError("not a MOCAIMG1 image blob");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  Image img;
  img.height = detail::get_u32(p + 8);
  img.width = detail::get_u32(p + 12);
  const std::size_t n = img.height * img.width;
  if (bytes.size() != 16 + 4 * n) throw ParseError("image blob size does not match its header");
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = std::bit_cast<float>(detail::get_u32(p + 16 + 4 * i));
  return img;
}

// Binary (P5) or ASCII (P2) greymap, maxval < 256, scaled to [0, 1].
inline Image decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_space();
    std::size_t start = pos, v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])))
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
    if (pos == start) throw ParseError("malformed PGM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
    throw ParseError("not a P2/P5 PGM image");
  }
  const bool binary = bytes[1] == '5';
  pos = 2;
  Image img;
  img.width = read_int();
  img.height = read_int();
  const std::size_t maxval = read_int();
  if (maxval == 0 || maxval > 255) throw ParseError("only 8-bit PGM images are supported");
  const std::size_t n = img.width * img.height;
  img.pixels.resize(n);
  if (binary) {
    ++pos;  // single whitespace byte after maxval
    if (bytes.size() < pos + n) throw ParseError("truncated PGM pixel data");
    for (std::size_t i = 0; i < n; ++i)
      img.pixels[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) / static_cast<double>(maxval);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t v = read_int();
      if (v > maxval) throw ParseError("PGM sample exceeds maxval");
      img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
  }
  return img;
}

inline void write_f32_image(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write image file: " + path.string());
  const std::string bytes = encode_f32_image(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Dispatches on extension: .f32 blobs or .pgm greymaps.
inline Image load_image(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".f32") return decode_f32_image(detail::read_file(path));
  if (ext == ".pgm") return decode_pgm(detail::read_file(path));
  throw ParseError("unsupported image format: " + path.string());
}

}  // namespace moca::data
