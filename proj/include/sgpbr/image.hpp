#pragma once

// Linear float images with PFM (lossless) and 8-bit sRGB PPM (P6) codecs.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "sgpbr/math.hpp"

namespace sgpbr {

/// Row-major, top row first, channel-interleaved.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<double> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || (c != 1 && c != 3)) {
      throw InputError("ImageBuffer: invalid shape");
    }
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  Vec3d rgb(std::size_t pixel) const {
    const std::size_t i = pixel * channels;
    return channels == 3 ? Vec3d{data[i], data[i + 1], data[i + 2]}
                         : Vec3d{data[i], data[i], data[i]};
  }
  void set_rgb(std::size_t pixel, const Vec3d& v) {
    const std::size_t i = pixel * channels;
    data[i] = v.x;
    if (channels == 3) {
      data[i + 1] = v.y;
      data[i + 2] = v.z;
    }
  }

  bool same_shape(const ImageBuffer& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

class DecodeError : public InputError {
 public:
  DecodeError(const std::string& what, std::size_t offset)
      : InputError(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

inline double srgb_encode(double linear) {
  const double c = std::clamp(linear, 0.0, 1.0);
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

inline double srgb_decode(double encoded) {
  const double c = std::clamp(encoded, 0.0, 1.0);
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline std::uint8_t srgb_byte(double linear) {
  return static_cast<std::uint8_t>(std::lround(srgb_encode(linear) * 255.0));
}

namespace detail {

/// Reads one whitespace-delimited header token; skips '#' comments.
inline std::string header_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char ch = bytes[pos];
    if (ch == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t begin = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    ++pos;
  }
  if (begin == pos) throw DecodeError("unexpected end of header", pos);
  return bytes.substr(begin, pos - begin);
}

inline int header_int(const std::string& bytes, std::size_t& pos) {
  const std::size_t at = pos;
  const std::string t = header_token(bytes, pos);
  try {
    std::size_t used = 0;
    const int v = std::stoi(t, &used);
    if (used != t.size() || v <= 0) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw DecodeError("bad header integer '" + t + "'", at);
  }
}

}  // namespace detail

/// PFM: "PF" (rgb) or "Pf" (gray), negative scale for little-endian, rows
/// stored bottom to top.
inline std::string encode_pfm(const ImageBuffer& img) {
  std::ostringstream out;
  out << (img.channels == 3 ? "PF" : "Pf") << '\n'
      << img.width << ' ' << img.height << '\n'
      << "-1.0\n";
  std::string bytes = out.str();
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  bytes.reserve(bytes.size() + row * img.height * 4);
  for (int y = img.height - 1; y >= 0; --y) {
    for (std::size_t k = 0; k < row; ++k) {
      const float f = static_cast<float>(img.data[static_cast<std::size_t>(y) * row + k]);
      std::uint32_t u = std::bit_cast<std::uint32_t>(f);
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
    }
  }
  return bytes;
}

inline ImageBuffer decode_pfm(const std::string& bytes) {
  std::size_t pos = 0;
  const std::string magic = detail::header_token(bytes, pos);
  int channels = 0;
  if (magic == "PF") {
    channels = 3;
  } else if (magic == "Pf") {
    channels = 1;
  } else {
    throw DecodeError("not a PFM file", 0);
  }
  const int w = detail::header_int(bytes, pos);
  const int h = detail::header_int(bytes, pos);
  const std::size_t scale_at = pos;
  const std::string scale_token = detail::header_token(bytes, pos);
  double scale = 0.0;
  try {
    scale = std::stod(scale_token);
  } catch (const std::exception&) {
    throw DecodeError("bad PFM scale", scale_at);
  }
  if (scale == 0.0) throw DecodeError("PFM scale must be non-zero", scale_at);
  if (pos >= bytes.size()) throw DecodeError("truncated PFM header", pos);
  ++pos;  // single whitespace byte before the raster
  const bool little = scale < 0.0;
  ImageBuffer img(w, h, channels);
  const std::size_t row = static_cast<std::size_t>(w) * channels;
  const std::size_t need = row * h * 4;
  if (bytes.size() - pos < need) {
    throw DecodeError("truncated PFM raster", bytes.size());
  }
  for (int y = h - 1; y >= 0; --y) {
    for (std::size_t k = 0; k < row; ++k) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) {
        const auto byte = static_cast<std::uint8_t>(bytes[pos + static_cast<std::size_t>(b)]);
        u |= little ? static_cast<std::uint32_t>(byte) << (8 * b)
                    : static_cast<std::uint32_t>(byte) << (8 * (3 - b));
      }
      pos += 4;
      img.data[static_cast<std::size_t>(y) * row + k] = std::bit_cast<float>(u);
    }
  }
  for (double v : img.data) {
    if (!std::isfinite(v)) throw DecodeError("non-finite PFM value", pos);
  }
  return img;
}

/// 8-bit sRGB P6; single-channel images are replicated to gray.
inline std::string encode_ppm(const ImageBuffer& img) {
  std::string bytes =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  bytes.reserve(bytes.size() + img.pixel_count() * 3);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const Vec3d v = img.rgb(p);
    bytes.push_back(static_cast<char>(srgb_byte(v.x)));
    bytes.push_back(static_cast<char>(srgb_byte(v.y)));
    bytes.push_back(static_cast<char>(srgb_byte(v.z)));
  }
  return bytes;
}

inline ImageBuffer decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  if (detail::header_token(bytes, pos) != "P6") throw DecodeError("not a P6 PPM file", 0);
  const int w = detail::header_int(bytes, pos);
  const int h = detail::header_int(bytes, pos);
  const std::size_t maxval_at = pos;
  const int maxval = detail::header_int(bytes, pos);
  if (maxval != 255) throw DecodeError("only 8-bit PPM is supported", maxval_at);
  if (pos >= bytes.size()) throw DecodeError("truncated PPM header", pos);
  ++pos;
  ImageBuffer img(w, h, 3);
  if (bytes.size() - pos < img.data.size()) {
    throw DecodeError("truncated PPM raster", bytes.size());
  }
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = srgb_decode(static_cast<std::uint8_t>(bytes[pos + i]) / 255.0);
  }
  return img;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path);
}

/// Decodes by magic number.
inline ImageBuffer decode_image(const std::string& bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == 'F' || bytes[1] == 'f')) {
    return decode_pfm(bytes);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  throw DecodeError("unknown image format", 0);
}

inline ImageBuffer load_image(const std::string& path) {
  return decode_image(read_file(path));
}

}  // namespace sgpbr
