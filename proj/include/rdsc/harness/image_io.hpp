#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <span>
#include <cctype>
#include <string>
#include <vector>

#include "rdsc/codec/checkpoint.hpp"
#include "rdsc/common/error.hpp"
#include "rdsc/tensor_core/tensor.hpp"

namespace rdsc {

/// 8-bit interleaved pixels.
struct Image8 {
  std::size_t h = 0, w = 0, channels = 0;  // channels 1 or 3
  std::vector<std::uint8_t> pixels;
};

/// [3,H,W] floats in [0,1]; gray inputs are replicated to three channels.
inline Tensor<float> to_tensor(const Image8& img) {
  Tensor<float> t({3, img.h, img.w});
  const std::size_t plane = img.h * img.w;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const std::uint8_t v = img.pixels[i * img.channels + (img.channels == 1 ? 0 : c)];
      t[c * plane + i] = static_cast<float>(static_cast<double>(v) / 255.0);
    }
  return t;
}

inline Image8 to_image8(const Tensor<float>& t) {
  if (t.rank() != 3 || (t.dim(0) != 3 && t.dim(0) != 1)) throw ShapeError("to_image8: expected [3,H,W] or [1,H,W], got " + shape_str(t.shape));
  Image8 img{t.dim(1), t.dim(2), t.dim(0), {}};
  const std::size_t plane = img.h * img.w;
  img.pixels.resize(plane * img.channels);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < img.channels; ++c) {
      const double v = std::clamp(static_cast<double>(t[c * plane + i]), 0.0, 1.0);
      img.pixels[i * img.channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return img;
}

namespace detail {

inline void skip_pnm_space(std::span<const std::uint8_t> b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    return;
  }
}

inline std::size_t read_pnm_int(std::span<const std::uint8_t> b, std::size_t& pos) {
  skip_pnm_space(b, pos);
  if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("pnm: malformed header");
  std::size_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + static_cast<std::size_t>(b[pos++] - '0');
    if (v > (1u << 24)) throw FormatError("pnm: header value too large");
  }
  return v;
}

}  // namespace detail

/// Binary PGM (P5) / PPM (P6) with maxval <= 255.
inline Image8 decode_pnm(std::span<const std::uint8_t> b) {
  if (b.size() < 2 || b[0] != 'P' || (b[1] != '5' && b[1] != '6')) throw FormatError("pnm: not a binary P5/P6 file");
  std::size_t pos = 2;
  Image8 img;
  img.channels = b[1] == '6' ? 3 : 1;
  img.w = detail::read_pnm_int(b, pos);
  img.h = detail::read_pnm_int(b, pos);
  const std::size_t maxval = detail::read_pnm_int(b, pos);
  if (maxval == 0 || maxval > 255) throw FormatError("pnm: only 8-bit maxval is supported");
  if (pos >= b.size() || !std::isspace(b[pos])) throw FormatError("pnm: malformed header");
  ++pos;
  const std::size_t n = img.h * img.w * img.channels;
  if (img.h == 0 || img.w == 0) throw FormatError("pnm: empty image");
  if (b.size() - pos < n) throw FormatError("pnm: truncated pixel data");
  img.pixels.assign(b.begin() + static_cast<long>(pos), b.begin() + static_cast<long>(pos + n));
  if (maxval != 255)
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(std::lround(std::min<double>(p, maxval) * 255.0 / maxval));
  return img;
}

inline std::vector<std::uint8_t> encode_pnm(const Image8& img) {
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(img.w) + " " +
                             std::to_string(img.h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

namespace detail {

struct PngReadState {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}
inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

/// Any PNG reduced to 8-bit gray or RGB (alpha dropped, palettes expanded).
inline Image8 decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8)) throw FormatError("png: bad signature");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw FormatError("png: cannot allocate decoder");
  png_infop info = png_create_info_struct(png);
  detail::PngReadState state{bytes, 0};
  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png: " + (err.empty() ? std::string("decode failed") : err));
  }
  png_set_read_fn(png, &state, [](png_structp p, png_bytep out, png_size_t n) {
    auto* s = static_cast<detail::PngReadState*>(png_get_io_ptr(p));
    if (s->bytes.size() - s->pos < n) png_error(p, "truncated data");
    std::memcpy(out, s->bytes.data() + s->pos, n);
    s->pos += n;
  });
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.w = png_get_image_width(png, info);
  img.h = png_get_image_height(png, info);
  img.channels = png_get_channels(png, info);
  if (img.channels != 1 && img.channels != 3) png_error(png, "unsupported channel layout");
  img.pixels.resize(img.h * img.w * img.channels);
  rows.resize(img.h);
  for (std::size_t y = 0; y < img.h; ++y) rows[y] = img.pixels.data() + y * img.w * img.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline std::vector<std::uint8_t> encode_png(const Image8& img) {
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw FormatError("png: cannot allocate encoder");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("png: " + err);
  }
  png_set_write_fn(png, &out, [](png_structp p, png_bytep data, png_size_t n) {
    auto* o = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
    o->insert(o->end(), data, data + n);
  }, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.h; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * img.w * img.channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline bool is_png_path(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png";
}

inline bool is_pnm_path(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

/// Decode by content (PNG signature or P5/P6 magic).
inline Image8 decode_image_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 8 && !png_sig_cmp(bytes.data(), 0, 8)) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_pnm(bytes);
  throw FormatError("unrecognised image format");
}

inline Tensor<float> read_image(const std::filesystem::path& path) {
  try {
    return to_tensor(decode_image_bytes(read_file_bytes(path)));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Writes PNG for .png paths, PPM otherwise.
inline void write_image(const Tensor<float>& t, const std::filesystem::path& path) {
  const Image8 img = to_image8(t);
  write_file_bytes(path, is_png_path(path) ? encode_png(img) : encode_pnm(img));
}

}  // namespace rdsc
