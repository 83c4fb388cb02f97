#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rdsc/common/bytes.hpp"
#include "rdsc/common/error.hpp"
#include "rdsc/entropy/pmf_table.hpp"
#include "rdsc/entropy/range_coder.hpp"
#include "rdsc/tensor_core/tensor.hpp"

namespace rdsc {

/// Integer latent [C, h, w] plus the range its symbols actually span.
struct LatentCode {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<std::int32_t> symbols;
  int ymin = 0, ymax = 0;

  std::size_t plane() const { return height * width; }
  std::size_t size() const { return symbols.size(); }

  bool operator==(const LatentCode&) const = default;
};

inline constexpr int kRawSymbolMin = std::numeric_limits<std::int16_t>::min();
inline constexpr int kRawSymbolMax = std::numeric_limits<std::int16_t>::max();

inline void refresh_range(LatentCode& code) {
  if (code.symbols.empty()) {
    code.ymin = code.ymax = 0;
    return;
  }
  const auto [mn, mx] = std::minmax_element(code.symbols.begin(), code.symbols.end());
  code.ymin = *mn;
  code.ymax = *mx;
}

/// Integer latent of a rounded [1,C,h,w] or [C,h,w] tensor. Values are
/// clamped to the 16-bit raw range the escape path can carry.
template <typename T>
LatentCode latent_from_tensor(const Tensor<T>& y_hat) {
  LatentCode code;
  if (y_hat.rank() == 4 && y_hat.dim(0) == 1) {
    code.channels = y_hat.dim(1);
    code.height = y_hat.dim(2);
    code.width = y_hat.dim(3);
  } else if (y_hat.rank() == 3) {
    code.channels = y_hat.dim(0);
    code.height = y_hat.dim(1);
    code.width = y_hat.dim(2);
  } else {
    throw ShapeError("latent_from_tensor: expected [1,C,h,w] or [C,h,w], got " + shape_str(y_hat.shape));
  }
  code.symbols.resize(y_hat.numel());
  for (std::size_t i = 0; i < y_hat.numel(); ++i) {
    const double v = std::round(static_cast<double>(y_hat[i]));
    code.symbols[i] = static_cast<std::int32_t>(std::clamp(v, double(kRawSymbolMin), double(kRawSymbolMax)));
  }
  refresh_range(code);
  return code;
}

template <typename T>
Tensor<T> latent_to_tensor(const LatentCode& code) {
  Tensor<T> t({1, code.channels, code.height, code.width});
  for (std::size_t i = 0; i < code.size(); ++i) t[i] = static_cast<T>(code.symbols[i]);
  return t;
}

/// In-table symbol window for a latent: its own range clipped to at most
/// kMaxTableSymbols values around zero. Never empty.
inline std::pair<int, int> table_range_for(const LatentCode& code) {
  constexpr int lo_cap = -kMaxTableSymbols / 2, hi_cap = kMaxTableSymbols / 2 - 1;
  const int lo = std::clamp(code.ymin, lo_cap, hi_cap);
  const int hi = std::clamp(code.ymax, lo, hi_cap);
  return {lo, hi};
}

/// Ideal code length of a latent under a table: sum of -log2(freq / 2^16),
/// plus 16 raw bits per escaped symbol.
inline double table_bits(const LatentCode& code, const PmfTable& table) {
  if (code.channels != table.channels) throw ShapeError("table_bits: channel count mismatch");
  double bits = 0.0;
  for (std::size_t c = 0; c < code.channels; ++c)
    for (std::size_t p = 0; p < code.plane(); ++p) bits += table.symbol_cost(c, code.symbols[c * code.plane() + p]);
  return bits;
}

inline constexpr std::uint16_t kBitstreamVersion = 1;
inline constexpr std::size_t kHeaderBytes = 32;
inline constexpr char kBitstreamMagic[] = "RDBS";

/// Serialized layout (little-endian, 32-byte header):
///   magic "RDBS" | version u16 | payload crc16 u16 | model id u64 |
///   orig h u16 | orig w u16 | ymin i16 | ymax i16 | transform index u32 |
///   payload length u32 | payload
/// Padded dims and latent shape are functions of (orig dims, transform
/// index, downsampling factor) and are recomputed by the decoder.
struct Bitstream {
  std::uint16_t version = kBitstreamVersion;
  std::uint16_t payload_crc = 0;
  std::uint64_t model_id = 0;
  std::uint16_t orig_h = 0, orig_w = 0;
  std::int16_t ymin = 0, ymax = 0;
  std::uint32_t transform_index = 0;
  std::vector<std::uint8_t> payload;

  std::size_t total_bytes() const { return kHeaderBytes + payload.size(); }
  std::size_t total_bits() const { return 8 * total_bytes(); }

  bool operator==(const Bitstream&) const = default;
};

inline std::vector<std::uint8_t> serialize(const Bitstream& bs) {
  ByteWriter w;
  w.tag(kBitstreamMagic);
  w.u16(bs.version);
  w.u16(bs.payload_crc);
  w.u64(bs.model_id);
  w.u16(bs.orig_h);
  w.u16(bs.orig_w);
  w.i16(bs.ymin);
  w.i16(bs.ymax);
  w.u32(bs.transform_index);
  w.u32(static_cast<std::uint32_t>(bs.payload.size()));
  w.raw(bs.payload);
  return w.take();
}

inline Bitstream parse_bitstream(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("bitstream: " + std::to_string(bytes.size()) + " bytes is shorter than the header");
  ByteReader r(bytes);
  if (!r.tag(kBitstreamMagic)) throw FormatError("bitstream: bad magic");
  Bitstream bs;
  bs.version = r.u16();
  if (bs.version != kBitstreamVersion) throw FormatError("bitstream: unsupported version " + std::to_string(bs.version));
  bs.payload_crc = r.u16();
  bs.model_id = r.u64();
  bs.orig_h = r.u16();
  bs.orig_w = r.u16();
  bs.ymin = r.i16();
  bs.ymax = r.i16();
  bs.transform_index = r.u32();
  const std::uint32_t len = r.u32();
  if (r.remaining() != len)
    throw FormatError("bitstream: payload length " + std::to_string(len) + " but " + std::to_string(r.remaining()) + " bytes follow");
  const auto p = r.raw(len);
  bs.payload.assign(p.begin(), p.end());
  return bs;
}

/// Range-code a latent. Symbols outside the table window go through the
/// escape entry followed by their 16-bit two's-complement value.
inline Bitstream encode_stream(const LatentCode& code, const PmfTable& table, std::uint64_t model_id, std::size_t orig_h,
                               std::size_t orig_w, std::uint32_t transform_index) {
  if (code.channels != table.channels)
    throw ShapeError("encode_stream: latent has " + std::to_string(code.channels) + " channels, table " + std::to_string(table.channels));
  if (code.size() != code.channels * code.plane()) throw ShapeError("encode_stream: latent size inconsistent with shape");
  if (orig_h > 0xFFFF || orig_w > 0xFFFF) throw ArgumentError("encode_stream: image dims exceed 16 bits");
  RangeEncoder enc;
  for (std::size_t c = 0; c < code.channels; ++c)
    for (std::size_t p = 0; p < code.plane(); ++p) {
      const int v = code.symbols[c * code.plane() + p];
      if (table.in_range(v)) {
        const auto k = static_cast<std::size_t>(v - table.ymin);
        enc.encode(table.cum(c, k), table.freq(c, k), kFreqTotal);
      } else {
        if (v < kRawSymbolMin || v > kRawSymbolMax) throw ArgumentError("encode_stream: symbol exceeds 16-bit raw range");
        const auto k = table.escape_index();
        enc.encode(table.cum(c, k), table.freq(c, k), kFreqTotal);
        enc.encode(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)), 1, kFreqTotal);
      }
    }
  Bitstream bs;
  bs.model_id = model_id;
  bs.orig_h = static_cast<std::uint16_t>(orig_h);
  bs.orig_w = static_cast<std::uint16_t>(orig_w);
  bs.ymin = static_cast<std::int16_t>(table.ymin);
  bs.ymax = static_cast<std::int16_t>(table.ymax);
  bs.transform_index = transform_index;
  bs.payload = enc.finish();
  bs.payload_crc = crc16(bs.payload);
  return bs;
}

/// Exact inverse of encode_stream for a latent of the given shape. Any
/// inconsistency (checksum, table window, leftover or missing bytes, count
/// out of range) raises DecodeError.
inline LatentCode decode_stream(const Bitstream& bs, const PmfTable& table, std::size_t channels, std::size_t height,
                                std::size_t width) {
  if (crc16(bs.payload) != bs.payload_crc) throw DecodeError("bitstream: payload checksum mismatch");
  if (bs.ymin != table.ymin || bs.ymax != table.ymax) throw DecodeError("bitstream: symbol range does not match table");
  if (channels != table.channels) throw DecodeError("bitstream: channel count does not match table");
  LatentCode code;
  code.channels = channels;
  code.height = height;
  code.width = width;
  code.symbols.resize(channels * height * width);
  RangeDecoder dec(bs.payload);
  const std::size_t entries = table.entries();
  for (std::size_t c = 0; c < channels; ++c) {
    const std::uint32_t* cdf = table.channel_cdf(c);
    for (std::size_t p = 0; p < code.plane(); ++p) {
      const std::uint32_t target = dec.peek(kFreqTotal);
      const auto k = static_cast<std::size_t>(std::upper_bound(cdf, cdf + entries + 1, target) - cdf - 1);
      dec.decode(cdf[k], cdf[k + 1] - cdf[k]);
      int v;
      if (k == table.escape_index()) {
        const std::uint32_t raw = dec.peek(kFreqTotal);
        dec.decode(raw, 1);
        v = static_cast<std::int16_t>(static_cast<std::uint16_t>(raw));
        if (table.in_range(v)) throw DecodeError("bitstream: escaped symbol lies inside the table range");
      } else {
        v = table.ymin + static_cast<int>(k);
      }
      code.symbols[c * code.plane() + p] = v;
    }
  }
  // The final flush is 4 bytes of low; the decoder has read exactly those.
  if (dec.consumed() != bs.payload.size())
    throw DecodeError("bitstream: decoder consumed " + std::to_string(dec.consumed()) + " of " +
                      std::to_string(bs.payload.size()) + " payload bytes");
  refresh_range(code);
  return code;
}

/// Bits per source pixel of the whole container (header + payload).
inline double measured_bpp(const Bitstream& bs, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw ArgumentError("measured_bpp: zero image dims");
  return static_cast<double>(bs.total_bits()) / static_cast<double>(h * w);
}

inline double measured_bpp(const Bitstream& bs) { return measured_bpp(bs, bs.orig_h, bs.orig_w); }

}  // namespace rdsc
