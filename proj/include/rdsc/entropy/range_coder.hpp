#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rdsc/common/error.hpp"

namespace rdsc {

// Carry-less range coder (Subbotin scheme): 32-bit low/range, byte-wise
// renormalisation, and the range is truncated instead of propagating a
// carry whenever it falls below kBot while straddling a kTop boundary.
// The decoder reads exactly as many bytes as the encoder wrote.

inline constexpr std::uint32_t kRangeTop = 1u << 24;
inline constexpr std::uint32_t kRangeBot = 1u << 16;

class RangeEncoder {
 public:
  /// Code the interval [cum, cum + freq) out of `total` (total <= 2^16).
  void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
    if (freq == 0 || total == 0 || total > kRangeBot || cum + freq > total) throw ArgumentError("range coder: invalid interval");
    range_ /= total;
    low_ += cum * range_;
    range_ *= freq;
    normalize();
  }

  /// Flush the state and return the payload.
  std::vector<std::uint8_t> finish() {
    for (int i = 0; i < 4; ++i) {
      out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
      low_ <<= 8;
    }
    return std::move(out_);
  }

 private:
  void normalize() {
    for (;;) {
      if ((low_ ^ (low_ + range_)) >= kRangeTop) {
        if (range_ >= kRangeBot) break;
        range_ = (0u - low_) & (kRangeBot - 1);
      }
      out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
      range_ <<= 8;
      low_ <<= 8;
    }
  }

  std::uint32_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
  }

  /// Cumulative count of the next symbol; must be followed by decode().
  std::uint32_t peek(std::uint32_t total) {
    if (total == 0 || total > kRangeBot) throw ArgumentError("range coder: invalid total");
    range_ /= total;
    const std::uint32_t v = (code_ - low_) / range_;
    if (v >= total) throw DecodeError("range decoder: corrupt payload (count out of range)");
    return v;
  }

  void decode(std::uint32_t cum, std::uint32_t freq) {
    low_ += cum * range_;
    range_ *= freq;
    for (;;) {
      if ((low_ ^ (low_ + range_)) >= kRangeTop) {
        if (range_ >= kRangeBot) break;
        range_ = (0u - low_) & (kRangeBot - 1);
      }
      code_ = (code_ << 8) | next_byte();
      range_ <<= 8;
      low_ <<= 8;
    }
  }

  std::size_t consumed() const { return pos_; }

 private:
  std::uint32_t next_byte() {
    if (pos_ >= bytes_.size()) throw DecodeError("range decoder: payload truncated");
    return bytes_[pos_++];
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t low_ = 0, code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace rdsc
