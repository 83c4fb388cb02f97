#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rdsc/codec/codec.hpp"
#include "rdsc/common/error.hpp"

namespace rdsc {

inline constexpr std::uint32_t kFreqBits = 16;
inline constexpr std::uint32_t kFreqTotal = 1u << kFreqBits;
/// Widest in-table symbol window; anything outside is escaped.
inline constexpr int kMaxTableSymbols = 1024;

/// Quantize a probability vector to integer frequencies summing to exactly
/// 2^16 with every entry >= 1.
///
/// freq_i = max(1, round(p_i * (2^16 - n))), then the total is corrected to
/// 2^16 one unit at a time, in order of largest remainder (raw - freq for
/// increments, freq - raw for decrements; ties by lower index).
inline std::vector<std::uint32_t> quantize_pmf(std::span<const double> probs) {
  const std::size_t n = probs.size();
  if (n == 0) throw ArgumentError("quantize_pmf: empty pmf");
  if (n > kFreqTotal / 2) throw ArgumentError("quantize_pmf: too many symbols");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ArgumentError("quantize_pmf: invalid probability");
    total += p;
  }
  const double budget = static_cast<double>(kFreqTotal - n);
  std::vector<double> raw(n);
  std::vector<std::uint32_t> freq(n);
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    raw[i] = total > 0.0 ? probs[i] / total * budget : budget / static_cast<double>(n);
    freq[i] = static_cast<std::uint32_t>(std::max<long long>(1, std::llround(raw[i])));
    sum += freq[i];
  }
  std::int64_t diff = static_cast<std::int64_t>(kFreqTotal) - sum;
  std::vector<std::size_t> order(n);
  if (diff > 0) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return raw[a] - freq[a] > raw[b] - freq[b]; });
    for (std::size_t k = 0; diff > 0; k = (k + 1) % n, --diff) ++freq[order[k]];
  }
  while (diff < 0) {
    order.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (freq[i] > 1) order.push_back(i);
    if (order.empty()) throw ArgumentError("quantize_pmf: cannot reach total");
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return freq[a] - raw[a] > freq[b] - raw[b]; });
    for (std::size_t k = 0; k < order.size() && diff < 0; ++k, ++diff) --freq[order[k]];
  }
  return freq;
}

/// Per-channel cumulative frequency tables over [ymin, ymax] plus an escape
/// entry (index ymax - ymin + 1). Immutable once built.
struct PmfTable {
  int ymin = 0, ymax = 0;
  std::size_t channels = 0;
  std::vector<std::uint32_t> cdf;  // channels x (entries + 1), cdf[c][0] = 0, cdf[c][entries] = 2^16

  std::size_t symbols() const { return static_cast<std::size_t>(ymax - ymin + 1); }
  std::size_t entries() const { return symbols() + 1; }
  std::size_t escape_index() const { return symbols(); }

  const std::uint32_t* channel_cdf(std::size_t c) const { return cdf.data() + c * (entries() + 1); }
  std::uint32_t freq(std::size_t c, std::size_t k) const { return channel_cdf(c)[k + 1] - channel_cdf(c)[k]; }
  std::uint32_t cum(std::size_t c, std::size_t k) const { return channel_cdf(c)[k]; }

  bool in_range(int v) const { return v >= ymin && v <= ymax; }

  /// Ideal cost in bits of coding v in channel c (escapes add 16 raw bits).
  double symbol_cost(std::size_t c, int v) const {
    const auto k = in_range(v) ? static_cast<std::size_t>(v - ymin) : escape_index();
    const double bits = -std::log2(static_cast<double>(freq(c, k)) / kFreqTotal);
    return in_range(v) ? bits : bits + 16.0;
  }
};

/// Table from per-channel probability vectors (symbols then escape).
inline PmfTable table_from_probabilities(int ymin, int ymax, const std::vector<std::vector<double>>& probs) {
  if (ymin > ymax) throw ArgumentError("pmf table: empty symbol range [" + std::to_string(ymin) + "," + std::to_string(ymax) + "]");
  PmfTable t;
  t.ymin = ymin;
  t.ymax = ymax;
  t.channels = probs.size();
  t.cdf.reserve(t.channels * (t.entries() + 1));
  for (const auto& p : probs) {
    if (p.size() != t.entries()) throw ArgumentError("pmf table: probability vector has wrong length");
    const auto f = quantize_pmf(p);
    std::uint32_t acc = 0;
    t.cdf.push_back(0);
    for (std::uint32_t v : f) t.cdf.push_back(acc += v);
  }
  return t;
}

/// Quantized tables of the model's discretized-logistic entropy model.
/// The escape entry carries the tail mass outside [ymin, ymax].
template <typename T>
PmfTable build_pmf_table(const CodecModel<T>& model, int ymin, int ymax) {
  if (ymin > ymax) throw ArgumentError("pmf table: empty symbol range [" + std::to_string(ymin) + "," + std::to_string(ymax) + "]");
  if (ymax - ymin + 1 > kMaxTableSymbols) throw ArgumentError("pmf table: symbol range too wide");
  const std::size_t C = model.config.latent_channels;
  std::vector<std::vector<double>> probs(C);
  auto cdf = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  for (std::size_t c = 0; c < C; ++c) {
    const double loc = static_cast<double>(model.entropy_loc[c]);
    const double s = model.scale(c);
    auto& p = probs[c];
    double inside = 0.0;
    for (int v = ymin; v <= ymax; ++v) {
      const double pv = logistic_bin_probability(v, loc, s);
      p.push_back(pv);
      inside += pv;
    }
    const double tail = cdf((ymin - 0.5 - loc) / s) + cdf(-(ymax + 0.5 - loc) / s);
    p.push_back(std::max(tail, std::max(0.0, 1.0 - inside)));
  }
  return table_from_probabilities(ymin, ymax, probs);
}

}  // namespace rdsc
