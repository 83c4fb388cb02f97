#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "rdsc/common/error.hpp"
#include "rdsc/tensor_core/tensor.hpp"

namespace rdsc {

/// PSNR value used in tables when the reconstruction is exact.
inline constexpr double kPsnrCap = 99.0;

/// Mean squared error between two same-shape images, in double.
template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape) throw ShapeError("mse: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  if (a.numel() == 0) throw ShapeError("mse: empty image");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

/// 10*log10(1/mse) for unit-range pixels; +inf when mse == 0.
inline double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse_value);
}

/// Table form of psnr: the +inf sentinel is capped.
inline double psnr_capped(double psnr_db) { return std::min(psnr_db, kPsnrCap); }

template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& xhat) {
  return psnr_from_mse(mse(x, xhat));
}

namespace detail {

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01, kSsimK2 = 0.03;

inline std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(kSsimWindow / 2);
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

/// Separable 'valid' Gaussian filter of an h x w plane.
inline std::vector<double> gaussian_valid(const std::vector<double>& p, std::size_t h, std::size_t w) {
  static const auto win = gaussian_window();
  const std::size_t oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;
  std::vector<double> tmp(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += win[k] * p[y * w + x + k];
      tmp[y * ow + x] = acc;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += win[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

/// Mean SSIM and mean contrast-structure term of one plane pair.
inline std::pair<double, double> ssim_cs(const std::vector<double>& a, const std::vector<double>& b, std::size_t h,
                                         std::size_t w) {
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = gaussian_valid(a, h, w), mu_b = gaussian_valid(b, h, w);
  const auto e_aa = gaussian_valid(aa, h, w), e_bb = gaussian_valid(bb, h, w), e_ab = gaussian_valid(ab, h, w);
  double ssim_sum = 0.0, cs_sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    const double cs = (2.0 * cov + c2) / (va + vb + c2);
    const double lum = (2.0 * mu_a[i] * mu_b[i] + c1) / (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1);
    ssim_sum += lum * cs;
    cs_sum += cs;
  }
  const double n = static_cast<double>(mu_a.size());
  return {ssim_sum / n, cs_sum / n};
}

/// 2x2 average pooling; odd extents keep a last row/column averaged over
/// the pixels that exist, so the output is ceil(h/2) x ceil(w/2).
inline std::vector<double> avg_pool2(const std::vector<double>& p, std::size_t h, std::size_t w) {
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      int n = 0;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) {
          const std::size_t yy = 2 * y + dy, xx = 2 * x + dx;
          if (yy < h && xx < w) {
            acc += p[yy * w + xx];
            ++n;
          }
        }
      out[y * ow + x] = acc / n;
    }
  return out;
}

}  // namespace detail

/// Number of MS-SSIM scales usable for a min(H, W) extent: every scale,
/// after ceil-halving, must still hold the 11-tap window. 161 and above
/// gives all 5.
inline std::size_t ms_ssim_scales(std::size_t min_extent) {
  std::size_t scales = 0;
  for (std::size_t e = min_extent; scales < detail::kMsSsimWeights.size() && e >= detail::kSsimWindow; e = (e + 1) / 2)
    ++scales;
  return scales;
}

/// MS-SSIM weights for `scales` scales, renormalised to sum to 1.
inline std::vector<double> ms_ssim_weights(std::size_t scales) {
  std::vector<double> w(detail::kMsSsimWeights.begin(), detail::kMsSsimWeights.begin() + static_cast<long>(scales));
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

/// Multi-scale SSIM of [C,H,W] images in [0,1] with the standard constants
/// (11-tap Gaussian, sigma 1.5, K = (0.01, 0.03), 2x2 average pooling).
/// Images smaller than 161 pixels on a side use fewer scales with the
/// leading weights renormalised. Negative contrast terms are clamped to 0.
template <typename T>
double ms_ssim(const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape != y.shape) throw ShapeError("ms_ssim: shape mismatch " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  if (x.rank() != 3) throw ShapeError("ms_ssim: expected [C,H,W], got " + shape_str(x.shape));
  const std::size_t C = x.dim(0), H0 = x.dim(1), W0 = x.dim(2);
  const std::size_t scales = ms_ssim_scales(std::min(H0, W0));
  if (scales == 0) throw ShapeError("ms_ssim: image " + std::to_string(H0) + "x" + std::to_string(W0) + " too small for one scale");
  const auto weights = ms_ssim_weights(scales);

  std::vector<double> cs_mean(scales, 0.0);
  double ssim_last = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<double> a(H0 * W0), b(H0 * W0);
    for (std::size_t i = 0; i < H0 * W0; ++i) {
      a[i] = static_cast<double>(x[c * H0 * W0 + i]);
      b[i] = static_cast<double>(y[c * H0 * W0 + i]);
    }
    std::size_t h = H0, w = W0;
    for (std::size_t s = 0; s < scales; ++s) {
      const auto [ss, cs] = detail::ssim_cs(a, b, h, w);
      if (s + 1 == scales) {
        ssim_last += ss / static_cast<double>(C);
      } else {
        cs_mean[s] += cs / static_cast<double>(C);
        a = detail::avg_pool2(a, h, w);
        b = detail::avg_pool2(b, h, w);
        h = (h + 1) / 2;
        w = (w + 1) / 2;
      }
    }
  }
  double result = std::pow(std::max(ssim_last, 0.0), weights[scales - 1]);
  for (std::size_t s = 0; s + 1 < scales; ++s) result *= std::pow(std::max(cs_mean[s], 0.0), weights[s]);
  return result;
}

/// Equal-width histogram.
struct Histogram {
  std::vector<double> edges;  // bins + 1 monotone edges
  std::vector<std::size_t> counts;
};

/// Histogram over [lo, hi] with `bins` equal bins; the last bin is closed.
/// Values outside the range are clamped into the end bins. When lo == hi
/// everything lands in bin 0.
inline Histogram histogram(const std::vector<double>& values, std::size_t bins, double lo, double hi) {
  if (values.empty()) throw ArgumentError("histogram: no values");
  if (bins == 0) throw ArgumentError("histogram: zero bins");
  if (!(hi >= lo)) throw ArgumentError("histogram: hi < lo");
  Histogram h;
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = i == bins ? hi : lo + width * static_cast<double>(i);
  for (double v : values) {
    std::size_t b = 0;
    if (width > 0.0) {
      const double pos = std::floor((v - lo) / width);
      b = pos <= 0.0 ? 0 : std::min(static_cast<std::size_t>(pos), bins - 1);
    }
    ++h.counts[b];
  }
  return h;
}

/// Histogram spanning the min..max of the values.
inline Histogram histogram(const std::vector<double>& values, std::size_t bins) {
  if (values.empty()) throw ArgumentError("histogram: no values");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  return histogram(values, bins, *mn, *mx);
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Linear-interpolated quantile, q in [0,1].
inline double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) throw ArgumentError("quantile of empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (v[i + 1] - v[i]) * (pos - static_cast<double>(i));
}

}  // namespace rdsc
