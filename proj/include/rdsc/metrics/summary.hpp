#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rdsc/codec/codec.hpp"
#include "rdsc/metrics/metrics.hpp"

namespace rdsc {

inline constexpr std::size_t kDefaultHistogramBins = 10;

/// Per-condition aggregate over a list of per-image records.
struct EvalSummary {
  std::string condition;
  std::vector<std::string> image_ids;
  std::vector<RDRecord> records;

  double mean_bpp = 0.0, median_bpp = 0.0;
  double mean_psnr = 0.0, median_psnr = 0.0;  // capped at kPsnrCap
  double mean_ms_ssim = 0.0;                   // over images where it was evaluated
  double mean_rd = 0.0, median_rd = 0.0;
  double mean_distortion = 0.0;
  Histogram bpp_hist, rd_hist;
};

inline std::vector<double> column(const std::vector<RDRecord>& rs, double RDRecord::*field) {
  std::vector<double> v;
  v.reserve(rs.size());
  for (const auto& r : rs) v.push_back(r.*field);
  return v;
}

/// Aggregates and histograms of `records`. Histograms span the values' own
/// range unless explicit [lo, hi] ranges are supplied (shared ranges make
/// histograms of different conditions comparable bin for bin).
inline EvalSummary summarize(std::string condition, std::vector<std::string> image_ids, std::vector<RDRecord> records,
                             std::size_t bins = kDefaultHistogramBins, const std::pair<double, double>* bpp_range = nullptr,
                             const std::pair<double, double>* rd_range = nullptr) {
  if (records.empty()) throw ArgumentError("summarize: no records for condition " + condition);
  if (image_ids.size() != records.size()) throw ArgumentError("summarize: image id count does not match records");
  EvalSummary s;
  s.condition = std::move(condition);
  s.image_ids = std::move(image_ids);
  s.records = std::move(records);
  const auto bpp = column(s.records, &RDRecord::rate_bpp);
  const auto rd = column(s.records, &RDRecord::rd_loss);
  auto psnr = column(s.records, &RDRecord::psnr_db);
  for (double& p : psnr) p = psnr_capped(p);
  std::vector<double> ssim;
  for (const auto& r : s.records)
    if (std::isfinite(r.ms_ssim)) ssim.push_back(r.ms_ssim);
  s.mean_bpp = mean_of(bpp);
  s.median_bpp = median_of(bpp);
  s.mean_psnr = mean_of(psnr);
  s.median_psnr = median_of(psnr);
  s.mean_ms_ssim = ssim.empty() ? std::nan("") : mean_of(ssim);
  s.mean_rd = mean_of(rd);
  s.median_rd = median_of(rd);
  s.mean_distortion = mean_of(column(s.records, &RDRecord::distortion));
  s.bpp_hist = bpp_range ? histogram(bpp, bins, bpp_range->first, bpp_range->second) : histogram(bpp, bins);
  s.rd_hist = rd_range ? histogram(rd, bins, rd_range->first, rd_range->second) : histogram(rd, bins);
  return s;
}

}  // namespace rdsc
