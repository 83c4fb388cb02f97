#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdsc/common/error.hpp"
#include "rdsc/harness/experiments.hpp"

namespace rdsc {

enum class ReportFormat { csv, json };

/// 6 significant digits; non-finite values as nan / inf / -inf.
inline std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline constexpr const char* kRowColumns =
    "experiment,condition,model,attack,target,epsilon,defense,image_id,bpp,mse,psnr,ms_ssim,rd_loss,theta";
inline constexpr const char* kSummaryColumns =
    "experiment,condition,n,mean_bpp,median_bpp,mean_mse,mean_psnr,median_psnr,mean_ms_ssim,mean_rd,median_rd";
inline constexpr const char* kHistogramColumns = "experiment,condition,metric,bin,lo,hi,count";
inline constexpr const char* kTimingColumns = "experiment,condition,image_id,encode_ms";

/// Long format: one row per (condition, image).
inline std::string rows_csv(const ExperimentResult& r) {
  std::ostringstream o;
  o << kRowColumns << "\n";
  for (const auto& c : r.conditions)
    for (std::size_t i = 0; i < c.records.size(); ++i) {
      const auto& rec = c.records[i];
      o << csv_field(r.experiment) << ',' << csv_field(c.key.condition) << ',' << csv_field(c.key.model) << ','
        << csv_field(c.key.attack) << ',' << csv_field(c.key.target) << ',' << csv_num(c.key.epsilon) << ','
        << csv_field(c.key.defense) << ',' << csv_field(r.image_ids[i]) << ',' << csv_num(rec.rate_bpp) << ','
        << csv_num(rec.distortion) << ',' << csv_num(psnr_capped(rec.psnr_db)) << ',' << csv_num(rec.ms_ssim) << ','
        << csv_num(rec.rd_loss) << ',' << c.theta[i] << "\n";
    }
  return o.str();
}

inline std::string summary_csv(const ExperimentResult& r) {
  std::ostringstream o;
  o << kSummaryColumns << "\n";
  for (const auto& s : r.summaries)
    o << csv_field(r.experiment) << ',' << csv_field(s.condition) << ',' << s.records.size() << ',' << csv_num(s.mean_bpp) << ','
      << csv_num(s.median_bpp) << ',' << csv_num(s.mean_distortion) << ',' << csv_num(s.mean_psnr) << ','
      << csv_num(s.median_psnr) << ',' << csv_num(s.mean_ms_ssim) << ',' << csv_num(s.mean_rd) << ',' << csv_num(s.median_rd)
      << "\n";
  return o.str();
}

inline std::string histogram_csv(const ExperimentResult& r) {
  std::ostringstream o;
  o << kHistogramColumns << "\n";
  for (const auto& s : r.summaries)
    for (const auto& [metric, h] : {std::pair<const char*, const Histogram*>{"bpp", &s.bpp_hist}, {"rd_loss", &s.rd_hist}})
      for (std::size_t b = 0; b < h->counts.size(); ++b)
        o << csv_field(r.experiment) << ',' << csv_field(s.condition) << ',' << metric << ',' << b << ',' << csv_num(h->edges[b])
          << ',' << csv_num(h->edges[b + 1]) << ',' << h->counts[b] << "\n";
  return o.str();
}

/// Wall-clock encode times. Kept apart from the deterministic reports.
inline std::string timing_csv(const ExperimentResult& r) {
  std::ostringstream o;
  o << kTimingColumns << "\n";
  for (const auto& c : r.conditions)
    for (std::size_t i = 0; i < c.encode_ms.size(); ++i)
      o << csv_field(r.experiment) << ',' << csv_field(c.key.condition) << ',' << csv_field(r.image_ids[i]) << ','
        << csv_num(c.encode_ms[i]) << "\n";
  return o.str();
}

// JSON keeps full precision; non-finite doubles become strings.

inline nlohmann::ordered_json num_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double num_from_json(const nlohmann::ordered_json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::nan("");
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw FormatError("report: bad number '" + s + "'");
  }
  return j.get<double>();
}

inline nlohmann::ordered_json histogram_json(const Histogram& h) {
  nlohmann::ordered_json e = nlohmann::ordered_json::array();
  for (double v : h.edges) e.push_back(num_json(v));
  return {{"edges", e}, {"counts", h.counts}};
}

inline Histogram histogram_from_json(const nlohmann::ordered_json& j) {
  Histogram h;
  for (const auto& v : j.at("edges")) h.edges.push_back(num_from_json(v));
  h.counts = j.at("counts").get<std::vector<std::size_t>>();
  return h;
}

inline nlohmann::ordered_json record_json(const RDRecord& r) {
  return {{"bpp", num_json(r.rate_bpp)}, {"mse", num_json(r.distortion)}, {"rd_loss", num_json(r.rd_loss)},
          {"psnr", num_json(r.psnr_db)}, {"ms_ssim", num_json(r.ms_ssim)}};
}

inline RDRecord record_from_json(const nlohmann::ordered_json& j) {
  RDRecord r;
  r.rate_bpp = num_from_json(j.at("bpp"));
  r.distortion = num_from_json(j.at("mse"));
  r.rd_loss = num_from_json(j.at("rd_loss"));
  r.psnr_db = num_from_json(j.at("psnr"));
  r.ms_ssim = num_from_json(j.at("ms_ssim"));
  return r;
}

inline nlohmann::ordered_json summary_json(const EvalSummary& s) {
  nlohmann::ordered_json recs = nlohmann::ordered_json::array();
  for (const auto& r : s.records) recs.push_back(record_json(r));
  return {{"condition", s.condition},
          {"image_ids", s.image_ids},
          {"records", recs},
          {"mean_bpp", num_json(s.mean_bpp)},
          {"median_bpp", num_json(s.median_bpp)},
          {"mean_psnr", num_json(s.mean_psnr)},
          {"median_psnr", num_json(s.median_psnr)},
          {"mean_ms_ssim", num_json(s.mean_ms_ssim)},
          {"mean_rd", num_json(s.mean_rd)},
          {"median_rd", num_json(s.median_rd)},
          {"mean_mse", num_json(s.mean_distortion)},
          {"bpp_hist", histogram_json(s.bpp_hist)},
          {"rd_hist", histogram_json(s.rd_hist)}};
}

inline EvalSummary summary_from_json(const nlohmann::ordered_json& j) {
  EvalSummary s;
  s.condition = j.at("condition").get<std::string>();
  s.image_ids = j.at("image_ids").get<std::vector<std::string>>();
  for (const auto& r : j.at("records")) s.records.push_back(record_from_json(r));
  s.mean_bpp = num_from_json(j.at("mean_bpp"));
  s.median_bpp = num_from_json(j.at("median_bpp"));
  s.mean_psnr = num_from_json(j.at("mean_psnr"));
  s.median_psnr = num_from_json(j.at("median_psnr"));
  s.mean_ms_ssim = num_from_json(j.at("mean_ms_ssim"));
  s.mean_rd = num_from_json(j.at("mean_rd"));
  s.median_rd = num_from_json(j.at("median_rd"));
  s.mean_distortion = num_from_json(j.at("mean_mse"));
  s.bpp_hist = histogram_from_json(j.at("bpp_hist"));
  s.rd_hist = histogram_from_json(j.at("rd_hist"));
  return s;
}

inline nlohmann::ordered_json result_json(const ExperimentResult& r) {
  nlohmann::ordered_json conds = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < r.conditions.size(); ++c) {
    const auto& k = r.conditions[c].key;
    conds.push_back({{"condition", k.condition},
                     {"model", k.model},
                     {"attack", k.attack},
                     {"target", k.target},
                     {"epsilon", num_json(k.epsilon)},
                     {"defense", k.defense},
                     {"theta", r.conditions[c].theta},
                     {"summary", summary_json(r.summaries.at(c))}});
  }
  return {{"experiment", r.experiment}, {"image_ids", r.image_ids}, {"warnings", r.warnings}, {"conditions", conds}};
}

/// Inverse of result_json. Encode times are not part of the JSON report.
inline ExperimentResult result_from_json(const nlohmann::ordered_json& j) {
  ExperimentResult r;
  try {
    r.experiment = j.at("experiment").get<std::string>();
    r.image_ids = j.at("image_ids").get<std::vector<std::string>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& c : j.at("conditions")) {
      ConditionResult cr;
      cr.key = {c.at("condition").get<std::string>(), c.at("model").get<std::string>(), c.at("attack").get<std::string>(),
                c.at("target").get<std::string>(),    num_from_json(c.at("epsilon")),   c.at("defense").get<std::string>()};
      cr.theta = c.at("theta").get<std::vector<std::uint32_t>>();
      EvalSummary s = summary_from_json(c.at("summary"));
      cr.records = s.records;
      cr.encode_ms.assign(cr.records.size(), 0.0);
      if (cr.theta.size() != cr.records.size() || s.image_ids != r.image_ids) throw FormatError("report: inconsistent condition " + cr.key.condition);
      r.conditions.push_back(std::move(cr));
      r.summaries.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  return r;
}

inline ExperimentResult load_result(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open report " + path.string());
  try {
    return result_from_json(nlohmann::ordered_json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline bool same_number(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

inline bool same_record(const RDRecord& a, const RDRecord& b) {
  return same_number(a.rate_bpp, b.rate_bpp) && same_number(a.distortion, b.distortion) && same_number(a.rd_loss, b.rd_loss) &&
         same_number(a.psnr_db, b.psnr_db) && same_number(a.ms_ssim, b.ms_ssim);
}

inline bool same_summary(const EvalSummary& a, const EvalSummary& b) {
  if (a.condition != b.condition || a.image_ids != b.image_ids || a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i)
    if (!same_record(a.records[i], b.records[i])) return false;
  auto same_hist = [](const Histogram& x, const Histogram& y) {
    if (x.counts != y.counts || x.edges.size() != y.edges.size()) return false;
    for (std::size_t i = 0; i < x.edges.size(); ++i)
      if (!same_number(x.edges[i], y.edges[i])) return false;
    return true;
  };
  return same_number(a.mean_bpp, b.mean_bpp) && same_number(a.median_bpp, b.median_bpp) && same_number(a.mean_psnr, b.mean_psnr) &&
         same_number(a.median_psnr, b.median_psnr) && same_number(a.mean_ms_ssim, b.mean_ms_ssim) &&
         same_number(a.mean_rd, b.mean_rd) && same_number(a.median_rd, b.median_rd) &&
         same_number(a.mean_distortion, b.mean_distortion) && same_hist(a.bpp_hist, b.bpp_hist) && same_hist(a.rd_hist, b.rd_hist);
}

struct ReportFiles {
  std::vector<std::filesystem::path> written;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Writes <dir>/<experiment>.{csv,json} plus _summary.csv, _hist.csv and the
/// separate _timing.csv.
inline ReportFiles emit_report(const ExperimentResult& r, const std::filesystem::path& dir, const std::vector<ReportFormat>& formats,
                               bool with_timing = true) {
  if (r.summaries.empty()) throw ArgumentError("emit_report: no summaries");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw ArgumentError("emit_report: cannot create output directory " + dir.string());
  ReportFiles out;
  auto put = [&](const std::string& name, const std::string& text) {
    const auto p = dir / name;
    try {
      write_text(p, text);
    } catch (const Error& e) {
      throw ArgumentError(std::string("emit_report: ") + e.what());
    }
    out.written.push_back(p);
  };
  for (auto f : formats) {
    if (f == ReportFormat::csv) {
      put(r.experiment + ".csv", rows_csv(r));
      put(r.experiment + "_summary.csv", summary_csv(r));
      put(r.experiment + "_hist.csv", histogram_csv(r));
    } else {
      put(r.experiment + ".json", result_json(r).dump(2) + "\n");
    }
  }
  if (with_timing) put(r.experiment + "_timing.csv", timing_csv(r));
  return out;
}

}  // namespace rdsc
