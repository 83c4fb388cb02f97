#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdsc/attacks/attacks.hpp"
#include "rdsc/common/error.hpp"

namespace rdsc {

enum class AttackKind { pgd, eot, fda };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::pgd: return "pgd";
    case AttackKind::eot: return "eot";
    case AttackKind::fda: return "fda";
  }
  return "?";
}

inline AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "pgd") return AttackKind::pgd;
  if (s == "eot") return AttackKind::eot;
  if (s == "fda") return AttackKind::fda;
  throw ArgumentError("unknown attack kind '" + s + "' (pgd, eot, fda)");
}

/// A named attack. The name labels report conditions ("vanilla", "eot", ...).
struct AttackSpec {
  std::string name = "vanilla";
  AttackKind kind = AttackKind::pgd;
  AttackConfig config;
  bool operator==(const AttackSpec&) const = default;
};

enum class DefenseMode { none, naive_random, k_way };

struct DefenseSpec {
  DefenseMode mode = DefenseMode::none;
  std::uint32_t k = 2;  // k_way only

  /// Report label: original, naive, two_way, k_way<K>.
  std::string label() const {
    switch (mode) {
      case DefenseMode::none: return "original";
      case DefenseMode::naive_random: return "naive";
      case DefenseMode::k_way: return k == 2 ? "two_way" : "k_way" + std::to_string(k);
    }
    return "?";
  }
  bool operator==(const DefenseSpec&) const = default;
};

/// "none", "naive_random", "two_way" or "k_way:<K>".
inline DefenseSpec defense_from_string(const std::string& s) {
  if (s == "none" || s == "original") return {DefenseMode::none, 1};
  if (s == "naive_random" || s == "naive") return {DefenseMode::naive_random, 1};
  if (s == "two_way") return {DefenseMode::k_way, 2};
  if (s.rfind("k_way:", 0) == 0) {
    const std::string n = s.substr(6);
    if (n.empty() || n.find_first_not_of("0123456789") != std::string::npos) throw ArgumentError("bad defense '" + s + "'");
    const unsigned long k = std::stoul(n);
    if (k < 1 || k > 1024) throw ArgumentError("k_way: K must lie in [1, 1024]");
    return {DefenseMode::k_way, static_cast<std::uint32_t>(k)};
  }
  throw ArgumentError("unknown defense '" + s + "' (none, naive_random, two_way, k_way:<K>)");
}

inline std::string defense_to_string(const DefenseSpec& d) {
  switch (d.mode) {
    case DefenseMode::none: return "none";
    case DefenseMode::naive_random: return "naive_random";
    case DefenseMode::k_way: return d.k == 2 ? "two_way" : "k_way:" + std::to_string(d.k);
  }
  return "?";
}

struct ModelSpec {
  std::string name;        // report label
  std::string checkpoint;  // path
  bool operator==(const ModelSpec&) const = default;
};

struct DatasetSpec {
  std::string path;
  std::uint64_t split_seed = 0;
  std::size_t max_images = 0;  // 0 = all; otherwise a seeded subset
  std::size_t target_h = 0, target_w = 0;
  bool operator==(const DatasetSpec&) const = default;
};

/// Study transforms of the degradation experiment, per family.
struct DegradationSpec {
  std::vector<std::uint16_t> shifts{0, 16, 32, 48, 64};    // tx = ty
  std::vector<std::uint16_t> stretches{0, 16, 32, 48, 64}; // sx = sy
  std::vector<std::size_t> pads{0, 8, 16, 24, 32};
  std::vector<double> rotations{0, 2.5, 5, 7.5, 10};
  bool operator==(const DegradationSpec&) const = default;
};

enum class ExperimentKind { defense, sweep, kway, degradation };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::defense: return "defense";
    case ExperimentKind::sweep: return "sweep";
    case ExperimentKind::kway: return "kway";
    case ExperimentKind::degradation: return "degradation";
  }
  return "?";
}

inline ExperimentKind experiment_from_string(const std::string& s) {
  if (s == "defense") return ExperimentKind::defense;
  if (s == "sweep") return ExperimentKind::sweep;
  if (s == "kway") return ExperimentKind::kway;
  if (s == "degradation") return ExperimentKind::degradation;
  throw ArgumentError("unknown experiment '" + s + "' (defense, sweep, kway, degradation)");
}

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::defense;
  std::vector<ModelSpec> models;  // sweep: every variant; otherwise models[0]
  std::string adv_model;          // defense: optional adversarially fine-tuned baseline
  DatasetSpec dataset;
  std::vector<AttackSpec> attacks;
  std::vector<DefenseSpec> defenses{{DefenseMode::none, 1}, {DefenseMode::k_way, 2}};
  std::vector<std::string> metrics{"bpp", "psnr", "ms_ssim"};
  std::string output_dir;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::optional<double> lambda;  // selection lambda; defaults to the model's

  // sweep
  std::vector<double> epsilons{1.0 / 255, 2.0 / 255, 4.0 / 255, 8.0 / 255};
  std::vector<AttackTarget> sweep_targets{AttackTarget::rate, AttackTarget::distortion};
  std::uint32_t sweep_iters = 50;
  double alpha_ratio = 0.5;  // alpha = ratio * epsilon

  // kway
  std::vector<std::uint32_t> ks{1, 2, 4, 8};
  std::size_t repeats = 1;

  DegradationSpec degradation;
  std::size_t histogram_bins = 10;

  bool wants(const std::string& metric) const {
    return std::find(metrics.begin(), metrics.end(), metric) != metrics.end();
  }

  void validate() const {
    if (models.empty()) throw ArgumentError("config: at least one model checkpoint is required");
    for (const auto& m : models)
      if (m.checkpoint.empty()) throw ArgumentError("config: model '" + m.name + "' has no checkpoint path");
    if (dataset.path.empty()) throw ArgumentError("config: dataset path is required");
    if (workers < 1) throw ArgumentError("config: workers must be >= 1");
    if (histogram_bins < 1) throw ArgumentError("config: histogram_bins must be >= 1");
    for (const auto& a : attacks) {
      a.config.validate();
      if (a.name.empty() || a.name == "clean") throw ArgumentError("config: attack names must be non-empty and not 'clean'");
      if (a.kind == AttackKind::eot && a.config.eot_samples == 0) throw ArgumentError("config: eot attack '" + a.name + "' needs eot_samples >= 1");
    }
    for (const auto& m : metrics)
      if (m != "bpp" && m != "psnr" && m != "ms_ssim") throw ArgumentError("config: unknown metric '" + m + "'");
    for (double e : epsilons)
      if (!(e >= 0.0 && e <= 1.0)) throw ArgumentError("config: epsilons must lie in [0, 1]");
    if (!(alpha_ratio > 0.0 && alpha_ratio <= 1.0)) throw ArgumentError("config: alpha_ratio must lie in (0, 1]");
    for (auto k : ks)
      if (k < 1) throw ArgumentError("config: K values must be >= 1");
    if (repeats < 1) throw ArgumentError("config: repeats must be >= 1");
    if (experiment == ExperimentKind::kway && ks.empty()) throw ArgumentError("config: kway needs K values");
    for (double r : degradation.rotations) StudyTransform::rotate(r);
    for (std::size_t p : degradation.pads) StudyTransform::zero_pad(p);
    for (auto s : degradation.shifts)
      if (s >= kShiftLevels) throw ArgumentError("config: shift levels must lie in [0, 64]");
    for (auto s : degradation.stretches)
      if (s >= kStretchLevels) throw ArgumentError("config: stretch levels must lie in [0, 64]");
  }
};

// JSON mapping. Every field is optional on input and defaults as above.

inline void to_json(nlohmann::ordered_json& j, const AttackConfig& c) {
  j = {{"epsilon", c.epsilon}, {"alpha", c.alpha}, {"iters", c.iters}, {"target", to_string(c.target)},
       {"eot_samples", c.eot_samples}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::ordered_json& j, AttackConfig& c) {
  c.epsilon = j.value("epsilon", c.epsilon);
  c.alpha = j.value("alpha", c.alpha);
  c.iters = j.value("iters", c.iters);
  if (j.contains("target")) c.target = attack_target_from_string(j.at("target").get<std::string>());
  c.eot_samples = j.value("eot_samples", c.eot_samples);
  c.seed = j.value("seed", c.seed);
}

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  using json = nlohmann::ordered_json;
  json models = json::array();
  for (const auto& m : c.models) models.push_back({{"name", m.name}, {"checkpoint", m.checkpoint}});
  json attacks = json::array();
  for (const auto& a : c.attacks) {
    json aj;
    to_json(aj, a.config);
    aj["name"] = a.name;
    aj["kind"] = to_string(a.kind);
    attacks.push_back(aj);
  }
  json defenses = json::array();
  for (const auto& d : c.defenses) defenses.push_back(defense_to_string(d));
  json targets = json::array();
  for (auto t : c.sweep_targets) targets.push_back(to_string(t));
  json j;
  j["experiment"] = to_string(c.experiment);
  j["models"] = models;
  j["adv_model"] = c.adv_model;
  j["dataset"] = {{"path", c.dataset.path}, {"split_seed", c.dataset.split_seed}, {"max_images", c.dataset.max_images},
                  {"target_h", c.dataset.target_h}, {"target_w", c.dataset.target_w}};
  j["attacks"] = attacks;
  j["defenses"] = defenses;
  j["metrics"] = c.metrics;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["lambda"] = c.lambda ? json(*c.lambda) : json(nullptr);
  j["epsilons"] = c.epsilons;
  j["sweep_targets"] = targets;
  j["sweep_iters"] = c.sweep_iters;
  j["alpha_ratio"] = c.alpha_ratio;
  j["ks"] = c.ks;
  j["repeats"] = c.repeats;
  j["degradation"] = {{"shifts", c.degradation.shifts}, {"stretches", c.degradation.stretches},
                      {"pads", c.degradation.pads}, {"rotations", c.degradation.rotations}};
  j["histogram_bins"] = c.histogram_bins;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::ordered_json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ArgumentError("config: top level must be an object");
    if (j.contains("experiment")) c.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j.at("models")) c.models.push_back({m.value("name", std::string("model")), m.at("checkpoint").get<std::string>()});
    }
    c.adv_model = j.value("adv_model", c.adv_model);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      c.dataset.path = d.value("path", c.dataset.path);
      c.dataset.split_seed = d.value("split_seed", c.dataset.split_seed);
      c.dataset.max_images = d.value("max_images", c.dataset.max_images);
      c.dataset.target_h = d.value("target_h", c.dataset.target_h);
      c.dataset.target_w = d.value("target_w", c.dataset.target_w);
    }
    if (j.contains("attacks")) {
      c.attacks.clear();
      for (const auto& a : j.at("attacks")) {
        AttackSpec s;
        s.name = a.value("name", s.name);
        if (a.contains("kind")) s.kind = attack_kind_from_string(a.at("kind").get<std::string>());
        from_json(a, s.config);
        c.attacks.push_back(s);
      }
    }
    if (j.contains("defenses")) {
      c.defenses.clear();
      for (const auto& d : j.at("defenses")) c.defenses.push_back(defense_from_string(d.get<std::string>()));
    }
    if (j.contains("metrics")) c.metrics = j.at("metrics").get<std::vector<std::string>>();
    c.output_dir = j.value("output_dir", c.output_dir);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    if (j.contains("lambda") && !j.at("lambda").is_null()) c.lambda = j.at("lambda").get<double>();
    if (j.contains("epsilons")) c.epsilons = j.at("epsilons").get<std::vector<double>>();
    if (j.contains("sweep_targets")) {
      c.sweep_targets.clear();
      for (const auto& t : j.at("sweep_targets")) c.sweep_targets.push_back(attack_target_from_string(t.get<std::string>()));
    }
    c.sweep_iters = j.value("sweep_iters", c.sweep_iters);
    c.alpha_ratio = j.value("alpha_ratio", c.alpha_ratio);
    if (j.contains("ks")) c.ks = j.at("ks").get<std::vector<std::uint32_t>>();
    c.repeats = j.value("repeats", c.repeats);
    if (j.contains("degradation")) {
      const auto& d = j.at("degradation");
      if (d.contains("shifts")) c.degradation.shifts = d.at("shifts").get<std::vector<std::uint16_t>>();
      if (d.contains("stretches")) c.degradation.stretches = d.at("stretches").get<std::vector<std::uint16_t>>();
      if (d.contains("pads")) c.degradation.pads = d.at("pads").get<std::vector<std::size_t>>();
      if (d.contains("rotations")) c.degradation.rotations = d.at("rotations").get<std::vector<double>>();
    }
    c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config " + path.string());
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace rdsc
