#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rdsc/attacks/attacks.hpp"
#include "rdsc/codec/checkpoint.hpp"
#include "rdsc/common/bytes.hpp"
#include "rdsc/defense/defense.hpp"
#include "rdsc/harness/config.hpp"
#include "rdsc/harness/dataset.hpp"
#include "rdsc/metrics/summary.hpp"

namespace rdsc {

/// Labels of one report condition.
struct ConditionKey {
  std::string condition;
  std::string model;
  std::string attack = "clean";
  std::string target;  // attack target, empty for clean
  double epsilon = 0.0;
  std::string defense = "original";
  bool operator==(const ConditionKey&) const = default;
};

struct ConditionResult {
  ConditionKey key;
  std::vector<RDRecord> records;      // one per image, dataset order
  std::vector<std::uint32_t> theta;   // emitted transform index (last repeat)
  std::vector<double> encode_ms;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<std::string> image_ids;
  std::vector<ConditionResult> conditions;
  std::vector<EvalSummary> summaries;  // same order as conditions
  std::vector<std::string> warnings;

  const ConditionResult& find(const std::string& condition) const {
    for (const auto& c : conditions)
      if (c.key.condition == condition) return c;
    throw ArgumentError("no condition '" + condition + "' in " + experiment + " results");
  }
  const EvalSummary& summary(const std::string& condition) const {
    for (const auto& s : summaries)
      if (s.condition == condition) return s;
    throw ArgumentError("no condition '" + condition + "' in " + experiment + " results");
  }
};

/// Runs f(i) for i in [0, n) on `workers` threads. Results are written by
/// index, so the outcome never depends on scheduling.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          f(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::uint64_t id_hash(const std::string& id) {
  Fnv1a64 h;
  h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(id.data()), id.size()));
  return h.digest();
}

/// Per-image seed: depends on the global seed and the image id only.
inline std::uint64_t image_seed(std::uint64_t global, const std::string& id) {
  return derive_seed(global, {stream::kImage, id_hash(id)});
}

/// Loads the configured dataset; a max_images subset is drawn with the
/// split seed and kept in filename order.
inline Dataset load_dataset(const DatasetSpec& spec) {
  Dataset ds = ingest_dataset(spec.path, {spec.target_h, spec.target_w});
  if (spec.max_images == 0 || spec.max_images >= ds.size()) return ds;
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(spec.split_seed, {stream::kImage}));
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_below(i)]);
  idx.resize(spec.max_images);
  std::sort(idx.begin(), idx.end());
  Dataset out;
  out.warnings = ds.warnings;
  for (std::size_t i : idx) {
    out.ids.push_back(ds.ids[i]);
    out.images.push_back(std::move(ds.images[i]));
  }
  return out;
}

/// Short decimal for labels: 6 significant digits.
inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

namespace detail {

/// Record of an emitted stream judged against the reference image.
inline RDRecord judge(const EncodeOutcome& out, const Tensor<float>& reference, double lambda, bool want_ms_ssim) {
  RDRecord r = RDRecord::make(out.record.rate_bpp, mse(reference, out.x_hat), lambda);
  if (want_ms_ssim && ms_ssim_scales(std::min(reference.dim(1), reference.dim(2))) > 0) r.ms_ssim = ms_ssim(reference, out.x_hat);
  return r;
}

inline RDRecord mean_record(const std::vector<RDRecord>& rs, double lambda) {
  RDRecord m = RDRecord::make(mean_of(column(rs, &RDRecord::rate_bpp)), mean_of(column(rs, &RDRecord::distortion)), lambda);
  m.psnr_db = mean_of(column(rs, &RDRecord::psnr_db));
  if (std::isfinite(rs.front().ms_ssim)) m.ms_ssim = mean_of(column(rs, &RDRecord::ms_ssim));
  return m;
}

inline Tensor<float> run_attack(const CodecModel<float>& model, const Tensor<float>& x, const AttackSpec& spec, std::uint64_t seed) {
  AttackConfig cfg = spec.config;
  cfg.seed = seed;
  switch (spec.kind) {
    case AttackKind::pgd: cfg.eot_samples = 0; return pgd(model, x, cfg);
    case AttackKind::eot: return eot_attack(model, x, cfg);
    case AttackKind::fda: return fda_lite(model, x, cfg);
  }
  throw ArgumentError("unknown attack kind");
}

inline EncodeOutcome defend(const CodecModel<float>& model, const Tensor<float>& x, const DefenseSpec& d, std::uint64_t img_seed,
                            const EncodeOptions& opt, std::uint64_t repeat = 0) {
  switch (d.mode) {
    case DefenseMode::none: return encode_plain(model, x, opt);
    case DefenseMode::naive_random: {
      Rng rng(derive_seed(img_seed, {stream::kNaive, repeat}));
      return encode_oneway_random(model, x, rng, opt);
    }
    case DefenseMode::k_way: {
      Rng rng(derive_seed(img_seed, {stream::kArms, repeat}));
      return encode_k_way(model, x, rng, d.k, opt);
    }
  }
  throw ArgumentError("unknown defense mode");
}

/// Shared histogram ranges over every condition, then summaries.
inline void finish(ExperimentResult& res, std::size_t bins) {
  std::vector<double> bpp, rd;
  for (const auto& c : res.conditions)
    for (const auto& r : c.records) {
      bpp.push_back(r.rate_bpp);
      rd.push_back(r.rd_loss);
    }
  if (bpp.empty()) throw ArgumentError(res.experiment + ": no results (every image failed)");
  const auto [bmin, bmax] = std::minmax_element(bpp.begin(), bpp.end());
  const auto [rmin, rmax] = std::minmax_element(rd.begin(), rd.end());
  const std::pair<double, double> br{*bmin, *bmax}, rr{*rmin, *rmax};
  res.summaries.clear();
  for (const auto& c : res.conditions) res.summaries.push_back(summarize(c.key.condition, res.image_ids, c.records, bins, &br, &rr));
}

/// Per-image work producing one row per condition. Images whose work throws
/// are dropped from every condition (paired comparisons) with a warning.
struct ImageRow {
  std::vector<RDRecord> records;
  std::vector<std::uint32_t> theta;
  std::vector<double> encode_ms;
  void add(const RDRecord& r, std::uint32_t t, double ms) {
    records.push_back(r);
    theta.push_back(t);
    encode_ms.push_back(ms);
  }
};

inline ExperimentResult assemble(std::string name, const Dataset& ds, std::vector<ConditionKey> keys,
                                 std::vector<std::optional<ImageRow>>& rows, std::vector<std::string> errors, std::size_t bins) {
  ExperimentResult res;
  res.experiment = std::move(name);
  res.warnings = ds.warnings;
  for (auto& k : keys) res.conditions.push_back({std::move(k), {}, {}, {}});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i]) {
      res.warnings.push_back("image " + ds.ids[i] + " dropped: " + errors[i]);
      continue;
    }
    if (rows[i]->records.size() != res.conditions.size()) throw Error("internal: condition count mismatch");
    res.image_ids.push_back(ds.ids[i]);
    for (std::size_t c = 0; c < res.conditions.size(); ++c) {
      res.conditions[c].records.push_back(rows[i]->records[c]);
      res.conditions[c].theta.push_back(rows[i]->theta[c]);
      res.conditions[c].encode_ms.push_back(rows[i]->encode_ms[c]);
    }
  }
  finish(res, bins);
  return res;
}

template <typename Work>
ExperimentResult run_per_image(std::string name, const Dataset& ds, std::vector<ConditionKey> keys, std::size_t workers,
                               std::size_t bins, Work&& work) {
  std::vector<std::optional<ImageRow>> rows(ds.size());
  std::vector<std::string> errors(ds.size());
  parallel_for(ds.size(), workers, [&](std::size_t i) {
    try {
      rows[i] = work(i);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  return assemble(std::move(name), ds, std::move(keys), rows, std::move(errors), bins);
}

}  // namespace detail

/// Original/naive/K-way x clean/attacks grid on models[0], plus the
/// adversarially fine-tuned baseline ("advt") when configured.
inline ExperimentResult run_defense_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_dataset(cfg.dataset);
  const auto model = load_checkpoint<float>(cfg.models.front().checkpoint);
  std::optional<CodecModel<float>> advt;
  if (!cfg.adv_model.empty()) advt = load_checkpoint<float>(cfg.adv_model);
  const double lambda = cfg.lambda.value_or(model.config.lambda);
  EncodeOptions opt;
  opt.lambda = lambda;
  const bool ssim = cfg.wants("ms_ssim");

  std::vector<const AttackSpec*> attacks{nullptr};
  for (const auto& a : cfg.attacks) attacks.push_back(&a);
  std::vector<ConditionKey> keys;
  auto key_for = [&](const AttackSpec* a, const std::string& defense, const std::string& model_name) {
    ConditionKey k;
    k.model = model_name;
    k.defense = defense;
    if (a) {
      k.attack = a->name;
      k.target = to_string(a->config.target);
      k.epsilon = a->config.epsilon;
    }
    k.condition = defense + "+" + k.attack;
    return k;
  };
  for (const auto* a : attacks)
    for (const auto& d : cfg.defenses) keys.push_back(key_for(a, d.label(), cfg.models.front().name));
  if (advt)
    for (const auto* a : attacks) keys.push_back(key_for(a, "advt", "advt"));

  return detail::run_per_image("defense", ds, keys, cfg.workers, cfg.histogram_bins, [&](std::size_t i) {
    const auto& x = ds.images[i];
    const std::uint64_t s = image_seed(cfg.seed, ds.ids[i]);
    detail::ImageRow row;
    for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
      const Tensor<float> xa = attacks[ai] ? detail::run_attack(model, x, *attacks[ai], derive_seed(s, {stream::kAttack, ai})) : x;
      for (const auto& d : cfg.defenses) {
        const auto out = detail::defend(model, xa, d, s, opt);
        row.add(detail::judge(out, x, lambda, ssim), out.theta, out.encode_ms);
      }
    }
    if (advt) {
      EncodeOptions aopt;
      aopt.lambda = lambda;
      for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
        const Tensor<float> xa = attacks[ai] ? detail::run_attack(*advt, x, *attacks[ai], derive_seed(s, {stream::kAttack, ai})) : x;
        const auto out = encode_plain(*advt, xa, aopt);
        row.add(detail::judge(out, x, lambda, ssim), out.theta, out.encode_ms);
      }
    }
    return row;
  });
}

/// Attacked-vs-clean points per model variant, attack target and epsilon
/// (undefended codec, alpha = alpha_ratio * epsilon).
inline ExperimentResult run_vulnerability_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_dataset(cfg.dataset);
  std::vector<CodecModel<float>> models;
  for (const auto& m : cfg.models) models.push_back(load_checkpoint<float>(m.checkpoint));
  const bool ssim = cfg.wants("ms_ssim");
  std::vector<ConditionKey> keys;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const std::string& name = cfg.models[mi].name;
    keys.push_back({name + "/clean", name, "clean", "", 0.0, "original"});
    for (auto t : cfg.sweep_targets)
      for (double e : cfg.epsilons)
        keys.push_back({name + "/" + to_string(t) + "/eps=" + fmt6(e * 255.0) + "/255", name, "pgd", to_string(t), e, "original"});
  }
  return detail::run_per_image("sweep", ds, keys, cfg.workers, cfg.histogram_bins, [&](std::size_t i) {
    const auto& x = ds.images[i];
    const std::uint64_t s = image_seed(cfg.seed, ds.ids[i]);
    detail::ImageRow row;
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      const auto& model = models[mi];
      EncodeOptions opt;
      opt.lambda = cfg.lambda.value_or(model.config.lambda);
      const auto clean = encode_plain(model, x, opt);
      row.add(detail::judge(clean, x, *opt.lambda, ssim), clean.theta, clean.encode_ms);
      for (std::size_t ti = 0; ti < cfg.sweep_targets.size(); ++ti)
        for (std::size_t ei = 0; ei < cfg.epsilons.size(); ++ei) {
          AttackConfig ac;
          ac.epsilon = cfg.epsilons[ei];
          ac.alpha = cfg.alpha_ratio * ac.epsilon;
          ac.iters = cfg.sweep_iters;
          ac.target = cfg.sweep_targets[ti];
          ac.seed = derive_seed(s, {stream::kAttack, mi, ti, ei});
          const auto out = encode_plain(model, pgd(model, x, ac), opt);
          row.add(detail::judge(out, x, *opt.lambda, ssim), out.theta, out.encode_ms);
        }
    }
    return row;
  });
}

/// K-way selection for every K in cfg.ks on clean and attacked inputs,
/// averaged over `repeats` independently seeded arm draws. Under one seed
/// the arm list for K is a prefix of the list for any larger K.
inline ExperimentResult run_kway_study(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_dataset(cfg.dataset);
  const auto model = load_checkpoint<float>(cfg.models.front().checkpoint);
  const double lambda = cfg.lambda.value_or(model.config.lambda);
  EncodeOptions opt;
  opt.lambda = lambda;
  const bool ssim = cfg.wants("ms_ssim");
  std::vector<const AttackSpec*> attacks{nullptr};
  for (const auto& a : cfg.attacks) attacks.push_back(&a);
  std::vector<ConditionKey> keys;
  for (const auto* a : attacks) {
    for (auto k : cfg.ks) {
      ConditionKey key;
      key.model = cfg.models.front().name;
      key.defense = DefenseSpec{DefenseMode::k_way, k}.label();
      if (a) {
        key.attack = a->name;
        key.target = to_string(a->config.target);
        key.epsilon = a->config.epsilon;
      }
      key.condition = key.defense + "+" + key.attack;
      keys.push_back(key);
    }
    ConditionKey naive{"naive+" + (a ? a->name : std::string("clean")), cfg.models.front().name, a ? a->name : "clean",
                       a ? to_string(a->config.target) : "", a ? a->config.epsilon : 0.0, "naive"};
    keys.push_back(naive);
  }
  return detail::run_per_image("kway", ds, keys, cfg.workers, cfg.histogram_bins, [&](std::size_t i) {
    const auto& x = ds.images[i];
    const std::uint64_t s = image_seed(cfg.seed, ds.ids[i]);
    detail::ImageRow row;
    for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
      const Tensor<float> xa = attacks[ai] ? detail::run_attack(model, x, *attacks[ai], derive_seed(s, {stream::kAttack, ai})) : x;
      std::vector<DefenseSpec> defs;
      for (auto k : cfg.ks) defs.push_back({DefenseMode::k_way, k});
      defs.push_back({DefenseMode::naive_random, 1});
      for (const auto& d : defs) {
        std::vector<RDRecord> reps;
        std::uint32_t theta = 0;
        double ms = 0.0;
        for (std::size_t r = 0; r < cfg.repeats; ++r) {
          const auto out = detail::defend(model, xa, d, s, opt, r);
          reps.push_back(detail::judge(out, x, lambda, ssim));
          theta = out.theta;
          ms += out.encode_ms;
        }
        row.add(detail::mean_record(reps, lambda), theta, ms / static_cast<double>(cfg.repeats));
      }
    }
    return row;
  });
}

/// Clean-image cost of single fixed transforms (one-way, no selection).
inline ExperimentResult run_degradation_study(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_dataset(cfg.dataset);
  const auto model = load_checkpoint<float>(cfg.models.front().checkpoint);
  const double lambda = cfg.lambda.value_or(model.config.lambda);
  EncodeOptions opt;
  opt.lambda = lambda;
  const bool ssim = cfg.wants("ms_ssim");
  const auto& dg = cfg.degradation;
  struct Item {
    std::string label;
    std::optional<TransformDescriptor> td;
    std::optional<StudyTransform> st;
  };
  std::vector<Item> items{{"identity", TransformDescriptor{}, std::nullopt}};
  for (auto t : dg.shifts)
    if (t) items.push_back({"shift" + std::to_string(t), TransformDescriptor{0, 0, 0, t, t}, std::nullopt});
  for (auto t : dg.stretches)
    if (t) items.push_back({"stretch" + std::to_string(t), TransformDescriptor{0, t, t, 0, 0}, std::nullopt});
  for (auto p : dg.pads)
    if (p) items.push_back({to_string(StudyTransform::zero_pad(p)), std::nullopt, StudyTransform::zero_pad(p)});
  for (double r : dg.rotations)
    if (r != 0.0) items.push_back({to_string(StudyTransform::rotate(r)), std::nullopt, StudyTransform::rotate(r)});
  std::vector<ConditionKey> keys;
  for (const auto& it : items) keys.push_back({it.label, cfg.models.front().name, "clean", "", 0.0, it.label});
  return detail::run_per_image("degradation", ds, keys, cfg.workers, cfg.histogram_bins, [&](std::size_t i) {
    const auto& x = ds.images[i];
    detail::ImageRow row;
    for (const auto& it : items) {
      if (it.td) {
        const auto out = encode_arms(model, x, {*it.td}, opt);
        row.add(detail::judge(out, x, lambda, ssim), out.theta, out.encode_ms);
        continue;
      }
      // Study transforms are outside T: encode the transformed image plainly
      // and undo the transform after decoding.
      const auto out = encode_plain(model, apply_study(*it.st, x), opt);
      EncodeOutcome back = out;
      back.x_hat = invert_study(*it.st, out.x_hat);
      back.record.rate_bpp = static_cast<double>(out.bitstream.total_bits()) / static_cast<double>(x.dim(1) * x.dim(2));
      row.add(detail::judge(back, x, lambda, ssim), 0, out.encode_ms);
    }
    return row;
  });
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::defense: return run_defense_eval(cfg);
    case ExperimentKind::sweep: return run_vulnerability_sweep(cfg);
    case ExperimentKind::kway: return run_kway_study(cfg);
    case ExperimentKind::degradation: return run_degradation_study(cfg);
  }
  throw ArgumentError("unknown experiment");
}

}  // namespace rdsc
