#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rdsc/attacks/attacks.hpp"
#include "rdsc/codec/checkpoint.hpp"
#include "rdsc/codec/train.hpp"
#include "rdsc/defense/defense.hpp"
#include "rdsc/harness/cli.hpp"
#include "rdsc/harness/experiments.hpp"
#include "rdsc/harness/image_io.hpp"
#include "rdsc/harness/report.hpp"

using namespace rdsc;
using json = nlohmann::ordered_json;

namespace {

// Typed flags that can also come from a JSON config file (file wins).
class Params {
 public:
  explicit Params(CLI::App* app) : app_(app) {
    app_->add_option("-c,--config", config_, "JSON config file; its values win over flags");
  }

  template <typename T>
  CLI::Option* add(const std::string& flag, const std::string& key, T& var, const std::string& desc) {
    CLI::Option* o = app_->add_option(flag, var, desc)->capture_default_str();
    hook(o, key, var);
    return o;
  }

  CLI::Option* flag(const std::string& flag, const std::string& key, bool& var, const std::string& desc) {
    CLI::Option* o = app_->add_flag(flag, var, desc);
    hook(o, key, var);
    return o;
  }

  void resolve() {
    json flags = json::object();
    for (auto& c : collect_) c(flags);
    if (config_.empty()) return;
    for (const auto& w : merge_config(flags, read_json_file(config_))) std::cerr << "warning: " << w << "\n";
    for (auto& a : assign_) a(flags);
  }

 private:
  template <typename T>
  void hook(CLI::Option* o, const std::string& key, T& var) {
    collect_.push_back([o, key, &var](json& j) {
      if (o->count()) j[key] = var;
    });
    assign_.push_back([key, &var](const json& j) {
      if (!j.contains(key)) return;
      try {
        var = j.at(key).get<T>();
      } catch (const nlohmann::json::exception& e) {
        throw ArgumentError("config: bad value for '" + key + "': " + e.what());
      }
    });
  }

  CLI::App* app_;
  std::string config_;
  std::vector<std::function<void(json&)>> collect_;
  std::vector<std::function<void(const json&)>> assign_;
};

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

json record_json_line(const RDRecord& r) {
  return {{"bpp", r.rate_bpp}, {"mse", r.distortion}, {"psnr", r.psnr_db}, {"rd_loss", r.rd_loss}};
}

// train ------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, init;
  double lambda = 100.0;
  bool half = false;
  std::uint32_t mid = 32, latent = 16;
  std::size_t epochs = 100, batch = 8, crop = 64, crops_per_image = 8, log_every = 10;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::string adversarial = "off";
  std::string adv_epsilon = "4/255";
};

int cmd_train(const TrainArgs& a) {
  if (a.data.empty() || a.out.empty()) throw ArgumentError("train: --data and --out are required");
  const Dataset ds = ingest_dataset(a.data);
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
  CodecModel<float> model;
  if (!a.init.empty()) {
    model = load_checkpoint<float>(a.init);
    model.config.lambda = a.lambda;
  } else {
    CodecConfig cc{a.mid, a.latent, 4, a.lambda};
    if (a.half) cc = cc.halved();
    model = CodecModel<float>(cc);
    model.initialize(a.seed);
  }
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.crop = a.crop;
  tc.crops_per_image = a.crops_per_image;
  tc.learning_rate = a.lr;
  tc.seed = a.seed;
  tc.adv_epsilon = parse_level(a.adv_epsilon);
  if (a.adversarial == "fgsm") tc.adversarial = AdversarialMode::fgsm_random_init;
  else if (a.adversarial != "off") throw ArgumentError("train: --adversarial must be off or fgsm");
  const auto t0 = std::chrono::steady_clock::now();
  tc.on_epoch = [&](std::size_t e, double loss) {
    if (a.log_every && (e % a.log_every == 0 || e + 1 == a.epochs))
      std::cerr << "epoch " << e << " loss " << loss << " ("
                << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s)\n";
  };
  train(model, ds.images, tc);
  save_checkpoint(model, a.out);
  print_json({{"checkpoint", a.out}, {"model_id", model.model_id()}, {"lambda", model.config.lambda},
              {"mid_channels", model.config.mid_channels}, {"latent_channels", model.config.latent_channels},
              {"train_rd_loss", mean_eval_rd(model, ds.images)}});
  return 0;
}

// encode / decode -----------------------------------------------------------

struct EncodeArgs {
  std::string model, input, output;
  std::string defense = "two_way";
  std::uint64_t seed = 0;
  double lambda = -1.0;  // < 0: model lambda
};

int cmd_encode(const EncodeArgs& a) {
  if (a.model.empty() || a.input.empty() || a.output.empty()) throw ArgumentError("encode: --model, --input and --output are required");
  const auto model = load_checkpoint<float>(a.model);
  const auto x = read_image(a.input);
  EncodeOptions opt;
  if (a.lambda >= 0.0) opt.lambda = a.lambda;
  const DefenseSpec d = defense_from_string(a.defense);
  const auto out = detail::defend(model, x, d, image_seed(a.seed, std::filesystem::path(a.input).stem().string()), opt);
  const auto bytes = serialize(out.bitstream);
  write_file_bytes(a.output, bytes);
  json j = record_json_line(out.record);
  j["bytes"] = bytes.size();
  j["theta"] = out.theta;
  j["transform"] = to_string(unpack(out.theta));
  j["chosen_arm"] = out.chosen_arm;
  j["arm_losses"] = json::array();
  for (double l : out.arm_losses) j["arm_losses"].push_back(num_json(l));
  j["encode_ms"] = out.encode_ms;
  print_json(j);
  return 0;
}

struct DecodeArgs {
  std::string model, input, output;
};

int cmd_decode(const DecodeArgs& a) {
  if (a.model.empty() || a.input.empty() || a.output.empty()) throw ArgumentError("decode: --model, --input and --output are required");
  const auto model = load_checkpoint<float>(a.model);
  const auto bs = parse_bitstream(read_file_bytes(a.input));
  write_image(decode_any(bs, model), a.output);
  print_json({{"height", bs.orig_h}, {"width", bs.orig_w}, {"theta", bs.transform_index}, {"bits", bs.total_bits()}});
  return 0;
}

// attack ---------------------------------------------------------------------

struct AttackArgs {
  std::string model, input, output;
  std::string kind = "pgd", target = "rate";
  std::string epsilon = "4/255", alpha = "2/255";
  std::uint32_t iters = 50, eot = 0;
  std::uint64_t seed = 0;
};

int cmd_attack(const AttackArgs& a) {
  if (a.model.empty() || a.input.empty() || a.output.empty()) throw ArgumentError("attack: --model, --input and --output are required");
  const auto model = load_checkpoint<float>(a.model);
  const auto x = read_image(a.input);
  AttackSpec spec;
  spec.kind = attack_kind_from_string(a.kind);
  spec.config.epsilon = parse_level(a.epsilon);
  spec.config.alpha = parse_level(a.alpha);
  spec.config.iters = a.iters;
  spec.config.eot_samples = a.eot;
  spec.config.target = attack_target_from_string(a.target);
  if (spec.kind == AttackKind::eot && a.eot == 0) throw ArgumentError("attack: eot needs --eot >= 1");
  const auto xa = detail::run_attack(model, x, spec, a.seed);
  write_image(xa, a.output);
  // the stored 8-bit image is what a victim would compress
  const auto stored = to_tensor(to_image8(xa));
  const auto clean = encode_plain(model, x), attacked = encode_plain(model, stored);
  print_json({{"clean", record_json_line(clean.record)},
              {"attacked", record_json_line(detail::judge(attacked, x, model.config.lambda, false))}});
  return 0;
}

// eval / report --------------------------------------------------------------

std::vector<ReportFormat> parse_formats(const std::vector<std::string>& names) {
  std::vector<ReportFormat> out;
  for (const auto& n : names) {
    if (n == "csv") out.push_back(ReportFormat::csv);
    else if (n == "json") out.push_back(ReportFormat::json);
    else throw ArgumentError("unknown report format '" + n + "' (csv, json)");
  }
  if (out.empty()) throw ArgumentError("no report format selected");
  return out;
}

void print_summary(const ExperimentResult& r) {
  std::printf("%-36s %5s %9s %9s %9s %10s\n", "condition", "n", "bpp", "psnr", "rd_loss", "encode_ms");
  for (std::size_t c = 0; c < r.conditions.size(); ++c) {
    const auto& s = r.summaries[c];
    std::printf("%-36s %5zu %9.4f %9.3f %9.4f %10.2f\n", s.condition.c_str(), s.records.size(), s.mean_bpp, s.mean_psnr, s.mean_rd,
                mean_of(r.conditions[c].encode_ms));
  }
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
}

struct EvalArgs {
  std::string config, experiment, adv_model, dataset, output_dir;
  std::vector<std::string> models, attacks, defenses, metrics, epsilons, formats{"csv", "json"};
  std::vector<std::uint32_t> ks;
  std::uint64_t seed = 0, split_seed = 0;
  std::size_t workers = 1, max_images = 0, repeats = 1, bins = 10, size = 0;
  double lambda = -1.0;
  std::uint32_t iters = 50;
};

// "name=kind:target:eps[:eot]" e.g. "vanilla=pgd:rate:4/255", "eot=eot:rate:4/255:24"
json attack_spec_json(const std::string& s, std::uint32_t iters) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw ArgumentError("attack spec '" + s + "' must look like name=kind:target:eps[:eot]");
  std::vector<std::string> parts;
  std::string rest = s.substr(eq + 1);
  for (std::size_t p; (p = rest.find(':')) != std::string::npos; rest = rest.substr(p + 1)) parts.push_back(rest.substr(0, p));
  parts.push_back(rest);
  if (parts.size() < 3 || parts.size() > 4) throw ArgumentError("attack spec '" + s + "' must look like name=kind:target:eps[:eot]");
  const double eps = parse_level(parts[2]);
  json j = {{"name", s.substr(0, eq)}, {"kind", parts[0]}, {"target", parts[1]}, {"epsilon", eps}, {"alpha", eps / 2.0},
            {"iters", iters}};
  if (parts.size() == 4) j["eot_samples"] = std::stoul(parts[3]);
  return j;
}

int cmd_eval(CLI::App* app, const EvalArgs& a) {
  json flags = json::object();
  auto given = [&](const char* name) { return app->get_option(name)->count() > 0; };
  if (given("--experiment")) flags["experiment"] = a.experiment;
  if (given("--model")) {
    flags["models"] = json::array();
    for (const auto& m : a.models) {
      const auto eq = m.find('=');
      flags["models"].push_back(eq == std::string::npos ? json{{"name", std::filesystem::path(m).stem().string()}, {"checkpoint", m}}
                                                         : json{{"name", m.substr(0, eq)}, {"checkpoint", m.substr(eq + 1)}});
    }
  }
  if (given("--adv-model")) flags["adv_model"] = a.adv_model;
  if (given("--dataset")) flags["dataset"]["path"] = a.dataset;
  if (given("--split-seed")) flags["dataset"]["split_seed"] = a.split_seed;
  if (given("--max-images")) flags["dataset"]["max_images"] = a.max_images;
  if (given("--size")) flags["dataset"]["target_h"] = flags["dataset"]["target_w"] = a.size;
  if (given("--attack")) {
    flags["attacks"] = json::array();
    for (const auto& s : a.attacks) flags["attacks"].push_back(attack_spec_json(s, a.iters));
  }
  if (given("--defense")) flags["defenses"] = a.defenses;
  if (given("--metrics")) flags["metrics"] = a.metrics;
  if (given("--output-dir")) flags["output_dir"] = a.output_dir;
  if (given("--seed")) flags["seed"] = a.seed;
  if (given("--workers")) flags["workers"] = a.workers;
  if (given("--lambda")) flags["lambda"] = a.lambda;
  if (given("--epsilons")) {
    flags["epsilons"] = json::array();
    for (const auto& e : a.epsilons) flags["epsilons"].push_back(parse_level(e));
  }
  if (given("--iters")) flags["sweep_iters"] = a.iters;
  if (given("--ks")) flags["ks"] = a.ks;
  if (given("--repeats")) flags["repeats"] = a.repeats;
  if (given("--bins")) flags["histogram_bins"] = a.bins;
  if (!a.config.empty())
    for (const auto& w : merge_config(flags, read_json_file(a.config))) std::cerr << "warning: " << w << "\n";
  ExperimentConfig cfg = config_from_json(flags);
  cfg.output_dir = default_output_dir(cfg.output_dir);
  const auto result = run_experiment(cfg);
  print_summary(result);
  const auto files = emit_report(result, cfg.output_dir, parse_formats(a.formats));
  for (const auto& f : files.written) std::cerr << "wrote " << f.string() << "\n";
  return 0;
}

struct ReportArgs {
  std::string input, output_dir;
  std::vector<std::string> formats{"csv"};
};

int cmd_report(const ReportArgs& a) {
  if (a.input.empty()) throw ArgumentError("report: --input is required");
  const auto r = load_result(a.input);
  print_summary(r);
  const auto files = emit_report(r, default_output_dir(a.output_dir), parse_formats(a.formats), false);
  for (const auto& f : files.written) std::cerr << "wrote " << f.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned image codec with adversarial attacks and a randomized multi-way encoding defense"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a codec checkpoint");
  Params tp(train_cmd);
  tp.add("--data", "data", ta.data, "directory of training images");
  tp.add("-o,--out", "out", ta.out, "checkpoint to write");
  tp.add("--init", "init", ta.init, "start from this checkpoint (fine-tuning)");
  tp.add("--lambda", "lambda", ta.lambda, "rate-distortion trade-off");
  tp.flag("--half", "half", ta.half, "halve the channel widths");
  tp.add("--mid-channels", "mid_channels", ta.mid, "hidden channels");
  tp.add("--latent-channels", "latent_channels", ta.latent, "latent channels");
  tp.add("--epochs", "epochs", ta.epochs, "training epochs");
  tp.add("--batch", "batch", ta.batch, "batch size");
  tp.add("--crop", "crop", ta.crop, "square crop side (0 = whole image)");
  tp.add("--crops-per-image", "crops_per_image", ta.crops_per_image, "crops per image per epoch");
  tp.add("--lr", "lr", ta.lr, "Adam learning rate");
  tp.add("--seed", "seed", ta.seed, "init and sampling seed");
  tp.add("--adversarial", "adversarial", ta.adversarial, "off | fgsm");
  tp.add("--adv-epsilon", "adv_epsilon", ta.adv_epsilon, "adversarial training radius");
  tp.add("--log-every", "log_every", ta.log_every, "progress interval in epochs (0 = quiet)");

  EncodeArgs ea;
  auto* encode_cmd = app.add_subcommand("encode", "compress an image");
  Params ep(encode_cmd);
  ep.add("-m,--model", "model", ea.model, "checkpoint");
  ep.add("-i,--input", "input", ea.input, "image (png/ppm/pgm)");
  ep.add("-o,--output", "output", ea.output, "bitstream to write");
  ep.add("--defense", "defense", ea.defense, "none | naive_random | two_way | k_way:<K>");
  ep.add("--seed", "seed", ea.seed, "global seed");
  ep.add("--lambda", "lambda", ea.lambda, "selection lambda (default: the model's)");

  DecodeArgs da;
  auto* decode_cmd = app.add_subcommand("decode", "reconstruct an image from a bitstream");
  Params dp(decode_cmd);
  dp.add("-m,--model", "model", da.model, "checkpoint");
  dp.add("-i,--input", "input", da.input, "bitstream");
  dp.add("-o,--output", "output", da.output, "image to write (.png or .ppm)");

  AttackArgs aa;
  auto* attack_cmd = app.add_subcommand("attack", "craft an adversarial image");
  Params ap(attack_cmd);
  ap.add("-m,--model", "model", aa.model, "checkpoint");
  ap.add("-i,--input", "input", aa.input, "clean image");
  ap.add("-o,--output", "output", aa.output, "adversarial image to write");
  ap.add("--kind", "kind", aa.kind, "pgd | eot | fda");
  ap.add("--target", "target", aa.target, "rate | distortion | rd");
  ap.add("--epsilon", "epsilon", aa.epsilon, "l-inf radius, e.g. 4/255");
  ap.add("--alpha", "alpha", aa.alpha, "step size, e.g. 2/255");
  ap.add("--iters", "iters", aa.iters, "iterations");
  ap.add("--eot", "eot", aa.eot, "transforms averaged per step (eot)");
  ap.add("--seed", "seed", aa.seed, "seed");

  EvalArgs va;
  auto* eval_cmd = app.add_subcommand("eval", "run an experiment and write reports");
  eval_cmd->add_option("-c,--config", va.config, "experiment config (JSON); its values win over flags");
  eval_cmd->add_option("--experiment", va.experiment, "defense | sweep | kway | degradation");
  eval_cmd->add_option("--model", va.models, "checkpoint, or name=checkpoint (repeatable)");
  eval_cmd->add_option("--adv-model", va.adv_model, "adversarially fine-tuned checkpoint (defense)");
  eval_cmd->add_option("--dataset", va.dataset, "image directory");
  eval_cmd->add_option("--split-seed", va.split_seed, "subset seed");
  eval_cmd->add_option("--max-images", va.max_images, "subset size (0 = all)");
  eval_cmd->add_option("--size", va.size, "centre-crop and resize to size x size");
  eval_cmd->add_option("--attack", va.attacks, "name=kind:target:eps[:eot] (repeatable)");
  eval_cmd->add_option("--defense", va.defenses, "none | naive_random | two_way | k_way:<K> (repeatable)");
  eval_cmd->add_option("--metrics", va.metrics, "bpp psnr ms_ssim");
  eval_cmd->add_option("--output-dir", va.output_dir, std::string("report directory (default $") + kOutputDirEnv + " or results)");
  eval_cmd->add_option("--seed", va.seed, "global seed");
  eval_cmd->add_option("--workers", va.workers, "image-level worker threads");
  eval_cmd->add_option("--lambda", va.lambda, "selection lambda");
  eval_cmd->add_option("--epsilons", va.epsilons, "sweep radii, e.g. 1/255 2/255");
  eval_cmd->add_option("--iters", va.iters, "attack iterations");
  eval_cmd->add_option("--ks", va.ks, "K values (kway)");
  eval_cmd->add_option("--repeats", va.repeats, "arm draws per image (kway)");
  eval_cmd->add_option("--bins", va.bins, "histogram bins");
  eval_cmd->add_option("--format", va.formats, "csv json")->capture_default_str();

  ReportArgs ra;
  auto* report_cmd = app.add_subcommand("report", "re-emit reports from a JSON result");
  report_cmd->add_option("-i,--input", ra.input, "<experiment>.json");
  report_cmd->add_option("--output-dir", ra.output_dir, "report directory");
  report_cmd->add_option("--format", ra.formats, "csv json")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (train_cmd->parsed()) {
      tp.resolve();
      return cmd_train(ta);
    }
    if (encode_cmd->parsed()) {
      ep.resolve();
      return cmd_encode(ea);
    }
    if (decode_cmd->parsed()) {
      dp.resolve();
      return cmd_decode(da);
    }
    if (attack_cmd->parsed()) {
      ap.resolve();
      return cmd_attack(aa);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_cmd, va);
    if (report_cmd->parsed()) return cmd_report(ra);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
