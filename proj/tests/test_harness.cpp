#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "rdsc/harness/experiments.hpp"
#include "rdsc/harness/image_io.hpp"
#include "rdsc/harness/report.hpp"
#include "support.hpp"

using namespace rdsc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("rdsc_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

Tensor<float> pattern(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t({3, h, w});
  for (auto& v : t.data) v = static_cast<float>(rng.uniform_below(256)) / 255.0f;
  return t;
}

fs::path write_tiny_model(const fs::path& dir, std::uint64_t seed) {
  CodecConfig c;
  c.mid_channels = 4;
  c.latent_channels = 3;
  CodecModel<float> m(c);
  m.initialize(seed);
  const auto p = dir / ("m" + std::to_string(seed) + ".ckpt");
  save_checkpoint(m, p);
  return p;
}

ExperimentConfig tiny_config(const fs::path& root) {
  fs::create_directories(root / "data");
  for (int i = 0; i < 4; ++i) write_image(pattern(12 + 4 * i, 16, i), root / "data" / ("img" + std::to_string(i) + ".png"));
  ExperimentConfig cfg;
  cfg.models = {{"toy", write_tiny_model(root, 1).string()}};
  cfg.dataset.path = (root / "data").string();
  AttackSpec a;
  a.name = "rate4";
  a.config.iters = 2;
  cfg.attacks = {a};
  cfg.seed = 5;
  cfg.metrics = {"bpp", "psnr"};
  return cfg;
}

}  // namespace

TEST(ImageIo, PixelScaling) {
  Image8 img{1, 2, 3, {0, 128, 255, 255, 0, 1}};
  const auto t = to_tensor(img);
  ASSERT_EQ(t.shape, (Shape{3, 1, 2}));
  EXPECT_EQ(t[0], 0.0f);
  EXPECT_EQ(t[1], 1.0f);  // red of the second pixel
  EXPECT_EQ(t[2], static_cast<float>(128.0 / 255.0));
  EXPECT_EQ(to_image8(t).pixels, img.pixels);
}

TEST(ImageIo, GrayIsReplicated) {
  Image8 img{2, 2, 1, {0, 51, 102, 255}};
  const auto t = to_tensor(img);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(t[c * 4 + i], img.pixels[i] / 255.0f);
}

TEST(ImageIo, PngAndPnmRoundTrip) {
  TempDir d("io");
  const auto t = pattern(7, 9, 3);
  for (const char* name : {"a.png", "a.ppm"}) {
    write_image(t, d.path / name);
    const auto back = read_image(d.path / name);
    EXPECT_EQ(back.data, t.data) << name;
  }
  // a png written under a .ppm name is still sniffed by content
  const auto bytes = encode_png(to_image8(t));
  write_file_bytes(d.path / "mislabelled.ppm", bytes);
  EXPECT_EQ(read_image(d.path / "mislabelled.ppm").data, t.data);
}

TEST(ImageIo, PnmWithComments) {
  const std::string s = "P5\n# a comment\n2 1\n# another\n255\n";
  std::vector<std::uint8_t> b(s.begin(), s.end());
  b.push_back(10);
  b.push_back(200);
  const auto img = decode_pnm(b);
  EXPECT_EQ(img.channels, 1u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{10, 200}));
}

TEST(ImageIo, CorruptInputsThrow) {
  std::vector<std::uint8_t> junk{'P', '6', '\n', '4'};
  EXPECT_THROW(decode_pnm(junk), Error);
  std::vector<std::uint8_t> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n', 0, 0};
  EXPECT_THROW(decode_png(png), Error);
  EXPECT_THROW(read_image("/nonexistent/x.png"), Error);
}

TEST(Dataset, MissingAndEmptyDirectories) {
  EXPECT_THROW(ingest_dataset("/nonexistent/dir"), ArgumentError);
  TempDir d("empty");
  EXPECT_THROW(ingest_dataset(d.path), ArgumentError);
}

TEST(Dataset, SkipsUnreadableWithWarningAndSortsByName) {
  TempDir d("ds");
  write_image(pattern(8, 8, 1), d.path / "b.png");
  write_image(pattern(8, 8, 2), d.path / "a.ppm");
  std::ofstream(d.path / "c.png") << "not an image";
  std::ofstream(d.path / "notes.txt") << "ignored";
  const auto ds = ingest_dataset(d.path);
  EXPECT_EQ(ds.ids, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(ds.warnings.size(), 1u);
  EXPECT_NE(ds.warnings[0].find("c.png"), std::string::npos);
}

TEST(Dataset, ResizeToTarget) {
  TempDir d("resize");
  write_image(pattern(30, 50, 1), d.path / "a.png");
  const auto ds = ingest_dataset(d.path, {16, 16});
  EXPECT_EQ(ds.images[0].shape, (Shape{3, 16, 16}));
  EXPECT_THROW(ingest_dataset(d.path, {16, 0}), ArgumentError);
}

TEST(Dataset, SubsetIsSeededAndOrdered) {
  DatasetSpec spec;
  spec.path = RDSC_FIXTURES_DIR "/images";
  spec.max_images = 5;
  spec.split_seed = 3;
  const auto a = load_dataset(spec), b = load_dataset(spec);
  EXPECT_EQ(a.ids, b.ids);
  EXPECT_EQ(a.size(), 5u);
  EXPECT_TRUE(std::is_sorted(a.ids.begin(), a.ids.end()));
  spec.split_seed = 4;
  EXPECT_NE(load_dataset(spec).ids, a.ids);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.experiment = ExperimentKind::kway;
  c.models = {{"full", "a.ckpt"}, {"half", "b.ckpt"}};
  c.dataset.path = "imgs";
  c.dataset.max_images = 3;
  AttackSpec a;
  a.name = "eot_rd";
  a.kind = AttackKind::eot;
  a.config.target = AttackTarget::rd;
  a.config.eot_samples = 4;
  a.config.epsilon = 2.0 / 255;
  c.attacks = {a};
  c.defenses = {{DefenseMode::none, 1}, {DefenseMode::naive_random, 1}, {DefenseMode::k_way, 4}};
  c.lambda = 250.0;
  c.ks = {1, 3};
  c.repeats = 2;
  c.workers = 3;
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
  EXPECT_EQ(back.attacks[0].config, a.config);
  EXPECT_EQ(back.defenses[2].k, 4u);
  EXPECT_EQ(*back.lambda, 250.0);
}

TEST(Config, DefenseStrings) {
  EXPECT_EQ(defense_from_string("two_way").k, 2u);
  EXPECT_EQ(defense_from_string("k_way:5").k, 5u);
  EXPECT_EQ(defense_from_string("naive_random").mode, DefenseMode::naive_random);
  EXPECT_THROW(defense_from_string("k_way:0"), ArgumentError);
  EXPECT_THROW(defense_from_string("three_way"), ArgumentError);
  EXPECT_EQ(defense_to_string(defense_from_string("k_way:4")), "k_way:4");
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(config_from_json(nlohmann::ordered_json::parse(R"({"experiment": "bogus"})")), ArgumentError);
  EXPECT_THROW(config_from_json(nlohmann::ordered_json::parse(R"({"workers": "many"})")), ArgumentError);
  ExperimentConfig c;
  EXPECT_THROW(c.validate(), ArgumentError);  // no model
  c.models = {{"m", "x.ckpt"}};
  c.dataset.path = "d";
  EXPECT_NO_THROW(c.validate());
  c.metrics = {"lpips"};
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(ParallelFor, ResultsIndependentOfWorkers) {
  std::vector<double> a(100), b(100);
  parallel_for(100, 1, [&](std::size_t i) { a[i] = std::sqrt(double(i)); });
  parallel_for(100, 7, [&](std::size_t i) { b[i] = std::sqrt(double(i)); });
  EXPECT_EQ(a, b);
  EXPECT_THROW(parallel_for(10, 4, [](std::size_t i) {
    if (i == 6) throw ArgumentError("boom");
  }), ArgumentError);
}

TEST(Seeds, PerImageSeedDependsOnIdOnly) {
  EXPECT_EQ(image_seed(1, "kodim01"), image_seed(1, "kodim01"));
  EXPECT_NE(image_seed(1, "kodim01"), image_seed(1, "kodim02"));
  EXPECT_NE(image_seed(1, "kodim01"), image_seed(2, "kodim01"));
}

TEST(Experiments, DefenseGridDeterministicAcrossWorkers) {
  TempDir d("exp");
  auto cfg = tiny_config(d.path);
  cfg.adv_model = write_tiny_model(d.path, 2).string();
  const auto r1 = run_experiment(cfg);
  cfg.workers = 4;
  const auto r4 = run_experiment(cfg);
  ASSERT_EQ(r1.conditions.size(), 6u);  // {clean, rate4} x {original, two_way} + advt x 2
  EXPECT_EQ(r1.image_ids, (std::vector<std::string>{"img0", "img1", "img2", "img3"}));
  EXPECT_EQ(rows_csv(r1), rows_csv(r4));
  EXPECT_EQ(summary_csv(r1), summary_csv(r4));
  EXPECT_EQ(histogram_csv(r1), histogram_csv(r4));
  EXPECT_EQ(r1.find("original+clean").key.attack, "clean");
  EXPECT_EQ(r1.find("two_way+rate4").key.defense, "two_way");
  EXPECT_EQ(r1.find("advt+rate4").key.model, "advt");
  // shared histogram range: every condition uses the same edges
  for (const auto& s : r1.summaries) EXPECT_EQ(s.bpp_hist.edges, r1.summaries[0].bpp_hist.edges);
  // the unattacked original condition is the plain codec
  const auto model = load_checkpoint<float>(cfg.models[0].checkpoint);
  const auto ds = load_dataset(cfg.dataset);
  const auto plain = encode_plain(model, ds.images[2]);
  EXPECT_EQ(r1.find("original+clean").records[2].rate_bpp, plain.record.rate_bpp);
}

TEST(Experiments, KwayIsMonotoneAndOneWayIsPlain) {
  TempDir d("kway");
  auto cfg = tiny_config(d.path);
  cfg.experiment = ExperimentKind::kway;
  cfg.attacks.clear();
  const auto r = run_experiment(cfg);
  const auto& k1 = r.find("k_way1+clean");
  const auto& k2 = r.find("two_way+clean");
  const auto& k4 = r.find("k_way4+clean");
  const auto& k8 = r.find("k_way8+clean");
  for (std::size_t i = 0; i < r.image_ids.size(); ++i) {
    EXPECT_EQ(k1.theta[i], 0u);
    EXPECT_LE(k2.records[i].rd_loss, k1.records[i].rd_loss);
    EXPECT_LE(k4.records[i].rd_loss, k2.records[i].rd_loss);
    EXPECT_LE(k8.records[i].rd_loss, k4.records[i].rd_loss);
  }
  EXPECT_NO_THROW(r.find("naive+clean"));
}

TEST(Experiments, SweepAndDegradationLabels) {
  TempDir d("sweep");
  auto cfg = tiny_config(d.path);
  cfg.experiment = ExperimentKind::sweep;
  cfg.epsilons = {2.0 / 255};
  cfg.sweep_iters = 2;
  auto r = run_experiment(cfg);
  EXPECT_NO_THROW(r.find("toy/clean"));
  EXPECT_NO_THROW(r.find("toy/rate/eps=2/255"));
  EXPECT_NO_THROW(r.find("toy/distortion/eps=2/255"));
  cfg.experiment = ExperimentKind::degradation;
  cfg.degradation = {{0, 16}, {8}, {8}, {5.0}};
  r = run_experiment(cfg);
  std::vector<std::string> names;
  for (const auto& c : r.conditions) names.push_back(c.key.condition);
  EXPECT_EQ(names.size(), 5u);
  EXPECT_EQ(names[0], "identity");
  for (const auto& rec : r.find("identity").records) EXPECT_TRUE(std::isfinite(rec.rd_loss));
}

TEST(Experiments, BadImageIsDroppedWithWarning) {
  TempDir d("drop");
  auto cfg = tiny_config(d.path);
  std::ofstream(d.path / "data" / "zzz.png") << "garbage";
  const auto r = run_experiment(cfg);
  EXPECT_EQ(r.image_ids.size(), 4u);
  bool warned = false;
  for (const auto& w : r.warnings) warned |= w.find("zzz.png") != std::string::npos;
  EXPECT_TRUE(warned);
}

TEST(Report, FilesAndJsonRoundTrip) {
  TempDir d("report");
  auto cfg = tiny_config(d.path);
  const auto r = run_experiment(cfg);
  const auto out = d.path / "out";
  const auto files = emit_report(r, out, {ReportFormat::csv, ReportFormat::json});
  EXPECT_EQ(files.written.size(), 5u);
  for (const char* f : {"defense.csv", "defense_summary.csv", "defense_hist.csv", "defense.json", "defense_timing.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  std::ifstream in(out / "defense.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, kRowColumns);
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, r.conditions.size() * r.image_ids.size());

  const auto back = load_result(out / "defense.json");
  ASSERT_EQ(back.summaries.size(), r.summaries.size());
  for (std::size_t i = 0; i < r.summaries.size(); ++i) EXPECT_TRUE(same_summary(back.summaries[i], r.summaries[i]));
  EXPECT_EQ(rows_csv(back), rows_csv(r));
}

TEST(Report, NonFiniteValuesSurvive) {
  EXPECT_EQ(csv_num(std::nan("")), "nan");
  EXPECT_EQ(csv_num(-std::numeric_limits<double>::infinity()), "-inf");
  EXPECT_EQ(csv_num(0.1234567), "0.123457");
  EXPECT_TRUE(std::isnan(num_from_json(num_json(std::nan("")))));
  EXPECT_EQ(num_from_json(num_json(std::numeric_limits<double>::infinity())), std::numeric_limits<double>::infinity());
  EXPECT_THROW(num_from_json("bogus"), FormatError);
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
}

TEST(Report, UnwritableDirectory) {
  TempDir d("unwritable");
  std::ofstream(d.path / "file") << "x";
  auto cfg = tiny_config(d.path);
  const auto r = run_experiment(cfg);
  EXPECT_THROW(emit_report(r, d.path / "file", {ReportFormat::csv}), ArgumentError);
}
