#include <gtest/gtest.h>

#include <cmath>

#include "rdsc/codec/checkpoint.hpp"
#include "rdsc/codec/codec.hpp"
#include "rdsc/codec/train.hpp"
#include "support.hpp"

using namespace rdsc;
using rdsc::check::gradcheck_at;
using rdsc::check::random_tensor;

namespace {

CodecConfig small_config() {
  CodecConfig c;
  c.mid_channels = 4;
  c.latent_channels = 3;
  return c;
}

template <typename T>
Tensor<T> smooth_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  const double a = rng.uniform(0.1, 0.4), b = rng.uniform(0.1, 0.4), ph = rng.uniform(0, 6);
  Tensor<T> t({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        t[(c * h + y) * w + x] = static_cast<T>(0.5 + 0.3 * std::sin(a * x + b * y + ph + c) + 0.05 * rng.uniform(-1, 1));
  return t;
}

double logistic_cdf(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST(EncodeLatent, ZeroModelGivesBiasPattern) {
  CodecModel<float> m(small_config());
  m.enc2_bias.data = {0.3f, -1.5f, 2.6f};
  Tensor<float> x({3, 8, 8});
  Graph<float> g;
  auto bm = bind(g, m);
  auto enc = encode_latent(bm, image_constant(g, x), QuantMode::eval_round);
  ASSERT_EQ(enc.y.shape(), (Shape{1, 3, 2, 2}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 4; ++p) {
      EXPECT_EQ(enc.y.value()[c * 4 + p], m.enc2_bias[c]);
      EXPECT_EQ(enc.y_hat.value()[c * 4 + p], std::round(m.enc2_bias[c]));
    }
}

TEST(EncodeLatent, RejectsUnpaddedInput) {
  CodecModel<float> m(small_config());
  Graph<float> g;
  auto bm = bind(g, m);
  EXPECT_THROW(encode_latent(bm, image_constant(g, Tensor<float>({3, 6, 8})), QuantMode::eval_round), ShapeError);
  EXPECT_THROW(encode_latent(bm, image_constant(g, Tensor<float>({3, 8, 8})), QuantMode::train_noise), ArgumentError);
}

TEST(EncodeLatent, NoiseStaysWithinHalf) {
  CodecModel<float> m(small_config());
  m.initialize(1);
  auto x = smooth_image<float>(16, 16, 2);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Graph<float> g;
    auto bm = bind(g, m);
    auto enc = encode_latent(bm, image_constant(g, x), QuantMode::train_noise, &rng);
    for (std::size_t i = 0; i < enc.y.value().numel(); ++i) {
      const float d = enc.y_hat.value()[i] - enc.y.value()[i];
      ASSERT_LE(std::abs(d), 0.5f);
    }
  }
}

TEST(RateBits, UnitLogisticAtZero) {
  // Closed form: p = sigmoid(0.5) - sigmoid(-0.5).
  const double p = logistic_cdf(0.5) - logistic_cdf(-0.5);
  EXPECT_NEAR(p, 0.2449, 1e-4);
  EXPECT_NEAR(-std::log2(p), 2.0297, 1e-4);
  EXPECT_NEAR(symbol_bits(0, 0, 1), -std::log2(p), 1e-12);

  CodecModel<float> m(small_config());
  Tensor<float> y({1, 3, 1, 1});
  Graph<float> g;
  auto bm = bind(g, m);
  EXPECT_NEAR(rate_bits(bm, g.constant(y)).value().item(), 3 * -std::log2(p), 1e-4);
}

TEST(RateBits, ConcentratedMassCostsNothing) {
  EXPECT_LT(symbol_bits(0, 0, 1e-3), 1e-9);
  EXPECT_GE(symbol_bits(0, 0, 1e-3), 0.0);
}

TEST(RateBits, FloorBoundsEverySymbol) {
  CodecModel<float> m(small_config());
  m.entropy_log_scale.data = {-3.0f, 0.0f, 2.0f};
  m.entropy_loc.data = {0.0f, 5.0f, -2.0f};
  Rng rng(4);
  Tensor<float> y({1, 3, 6, 6});
  for (auto& v : y.data) v = static_cast<float>(static_cast<long>(rng.uniform_below(4001)) - 2000);
  Graph<float> g;
  auto bm = bind(g, m);
  const double bits = rate_bits(bm, g.constant(y)).value().item();
  EXPECT_TRUE(std::isfinite(bits));
  EXPECT_GE(bits, 0.0);
  EXPECT_LE(bits, 16.0 * y.numel() + 1e-3);
  for (int v = -40; v <= 40; ++v) EXPECT_LE(symbol_bits(v, 0.3, 0.01), 16.0);
}

TEST(DecodeImage, CropsAndIsDeterministic) {
  CodecModel<float> m(small_config());
  m.initialize(5);
  auto x = smooth_image<float>(66, 66, 6);
  auto a = reconstruct(m, x), b = reconstruct(m, x);
  EXPECT_EQ(a.y_hat.shape, (Shape{1, 3, 17, 17}));
  EXPECT_EQ(a.x_hat.shape, (Shape{3, 66, 66}));
  EXPECT_TRUE(same_values(a.x_hat, b.x_hat));
  for (float v : a.x_hat.data) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(RdLoss, RecordConsistentWithTerms) {
  CodecModel<float> m(small_config());
  m.initialize(7);
  auto x = smooth_image<float>(12, 20, 8);
  Graph<float> g;
  auto bm = bind(g, m);
  auto r = rd_loss(bm, image_constant(g, x), QuantMode::eval_round);
  EXPECT_GE(r.record.rate_bpp, 0.0);
  EXPECT_GE(r.record.distortion, 0.0);
  EXPECT_NEAR(r.record.rd_loss, r.record.rate_bpp + m.config.lambda * r.record.distortion, 1e-6);
  EXPECT_NEAR(r.loss.value().item(), r.record.rd_loss, 1e-4 * r.record.rd_loss);
}

TEST(Gradients, FullCodecMatchesFiniteDifferences) {
  auto model = [] {
    CodecModel<float> m(small_config());
    m.initialize(9);
    for (std::size_t c = 0; c < 3; ++c) {
      m.entropy_loc[c] = 0.1f * static_cast<float>(c);
      m.entropy_log_scale[c] = 0.2f - 0.3f * static_cast<float>(c);
    }
    return m.cast<double>();
  }();
  auto x = smooth_image<double>(8, 8, 10).reshaped({1, 3, 8, 8});
  auto loss_with = [&](auto patch) {
    return [&, patch](Graph<double>& g, Var<double> v) {
      auto bm = bind(g, static_cast<const CodecModel<double>&>(model));
      Var<double> img = g.constant(x);
      patch(bm, img, v);
      Rng noise(11);
      return rd_loss(bm, img, QuantMode::train_noise, &noise).loss;
    };
  };
  auto report = [](const check::GradReport& r, const char* what) {
    EXPECT_GE(r.pass_fraction(), 0.95) << what << ": " << r.passed << "/" << r.total << " worst " << r.worst;
  };
  report(gradcheck_at(x, loss_with([](auto&, Var<double>& img, Var<double> v) { img = v; })), "image");
  report(gradcheck_at(model.enc1_weight, loss_with([](auto& bm, auto&, Var<double> v) { bm.enc1_w = v; })), "enc1.weight");
  report(gradcheck_at(model.enc2_bias, loss_with([](auto& bm, auto&, Var<double> v) { bm.enc2_b = v; })), "enc2.bias");
  report(gradcheck_at(model.dec1_weight, loss_with([](auto& bm, auto&, Var<double> v) { bm.dec1_w = v; })), "dec1.weight");
  report(gradcheck_at(model.dec2_bias, loss_with([](auto& bm, auto&, Var<double> v) { bm.dec2_b = v; })), "dec2.bias");
  report(gradcheck_at(model.entropy_loc, loss_with([](auto& bm, auto&, Var<double> v) { bm.loc = v; })), "entropy.loc");
  report(gradcheck_at(model.entropy_log_scale, loss_with([](auto& bm, auto&, Var<double> v) { bm.log_scale = v; })),
         "entropy.log_scale");
}

TEST(Gradients, RateBitsMatchesFiniteDifferences) {
  Rng rng(12);
  auto y = random_tensor<double>({1, 2, 3, 3}, rng, -3, 3);
  CodecModel<double> m(CodecConfig{4, 2, 4, 100.0});
  m.entropy_loc.data = {0.2, -0.4};
  m.entropy_log_scale.data = {0.1, -0.5};
  auto r = gradcheck_at(y, [&](Graph<double>& g, Var<double> v) {
    auto bm = bind(g, static_cast<const CodecModel<double>&>(m));
    return rate_bits(bm, v);
  });
  EXPECT_TRUE(r.all()) << r.worst;
}

TEST(Gradients, StraightThroughImageGradientIsUseful) {
  CodecModel<float> m(small_config());
  m.initialize(13);
  Rng rng(14);
  auto x = random_tensor<float>({1, 3, 16, 16}, rng, 0, 1);
  x.requires_grad = true;
  Graph<float> g;
  auto bm = bind(g, static_cast<const CodecModel<float>&>(m));
  g.backward(rd_loss(bm, g.input(x), QuantMode::eval_round).loss);
  double norm = 0.0;
  for (float v : *x.grad) {
    ASSERT_TRUE(std::isfinite(v));
    norm += std::abs(v);
  }
  EXPECT_GT(norm, 0.0);
}

TEST(Model, HalvedHasFewerParameters) {
  CodecModel<float> full(CodecConfig{}), half(CodecConfig{}.halved());
  EXPECT_LT(half.parameter_count(), full.parameter_count());
  EXPECT_EQ(half.config.mid_channels, 16u);
  EXPECT_EQ(half.config.latent_channels, 8u);
}

TEST(Model, IdChangesWithAnyParameter) {
  CodecModel<float> m(small_config());
  m.initialize(15);
  const auto id = m.model_id();
  for (auto& [name, p] : m.parameters()) {
    const float keep = p->data.back();
    p->data.back() = std::nextafter(keep, 10.0f);
    EXPECT_NE(m.model_id(), id) << name;
    p->data.back() = keep;
  }
  EXPECT_EQ(m.model_id(), id);
}

TEST(Checkpoint, RoundTripAndValidation) {
  CodecModel<float> m(CodecConfig::high_rate().halved());
  m.initialize(16);
  auto bytes = serialize_checkpoint(m);
  auto back = parse_checkpoint(bytes);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.model_id(), m.model_id());
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  auto corrupt = bytes;
  corrupt[100] ^= 0x40;
  EXPECT_THROW(parse_checkpoint(corrupt), FormatError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(parse_checkpoint(truncated), FormatError);
  corrupt = bytes;
  corrupt[0] = 'X';
  EXPECT_THROW(parse_checkpoint(corrupt), FormatError);
}

TEST(Train, OneEpochOnOneImageDoesNotHurtMostly) {
  auto img = smooth_image<float>(16, 16, 17);
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CodecModel<float> m(small_config());
    m.initialize(100 + seed);
    const double before = mean_eval_rd(m, {img});
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.crop = 0;
    cfg.learning_rate = 1e-4;
    cfg.seed = seed;
    train(m, {img}, cfg);
    if (mean_eval_rd(m, {img}) <= before) ++improved;
  }
  EXPECT_GE(improved, 3);
}

TEST(Train, LossDecreasesOverEpochs) {
  std::vector<Tensor<float>> data{smooth_image<float>(16, 16, 18), smooth_image<float>(16, 16, 19)};
  CodecModel<float> m(small_config());
  m.initialize(20);
  const double before = mean_eval_rd(m, data);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.crop = 0;
  cfg.learning_rate = 5e-3;
  train(m, data, cfg);
  EXPECT_LT(mean_eval_rd(m, data), 0.8 * before);
}

TEST(Train, TrainedRoundTripBeatsZeroImage) {
  std::vector<Tensor<float>> data{smooth_image<float>(16, 16, 21)};
  CodecModel<float> m(small_config());
  m.initialize(22);
  TrainConfig cfg;
  cfg.epochs = 80;
  cfg.crop = 0;
  cfg.learning_rate = 5e-3;
  train(m, data, cfg);
  const auto r = reconstruct(m, data[0]);
  Tensor<float> zero(data[0].shape);
  EXPECT_GT(psnr(data[0], r.x_hat), psnr(data[0], zero));
}

TEST(Train, FgsmStartWithinBall) {
  CodecModel<float> m(small_config());
  m.initialize(23);
  auto x = smooth_image<float>(16, 16, 24);
  Rng rng(25);
  const double eps = 4.0 / 255.0;
  auto adv = fgsm_random_init(m, x, eps, rng);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    ASSERT_LE(std::abs(static_cast<double>(adv[i]) - x[i]), eps + 1e-7);
    ASSERT_GE(adv[i], 0.0f);
    ASSERT_LE(adv[i], 1.0f);
  }
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.crop = 0;
  cfg.adversarial = AdversarialMode::fgsm_random_init;
  EXPECT_NO_THROW(train(m, {x}, cfg));
}

TEST(Train, DivergenceIsReported) {
  CodecModel<float> m(small_config());
  m.initialize(26);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.crop = 0;
  cfg.learning_rate = 1e30;
  EXPECT_THROW(train(m, {smooth_image<float>(8, 8, 27)}, cfg), NumericError);
  EXPECT_THROW(train(m, {}, cfg), ArgumentError);
}
