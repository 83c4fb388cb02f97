#include <gtest/gtest.h>

#include <cmath>

#include "rdsc/attacks/attacks.hpp"
#include "support.hpp"

using namespace rdsc;

namespace {

CodecModel<float> tiny_model(std::uint64_t seed = 3) {
  CodecConfig c;
  c.mid_channels = 6;
  c.latent_channels = 4;
  CodecModel<float> m(c);
  m.initialize(seed);
  return m;
}

Tensor<float> test_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double v = 0.5 + 0.35 * std::sin(0.4 * x + 0.3 * y + c) + 0.1 * rng.uniform(-1, 1);
        t[(c * h + y) * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  // a few saturated pixels exercise the [0,1] clip
  t[0] = 0.0f;
  t[1] = 1.0f;
  return t;
}

double linf(const Tensor<float>& a, const Tensor<float>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

}  // namespace

TEST(Sgn, ZeroMapsToZero) {
  EXPECT_EQ(detail::sgn(0.0f), 0);
  EXPECT_EQ(detail::sgn(-0.0f), 0);
  EXPECT_EQ(detail::sgn(2.5f), 1);
  EXPECT_EQ(detail::sgn(-1e-30f), -1);
}

TEST(AscentStep, StaysInsideBallAndUnitBox) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const double eps = rng.uniform(0.0, 0.1), alpha = rng.uniform(1e-4, 0.2);
    auto clean = check::random_tensor<float>({1, 3, 5, 5}, rng, 0.0, 1.0);
    Tensor<float> x = clean;
    for (int step = 0; step < 10; ++step) {
      std::vector<float> g(x.numel());
      for (auto& v : g) v = static_cast<float>(rng.uniform(-1, 1));
      detail::ascent_step(x, g, clean, alpha, eps);
      for (std::size_t i = 0; i < x.numel(); ++i) {
        ASSERT_GE(x[i], 0.0f);
        ASSERT_LE(x[i], 1.0f);
        ASSERT_LE(std::abs(double(x[i]) - double(clean[i])), eps);
      }
    }
  }
}

TEST(AscentStep, ZeroGradientLeavesPixel) {
  Tensor<float> clean({1, 1, 1, 2});
  clean[0] = 0.3f;
  clean[1] = 0.6f;
  Tensor<float> x = clean;
  detail::ascent_step(x, std::vector<float>{0.0f, 1.0f}, clean, 0.01, 0.05);
  EXPECT_EQ(x[0], 0.3f);
  EXPECT_NEAR(x[1], 0.61f, 1e-6);
}

TEST(AttackConfig, Validation) {
  AttackConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epsilon = -0.1;
  EXPECT_THROW(c.validate(), ArgumentError);
  c.epsilon = 0.01;
  c.alpha = 0.02;
  EXPECT_THROW(c.validate(), ArgumentError);
  c.alpha = 0.01;
  c.iters = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = AttackConfig{};
  c.epsilon = 0.0;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(attack_target_from_string("rd"), AttackTarget::rd);
  EXPECT_THROW(attack_target_from_string("bits"), ArgumentError);
}

TEST(Pgd, EveryIterateInsideBall) {
  const auto m = tiny_model();
  const auto x = test_image(12, 12, 1);
  for (auto target : {AttackTarget::rate, AttackTarget::distortion, AttackTarget::rd}) {
    AttackConfig cfg;
    cfg.epsilon = 4.0 / 255.0;
    cfg.alpha = 1.0 / 255.0;
    cfg.target = target;
    for (std::uint32_t iters : {1u, 3u, 7u}) {
      cfg.iters = iters;
      const auto adv = pgd(m, x, cfg);
      ASSERT_EQ(adv.shape, x.shape);
      EXPECT_LE(linf(adv, x), cfg.epsilon);
      for (float v : adv.data) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
    }
  }
}

TEST(Pgd, ZeroEpsilonIsIdentity) {
  const auto m = tiny_model();
  const auto x = test_image(8, 8, 2);
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  EXPECT_EQ(pgd(m, x, cfg).data, x.data);
  cfg.eot_samples = 3;
  EXPECT_EQ(eot_attack(m, x, cfg).data, x.data);
}

TEST(Pgd, RejectsOutOfRangeImage) {
  const auto m = tiny_model();
  auto x = test_image(8, 8, 2);
  x[5] = 1.5f;
  EXPECT_THROW(pgd(m, x, AttackConfig{}), ArgumentError);
}

TEST(Pgd, Deterministic) {
  const auto m = tiny_model();
  const auto x = test_image(12, 8, 4);
  AttackConfig cfg;
  cfg.iters = 4;
  cfg.eot_samples = 2;
  cfg.seed = 99;
  EXPECT_EQ(eot_attack(m, x, cfg).data, eot_attack(m, x, cfg).data);
}

TEST(Eot, NoSamplesEqualsVanillaBitwise) {
  const auto m = tiny_model();
  const auto x = test_image(12, 12, 5);
  AttackConfig cfg;
  cfg.iters = 4;
  cfg.target = AttackTarget::rd;
  const auto a = pgd(m, x, cfg);
  cfg.seed = 12345;  // seed is irrelevant without samples
  EXPECT_EQ(eot_attack(m, x, cfg).data, a.data);
}

TEST(Eot, TransformsRefreshPerStepAndSkipIdentity) {
  const auto a = eot_transforms(7, 0, 16), b = eot_transforms(7, 1, 16), c = eot_transforms(7, 0, 16);
  EXPECT_EQ(a, c);
  EXPECT_NE(a, b);
  for (const auto& t : a) EXPECT_FALSE(t.is_identity());
}

TEST(Eot, SamplesChangeTheResult) {
  const auto m = tiny_model();
  const auto x = test_image(12, 12, 6);
  AttackConfig cfg;
  cfg.iters = 3;
  const auto vanilla = pgd(m, x, cfg);
  cfg.eot_samples = 2;
  const auto eot = pgd(m, x, cfg);
  EXPECT_LE(linf(eot, x), cfg.epsilon);
  EXPECT_NE(eot.data, vanilla.data);
}

TEST(AttackLoss, RdIsRatePlusLambdaDistortion) {
  const auto m = tiny_model();
  const auto x = test_image(12, 16, 7);
  auto xa = x;
  for (std::size_t i = 0; i < xa.numel(); i += 3) xa[i] = std::min(1.0f, xa[i] + 0.02f);
  const double r = attack_loss(m, xa, x, AttackTarget::rate)[0];
  const double d = attack_loss(m, xa, x, AttackTarget::distortion)[0];
  const double rd = attack_loss(m, xa, x, AttackTarget::rd)[0];
  EXPECT_NEAR(rd, r + m.config.lambda * d, 1e-4 * std::abs(rd));
}

TEST(AttackLoss, MatchesCodecQuantities) {
  // at x_adv = x_clean the distortion is the plain reconstruction error
  const auto m = tiny_model();
  const auto x = test_image(12, 12, 8);
  const auto y = latent_of(m, x);
  const auto xh = decode_latent(m, y, 12, 12);
  EXPECT_NEAR(attack_loss(m, x, x, AttackTarget::distortion)[0], mse(x, xh), 1e-6);
  Graph<float> g;
  auto bm = bind(g, m);
  auto enc = encode_latent(bm, pad_to_stride(image_constant(g, x)), QuantMode::eval_round);
  const double bits = rate_bits(bm, enc.y_hat).value()[0];
  EXPECT_NEAR(attack_loss(m, x, x, AttackTarget::rate)[0], bits / 144.0, 1e-5 * bits);
}

TEST(AttackLoss, RateAttackRaisesRate) {
  const auto m = tiny_model(5);
  const auto x = test_image(16, 16, 9);
  AttackConfig cfg;
  cfg.epsilon = 8.0 / 255.0;
  cfg.alpha = 2.0 / 255.0;
  cfg.iters = 10;
  const auto adv = pgd(m, x, cfg);
  EXPECT_GT(attack_loss(m, adv, x, AttackTarget::rate)[0], attack_loss(m, x, x, AttackTarget::rate)[0]);
  cfg.target = AttackTarget::distortion;
  const auto adv2 = pgd(m, x, cfg);
  EXPECT_GT(attack_loss(m, adv2, x, AttackTarget::distortion)[0], attack_loss(m, x, x, AttackTarget::distortion)[0]);
}

TEST(PipelineObjective, TransformedBranchMatchesManualPipeline) {
  const auto m = tiny_model();
  const auto x = test_image(10, 13, 12);
  const TransformDescriptor td{5, 0, 0, 2, 3};
  Graph<float> g;
  auto bm = bind(g, m);
  const auto x4 = x.reshaped({1, 3, 10, 13});
  const double got =
      pipeline_objective(bm, g.constant(x4), g.constant(x4), td, AttackTarget::distortion, 100.0).value()[0];
  const auto xt = apply(td, x);
  const auto xh = invert(td, decode_latent(m, latent_of(m, xt), xt.dim(1), xt.dim(2)));
  EXPECT_NEAR(got, mse(x, xh), 1e-6);
}

TEST(Fda, ObjectiveAndBounds) {
  const auto m = tiny_model();
  const auto x = test_image(12, 12, 10);
  const auto feats = encoder_features(m, x);
  ASSERT_EQ(feats.size(), 2u);
  AttackConfig cfg;
  cfg.iters = 4;
  const auto adv = fda_lite(m, x, cfg);
  EXPECT_LE(linf(adv, x), cfg.epsilon);
  EXPECT_NE(adv.data, x.data);
  cfg.epsilon = 0;
  EXPECT_EQ(fda_lite(m, x, cfg).data, x.data);
}
