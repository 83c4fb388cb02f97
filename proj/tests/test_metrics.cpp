#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rdsc/metrics/metrics.hpp"
#include "rdsc/metrics/summary.hpp"
#include "support.hpp"

using namespace rdsc;

namespace {

Tensor<float> patterned(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        t[(ch * h + y) * w + x] = static_cast<float>(0.5 + 0.35 * std::sin(0.3 * x + 0.2 * y + ch) + 0.1 * rng.uniform(-1, 1));
  return t;
}

}  // namespace

TEST(Psnr, ExactReconstructionIsInfiniteAndCapped) {
  auto x = patterned(3, 8, 8, 1);
  EXPECT_TRUE(std::isinf(psnr(x, x)));
  EXPECT_EQ(psnr_capped(psnr(x, x)), 99.0);
}

TEST(Psnr, UniformErrors) {
  Tensor<float> x({1, 4, 4}, 0.5f);
  Tensor<double> a({1, 4, 4}, 0.5), b({1, 4, 4}, 0.6), c({1, 4, 4}, 0.51);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_NEAR(psnr(a, c), 40.0, 1e-9);
}

TEST(Psnr, MonotoneDecreasingInMse) {
  double prev = std::numeric_limits<double>::infinity();
  for (double m = 1e-6; m < 1.0; m *= 1.7) {
    const double p = psnr_from_mse(m);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(MsSsim, IdentityIsOne) {
  auto x = patterned(3, 64, 64, 2);
  EXPECT_EQ(ms_ssim(x, x), 1.0);
  auto big = patterned(1, 170, 165, 3);
  EXPECT_EQ(ms_ssim(big, big), 1.0);
}

TEST(MsSsim, InvertedImageFarBelowOne) {
  Tensor<float> x({1, 64, 64});
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t i = 0; i < 64; ++i) x[y * 64 + i] = ((y / 8 + i / 8) % 2) ? 0.9f : 0.1f;
  Tensor<float> inv = x;
  for (auto& v : inv.data) v = 1.0f - v;
  EXPECT_LT(ms_ssim(x, inv), 0.5);
}

TEST(MsSsim, Symmetric) {
  auto a = patterned(3, 64, 80, 4), b = patterned(3, 64, 80, 5);
  EXPECT_NEAR(ms_ssim(a, b), ms_ssim(b, a), 1e-9);
  EXPECT_GT(ms_ssim(a, b), 0.0);
  EXPECT_LT(ms_ssim(a, b), 1.0);
}

TEST(MsSsim, ScaleFallback) {
  EXPECT_EQ(ms_ssim_scales(10), 0u);
  EXPECT_EQ(ms_ssim_scales(11), 1u);
  EXPECT_EQ(ms_ssim_scales(64), 3u);
  EXPECT_EQ(ms_ssim_scales(160), 4u);
  EXPECT_EQ(ms_ssim_scales(161), 5u);
  EXPECT_EQ(ms_ssim_scales(4000), 5u);
  for (std::size_t s = 1; s <= 5; ++s) {
    auto w = ms_ssim_weights(s);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
  }
  Tensor<float> tiny({3, 10, 40});
  EXPECT_THROW(ms_ssim(tiny, tiny), ShapeError);
}

TEST(Histogram, SingleValue) {
  auto h = histogram({0.7}, 5);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}), 1u);
}

TEST(Histogram, EdgesMonotoneAndCountsComplete) {
  Rng rng(6);
  std::vector<double> v(1000);
  for (auto& x : v) x = rng.uniform(-3, 7);
  auto h = histogram(v, 13);
  for (std::size_t i = 0; i + 1 < h.edges.size(); ++i) EXPECT_LT(h.edges[i], h.edges[i + 1]);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}), v.size());
}

TEST(Histogram, UniformWithinFiveSigma) {
  Rng rng(7);
  const std::size_t n = 100000;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform01();
  auto h = histogram(v, 10, 0.0, 1.0);
  const double mean = n / 10.0, sigma = std::sqrt(n * 0.1 * 0.9);
  for (auto c : h.counts) EXPECT_LT(std::abs(static_cast<double>(c) - mean), 5 * sigma);
}

TEST(Summary, AggregatesRecomputable) {
  Rng rng(8);
  std::vector<RDRecord> rs;
  std::vector<std::string> ids;
  for (int i = 0; i < 17; ++i) {
    auto r = RDRecord::make(rng.uniform(0.1, 2.0), rng.uniform(1e-4, 1e-2), 100.0);
    r.ms_ssim = rng.uniform(0.8, 1.0);
    rs.push_back(r);
    ids.push_back("img" + std::to_string(i));
  }
  auto s = summarize("clean", ids, rs);
  double bpp = 0, rd = 0, ps = 0;
  for (const auto& r : rs) {
    bpp += r.rate_bpp;
    rd += r.rd_loss;
    ps += r.psnr_db;
  }
  EXPECT_NEAR(s.mean_bpp, bpp / 17, 1e-9);
  EXPECT_NEAR(s.mean_rd, rd / 17, 1e-9);
  EXPECT_NEAR(s.mean_psnr, ps / 17, 1e-9);
  EXPECT_EQ(std::accumulate(s.bpp_hist.counts.begin(), s.bpp_hist.counts.end(), std::size_t{0}), 17u);
}

TEST(RDRecordTest, LossArithmetic) {
  auto r = RDRecord::make(0.5, 0.001, 100.0);
  EXPECT_NEAR(r.rd_loss, 0.6, 1e-12);
  EXPECT_EQ(RDRecord::make(0.0, 0.0, 100.0).rd_loss, 0.0);
}
