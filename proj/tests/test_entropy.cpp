#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rdsc/codec/codec.hpp"
#include "rdsc/entropy/bitstream.hpp"
#include "support.hpp"

using namespace rdsc;

namespace {

std::uint32_t total_of(const std::vector<std::uint32_t>& f) { return std::accumulate(f.begin(), f.end(), 0u); }

LatentCode make_code(std::size_t c, std::size_t h, std::size_t w, std::vector<std::int32_t> symbols) {
  LatentCode code;
  code.channels = c;
  code.height = h;
  code.width = w;
  code.symbols = std::move(symbols);
  refresh_range(code);
  return code;
}

// Random latent with a per-channel Laplacian-ish spread plus a few outliers.
LatentCode random_code(Rng& rng) {
  const std::size_t c = 1 + rng.uniform_below(4), h = rng.uniform_below(6), w = 1 + rng.uniform_below(6);
  std::vector<std::int32_t> s(c * h * w);
  const double spread = rng.uniform(0.3, 6.0);
  for (auto& v : s) {
    const double u = rng.uniform(-1, 1);
    v = static_cast<std::int32_t>(std::lround(std::copysign(-spread * std::log(1 - std::abs(u) + 1e-12), u)));
    if (rng.uniform01() < 0.01) v = static_cast<std::int32_t>(rng.uniform_below(60000)) - 30000;
  }
  return make_code(c, h, w, std::move(s));
}

PmfTable random_table(Rng& rng, std::size_t channels, int ymin, int ymax) {
  std::vector<std::vector<double>> probs(channels);
  for (auto& p : probs) {
    const double loc = rng.uniform(-2, 2), s = rng.uniform(0.2, 5);
    for (int v = ymin; v <= ymax; ++v) p.push_back(logistic_bin_probability(v, loc, s));
    p.push_back(rng.uniform(0, 0.01));
  }
  return table_from_probabilities(ymin, ymax, probs);
}

}  // namespace

TEST(QuantizePmf, TwoEqualSymbolsExactTotal) {
  auto f = quantize_pmf(std::vector<double>{0.5, 0.5, 0.0});
  EXPECT_EQ(total_of(f), kFreqTotal);
  for (auto v : f) EXPECT_GE(v, 1u);
  EXPECT_LE(std::max(f[0], f[1]) - std::min(f[0], f[1]), 1u);
  EXPECT_GE(f[0] + f[1], 65533u);
}

TEST(QuantizePmf, ConcentratedMass) {
  for (std::size_t n : {2u, 10u, 300u, 1025u}) {
    std::vector<double> p(n, 0.0);
    p[n / 2] = 1.0;
    auto f = quantize_pmf(p);
    EXPECT_EQ(total_of(f), kFreqTotal);
    EXPECT_GE(f[n / 2], kFreqTotal - n);
    for (auto v : f) EXPECT_GE(v, 1u);
  }
}

TEST(QuantizePmf, RandomVectorsAlwaysValid) {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> p(1 + rng.uniform_below(1100));
    for (auto& v : p) v = rng.uniform01() < 0.3 ? 0.0 : std::pow(rng.uniform01(), 6);
    auto f = quantize_pmf(p);
    ASSERT_EQ(total_of(f), kFreqTotal);
    for (auto v : f) ASSERT_GE(v, 1u);
  }
  EXPECT_THROW(quantize_pmf(std::vector<double>{}), ArgumentError);
  EXPECT_THROW(quantize_pmf(std::vector<double>{0.5, NAN}), ArgumentError);
}

TEST(PmfTableTest, BuiltFromModelIsStrictlyIncreasing) {
  CodecModel<float> m;
  m.initialize(2);
  for (std::size_t c = 0; c < m.config.latent_channels; ++c) {
    m.entropy_loc[c] = 0.3f * static_cast<float>(c) - 2.0f;
    m.entropy_log_scale[c] = -4.0f + 0.5f * static_cast<float>(c);
  }
  auto t = build_pmf_table(m, -20, 17);
  EXPECT_EQ(t.channels, m.config.latent_channels);
  for (std::size_t c = 0; c < t.channels; ++c) {
    const auto* cdf = t.channel_cdf(c);
    EXPECT_EQ(cdf[0], 0u);
    EXPECT_EQ(cdf[t.entries()], kFreqTotal);
    for (std::size_t k = 0; k < t.entries(); ++k) ASSERT_LT(cdf[k], cdf[k + 1]);
  }
  EXPECT_THROW(build_pmf_table(m, 3, 2), ArgumentError);
  EXPECT_THROW(build_pmf_table(m, -600, 600), ArgumentError);
}

TEST(Stream, TwoValueUniformCostsAboutOneBitEach) {
  auto table = table_from_probabilities(0, 1, {{0.5, 0.5, 0.0}});
  auto code = make_code(1, 1, 8, {0, 1, 1, 0, 1, 0, 0, 1});
  auto bs = encode_stream(code, table, 7, 4, 8, 0);
  EXPECT_LE(8 * bs.payload.size(), 8 + 64u);
  EXPECT_EQ(decode_stream(bs, table, 1, 1, 8), code);
}

TEST(Stream, EmptyLatentIsFlushOnly) {
  auto table = table_from_probabilities(0, 0, {{1.0, 0.0}});
  auto code = make_code(1, 0, 0, {});
  auto bs = encode_stream(code, table, 0, 1, 1, 0);
  EXPECT_LE(bs.payload.size(), 8u);
  EXPECT_EQ(decode_stream(bs, table, 1, 0, 0).size(), 0u);
}

TEST(Stream, RandomRoundTripsAreExactAndTrackTheModel) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    auto code = random_code(rng);
    const auto [lo, hi] = table_range_for(code);
    auto table = random_table(rng, code.channels, lo, hi);
    auto bs = encode_stream(code, table, 0xABCDEFull, 64, 64, static_cast<std::uint32_t>(trial));
    auto back = decode_stream(parse_bitstream(serialize(bs)), table, code.channels, code.height, code.width);
    ASSERT_EQ(back, code) << "trial " << trial;
    const double ideal = table_bits(code, table);
    ASSERT_LE(std::abs(8.0 * static_cast<double>(bs.payload.size()) - ideal), 64.0) << "trial " << trial;
  }
}

TEST(Stream, EscapesCarryFullSixteenBitRange) {
  auto table = table_from_probabilities(-2, 2, {{0.1, 0.2, 0.4, 0.2, 0.1, 0.001}});
  auto code = make_code(1, 1, 7, {-32768, 32767, 0, 3, -3, 512, -1});
  auto bs = encode_stream(code, table, 1, 8, 8, 0);
  EXPECT_EQ(decode_stream(bs, table, 1, 1, 7), code);
  EXPECT_NEAR(table_bits(code, table), 8.0 * bs.payload.size(), 64.0);
}

TEST(Stream, LatentFromTensorClampsToRawRange) {
  Tensor<float> t({1, 1, 1, 4}, std::vector<float>{1e6f, -1e6f, 2.0f, -0.0f});
  auto code = latent_from_tensor(t);
  EXPECT_EQ(code.symbols, (std::vector<std::int32_t>{32767, -32768, 2, 0}));
  EXPECT_EQ(code.ymin, -32768);
  EXPECT_EQ(code.ymax, 32767);
  auto [lo, hi] = table_range_for(code);
  EXPECT_EQ(lo, -512);
  EXPECT_EQ(hi, 511);
  auto far = make_code(1, 1, 2, {700, 900});
  auto r = table_range_for(far);
  EXPECT_LE(r.first, r.second);
}

TEST(Stream, CorruptionIsDetected) {
  Rng rng(4);
  std::size_t detected = 0, total = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto code = random_code(rng);
    if (code.size() == 0) continue;
    const auto [lo, hi] = table_range_for(code);
    auto table = random_table(rng, code.channels, lo, hi);
    auto bs = encode_stream(code, table, 0, 16, 16, 0);
    auto bad = bs;
    bad.payload[rng.uniform_below(bad.payload.size())] ^= static_cast<std::uint8_t>(1 + rng.uniform_below(255));
    ++total;
    try {
      decode_stream(bad, table, code.channels, code.height, code.width);
    } catch (const DecodeError&) {
      ++detected;
    }
    // Truncation and wrong tables are always rejected.
    bad = bs;
    bad.payload.pop_back();
    EXPECT_THROW(decode_stream(bad, table, code.channels, code.height, code.width), DecodeError);
    auto other = random_table(rng, code.channels, lo - 1, hi);
    EXPECT_THROW(decode_stream(bs, other, code.channels, code.height, code.width), DecodeError);
  }
  EXPECT_EQ(detected, total);
}

TEST(Container, HeaderIsThirtyTwoBytesAndRoundTrips) {
  auto table = table_from_probabilities(-1, 1, {{0.25, 0.5, 0.25, 0.0}, {0.1, 0.8, 0.1, 0.0}});
  auto code = make_code(2, 2, 2, {0, 1, -1, 0, 0, 0, 1, 0});
  auto bs = encode_stream(code, table, 0x0123456789ABCDEFull, 300, 7, 142804999u);
  auto bytes = serialize(bs);
  EXPECT_EQ(bytes.size(), kHeaderBytes + bs.payload.size());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RDBS");
  auto back = parse_bitstream(bytes);
  EXPECT_EQ(back, bs);
  EXPECT_EQ(back.transform_index, 142804999u);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_bitstream(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(parse_bitstream(bad), FormatError);
  EXPECT_THROW(parse_bitstream(std::span(bytes).first(20)), FormatError);
}

TEST(Container, GoldenBytes) {
  // Frozen output of an independent reference implementation of the pmf
  // quantizer and carry-less range coder.
  auto table = table_from_probabilities(-2, 2, {{0.05, 0.2, 0.5, 0.2, 0.05, 0.0}, {0.3, 0.1, 0.2, 0.1, 0.3, 0.0}});
  auto code = make_code(2, 2, 3, {0, 1, -1, 0, 2, -2, 2, 2, -2, 0, 1, 5});
  auto bs = encode_stream(code, table, 42, 8, 12, 7);
  const std::vector<std::uint8_t> golden_payload = {164, 251, 255, 145, 247, 230, 102, 125, 0, 0, 0};
  EXPECT_EQ(bs.payload, golden_payload);
}

TEST(MeasuredBpp, HeaderOnlyAndIndexOverhead) {
  Bitstream bs;
  EXPECT_DOUBLE_EQ(measured_bpp(bs, 256, 256), 256.0 / 65536.0);
  EXPECT_NEAR(measured_bpp(bs, 256, 256), 0.0039, 1e-4);
  const double index_bpp = 32.0 / (256.0 * 256.0);
  EXPECT_LE(index_bpp, 4.9e-4);
  const double needed_bits = std::log2(142805000.0);
  EXPECT_NEAR(needed_bits, 27.1, 0.05);
  EXPECT_NEAR(needed_bits / 65536.0, 4e-4, 0.2e-4);
  EXPECT_THROW(measured_bpp(bs, 0, 4), ArgumentError);
}

TEST(MeasuredBpp, TracksModelRate) {
  CodecModel<float> m;
  m.initialize(5);
  for (std::size_t c = 0; c < m.config.latent_channels; ++c) m.entropy_log_scale[c] = 1.0f + 0.1f * static_cast<float>(c);
  Rng rng(6);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t h = 32 + 4 * rng.uniform_below(9), w = 32 + 4 * rng.uniform_below(9);
    Tensor<float> img = check::random_tensor<float>({3, h, w}, rng, 0, 1);
    auto rec = reconstruct(m, img);
    auto code = latent_from_tensor(rec.y_hat);
    const auto [lo, hi] = table_range_for(code);
    auto table = build_pmf_table(m, lo, hi);
    auto bs = encode_stream(code, table, m.model_id(), h, w, 0);
    const double model_bpp = rec.model_bits / static_cast<double>(h * w);
    const double meas = measured_bpp(bs, h, w);
    EXPECT_GE(meas, model_bpp - 0.001);
    EXPECT_LE(std::abs(meas - model_bpp), 0.02 * model_bpp + (32.0 * 8 + 64) / static_cast<double>(h * w));
    EXPECT_EQ(decode_stream(bs, table, code.channels, code.height, code.width), code);
  }
}
