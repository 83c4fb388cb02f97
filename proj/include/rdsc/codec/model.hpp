#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rdsc/common/bytes.hpp"
#include "rdsc/common/rng.hpp"
#include "rdsc/tensor_core.hpp"

namespace rdsc {

/// Architecture and trade-off settings of the toy codec.
struct CodecConfig {
  std::uint32_t mid_channels = 32;
  std::uint32_t latent_channels = 16;
  std::uint32_t downsampling = 4;  // two stride-2 stages; fixed
  double lambda = 100.0;

  /// Presets mirroring a low-rate / high-rate model pair.
  static CodecConfig low_rate() { return {}; }
  static CodecConfig high_rate() {
    CodecConfig c;
    c.lambda = 1000.0;
    return c;
  }
  /// Same trade-off with channel widths halved.
  CodecConfig halved() const {
    CodecConfig c = *this;
    c.mid_channels = std::max<std::uint32_t>(1, mid_channels / 2);
    c.latent_channels = std::max<std::uint32_t>(1, latent_channels / 2);
    return c;
  }
  bool operator==(const CodecConfig&) const = default;
};

inline constexpr std::size_t kEncoderKernel = 5;
inline constexpr std::size_t kEncoderPad = 2;
inline constexpr std::size_t kDecoderKernel = 4;
inline constexpr std::size_t kDecoderPad = 1;
inline constexpr std::size_t kStageStride = 2;
inline constexpr std::size_t kImageChannels = 3;
inline constexpr double kMinScale = 1e-6;

/// Parameters of encoder E, decoder D and the factorized entropy model P.
///
/// Encoder: conv5x5/2 -> leaky_relu -> conv5x5/2 (latent y).
/// Decoder: convT4x4/2 -> leaky_relu -> convT4x4/2.
/// Entropy model: per-latent-channel discretized logistic (loc, log scale).
template <typename T>
struct CodecModel {
  CodecConfig config;

  Tensor<T> enc1_weight, enc1_bias, enc2_weight, enc2_bias;
  Tensor<T> dec1_weight, dec1_bias, dec2_weight, dec2_bias;
  Tensor<T> entropy_loc, entropy_log_scale;

  CodecModel() : CodecModel(CodecConfig{}) {}

  /// Zero-initialised parameters with the shapes implied by `cfg`.
  explicit CodecModel(const CodecConfig& cfg) : config(cfg) {
    if (cfg.downsampling != 4) throw ArgumentError("only downsampling factor 4 is supported");
    if (cfg.mid_channels == 0 || cfg.latent_channels == 0) throw ArgumentError("channel widths must be positive");
    if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) throw ArgumentError("lambda must be finite and non-negative");
    const std::size_t m = cfg.mid_channels, y = cfg.latent_channels, c = kImageChannels;
    enc1_weight = Tensor<T>({m, c, kEncoderKernel, kEncoderKernel});
    enc1_bias = Tensor<T>({m});
    enc2_weight = Tensor<T>({y, m, kEncoderKernel, kEncoderKernel});
    enc2_bias = Tensor<T>({y});
    dec1_weight = Tensor<T>({y, m, kDecoderKernel, kDecoderKernel});
    dec1_bias = Tensor<T>({m});
    dec2_weight = Tensor<T>({m, c, kDecoderKernel, kDecoderKernel});
    dec2_bias = Tensor<T>({c});
    entropy_loc = Tensor<T>({y});
    entropy_log_scale = Tensor<T>({y});
  }

  CodecModel(const CodecModel&) = default;
  CodecModel& operator=(const CodecModel&) = default;

  /// Parameters in declaration order (the checkpoint order).
  std::vector<std::pair<std::string, Tensor<T>*>> parameters() {
    return {{"enc1.weight", &enc1_weight}, {"enc1.bias", &enc1_bias},     {"enc2.weight", &enc2_weight},
            {"enc2.bias", &enc2_bias},     {"dec1.weight", &dec1_weight}, {"dec1.bias", &dec1_bias},
            {"dec2.weight", &dec2_weight}, {"dec2.bias", &dec2_bias},     {"entropy.loc", &entropy_loc},
            {"entropy.log_scale", &entropy_log_scale}};
  }
  std::vector<std::pair<std::string, const Tensor<T>*>> parameters() const {
    auto ps = const_cast<CodecModel*>(this)->parameters();
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    for (auto& [n, p] : ps) out.emplace_back(n, p);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : parameters()) n += p->numel();
    return n;
  }

  /// 64-bit FNV-1a over the little-endian f32 bytes of every parameter.
  std::uint64_t model_id() const {
    Fnv1a64 h;
    ByteWriter w;
    for (const auto& [name, p] : parameters())
      for (const T& v : p->data) w.f32(static_cast<float>(v));
    h.update(w.bytes());
    return h.digest();
  }

  /// Effective entropy-model scale of channel c.
  double scale(std::size_t c) const { return std::max(std::exp(static_cast<double>(entropy_log_scale[c])), kMinScale); }

  void set_requires_grad(bool on) {
    for (auto& [n, p] : parameters()) {
      p->requires_grad = on;
      if (!on) p->grad.reset();
    }
  }
  void zero_grad() {
    for (auto& [n, p] : parameters()) p->zero_grad();
  }

  /// Seeded He-uniform initialisation; decoder output bias starts at mid-gray.
  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, {stream::kInit}));
    auto fill = [&rng](Tensor<T>& t, std::size_t fan_in) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    };
    const std::size_t m = config.mid_channels, y = config.latent_channels;
    const std::size_t ke = kEncoderKernel * kEncoderKernel, kd = kDecoderKernel * kDecoderKernel;
    fill(enc1_weight, kImageChannels * ke);
    fill(enc2_weight, m * ke);
    // A stride-2 transposed conv sees about a quarter of its taps per output.
    fill(dec1_weight, y * kd / 4);
    fill(dec2_weight, m * kd / 4);
    for (auto* b : {&enc1_bias, &enc2_bias, &dec1_bias}) std::fill(b->data.begin(), b->data.end(), T(0));
    std::fill(dec2_bias.data.begin(), dec2_bias.data.end(), T(0.5));
    std::fill(entropy_loc.data.begin(), entropy_loc.data.end(), T(0));
    std::fill(entropy_log_scale.data.begin(), entropy_log_scale.data.end(), T(0));
  }

  template <typename U>
  CodecModel<U> cast() const {
    CodecModel<U> out(config);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
    return out;
  }
};

}  // namespace rdsc
