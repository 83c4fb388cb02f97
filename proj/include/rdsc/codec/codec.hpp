#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <utility>

#include "rdsc/codec/model.hpp"
#include "rdsc/common/rng.hpp"
#include "rdsc/metrics/metrics.hpp"
#include "rdsc/tensor_core.hpp"

namespace rdsc {

/// Quantizer behaviour: additive U(-0.5, 0.5) noise for training, or
/// rounding (half away from zero) with a straight-through gradient.
enum class QuantMode { train_noise, eval_round };

/// Lower bound applied to every symbol probability before the log.
inline constexpr double kPmfFloor = 1.0 / 65536.0;

/// Per-image evaluation result.
struct RDRecord {
  double rate_bpp = 0.0;
  double distortion = 0.0;  // MSE on [0,1] pixels
  double rd_loss = 0.0;     // rate_bpp + lambda * distortion
  double psnr_db = 0.0;
  double ms_ssim = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated

  static RDRecord make(double rate_bpp, double distortion, double lambda) {
    RDRecord r;
    r.rate_bpp = rate_bpp;
    r.distortion = distortion;
    r.rd_loss = rate_bpp + lambda * distortion;
    r.psnr_db = psnr_from_mse(distortion);
    return r;
  }
};

/// Smallest multiple of the downsampling factor that holds `extent`.
inline std::size_t padded_extent(std::size_t extent, std::size_t factor = 4) {
  return (extent + factor - 1) / factor * factor;
}

/// Discretized-logistic probability of integer-centred bin v for location
/// `loc` and scale `s`: F((v+0.5-loc)/s) - F((v-0.5-loc)/s), evaluated on
/// the upper tail side for accuracy.
inline double logistic_bin_probability(double v, double loc, double s) {
  const double u = std::abs(v - loc);
  const double hi = (0.5 - u) / s, lo = (-0.5 - u) / s;
  auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  return sigmoid(hi) - sigmoid(lo);
}

/// Cost in bits of one symbol under the floored pmf.
inline double symbol_bits(double v, double loc, double s) {
  return -std::log2(std::max(logistic_bin_probability(v, loc, s), kPmfFloor));
}

/// Graph leaves for every model parameter.
template <typename T>
struct BoundModel {
  const CodecModel<T>* model = nullptr;
  Var<T> enc1_w, enc1_b, enc2_w, enc2_b, dec1_w, dec1_b, dec2_w, dec2_b, loc, log_scale;

  const CodecConfig& config() const { return model->config; }
};

/// Bind parameters as trainable leaves (gradients flow when requires_grad).
template <typename T>
BoundModel<T> bind(Graph<T>& g, CodecModel<T>& m) {
  return {&m,           g.input(m.enc1_weight), g.input(m.enc1_bias), g.input(m.enc2_weight),
          g.input(m.enc2_bias), g.input(m.dec1_weight), g.input(m.dec1_bias), g.input(m.dec2_weight),
          g.input(m.dec2_bias), g.input(m.entropy_loc), g.input(m.entropy_log_scale)};
}

/// Bind parameters read-only (attacks and evaluation against a shared model).
template <typename T>
BoundModel<T> bind(Graph<T>& g, const CodecModel<T>& m) {
  return {&m,           g.input(m.enc1_weight), g.input(m.enc1_bias), g.input(m.enc2_weight),
          g.input(m.enc2_bias), g.input(m.dec1_weight), g.input(m.dec1_bias), g.input(m.dec2_weight),
          g.input(m.dec2_bias), g.input(m.entropy_loc), g.input(m.entropy_log_scale)};
}

/// Replicate-pad x[N,C,H,W] on the bottom/right to multiples of the
/// downsampling factor.
template <typename T>
Var<T> pad_to_stride(Var<T> x, std::size_t factor = 4) {
  const std::size_t h = x.shape()[2], w = x.shape()[3];
  const std::size_t ph = padded_extent(h, factor), pw = padded_extent(w, factor);
  if (ph == h && pw == w) return x;
  return gather(x, std::make_shared<const IndexMap>(pad_edge_map(h, w, ph - h, pw - w)));
}

template <typename T>
struct EncoderOutput {
  Var<T> hidden;  // first-stage activation
  Var<T> y;       // latent before quantization
  Var<T> y_hat;   // quantized (or noise-perturbed) latent
};

/// y = E(x) and y_hat = Q(y). x is [1,3,H,W] with H, W multiples of 4.
template <typename T>
EncoderOutput<T> encode_latent(const BoundModel<T>& bm, Var<T> x, QuantMode mode, Rng* noise_rng = nullptr) {
  const Shape& xs = x.shape();
  if (xs.size() != 4 || xs[1] != kImageChannels) throw ShapeError("encode_latent: expected [N,3,H,W], got " + shape_str(xs));
  const std::size_t s = bm.config().downsampling;
  if (xs[2] == 0 || xs[3] == 0 || xs[2] % s || xs[3] % s)
    throw ShapeError("encode_latent: input " + shape_str(xs) + " is not padded to a multiple of " + std::to_string(s));
  auto h = activation(add_channel_bias(conv2d(x, bm.enc1_w, kStageStride, kEncoderPad), bm.enc1_b), Activation::leaky_relu);
  auto y = add_channel_bias(conv2d(h, bm.enc2_w, kStageStride, kEncoderPad), bm.enc2_b);
  Var<T> y_hat;
  if (mode == QuantMode::eval_round) {
    y_hat = round_ste(y);
  } else {
    if (!noise_rng) throw ArgumentError("encode_latent: train_noise mode needs an rng");
    Tensor<T> noise(y.shape());
    for (auto& v : noise.data) v = static_cast<T>(noise_rng->uniform(-0.5, 0.5));
    y_hat = add(y, y.graph->constant(std::move(noise)));
  }
  return {h, y, y_hat};
}

/// Sum over all latent elements of -log2 p_c(y_hat) under the floored
/// discretized logistic. Differentiable in y_hat and the entropy parameters.
template <typename T>
Var<T> rate_bits(const BoundModel<T>& bm, Var<T> y_hat) {
  const Shape& ys = y_hat.shape();
  if (ys.size() != 4 || ys[1] != bm.config().latent_channels)
    throw ShapeError("rate_bits: latent shape " + shape_str(ys) + " does not match model");
  const std::size_t N = ys[0], C = ys[1], P = ys[2] * ys[3];
  const auto& yv = y_hat.value().data;
  const auto& locv = bm.loc.value().data;
  const auto& lsv = bm.log_scale.value().data;
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const double s = std::max(std::exp(static_cast<double>(lsv[c])), kMinScale);
      for (std::size_t p = 0; p < P; ++p) total += symbol_bits(static_cast<double>(yv[(n * C + c) * P + p]), locv[c], s);
    }

  auto backward = [N, C, P](Graph<T>& g, std::size_t self) {
    const double go = static_cast<double>(g.grad(self)[0]);
    const auto& yv = g.input_value(self, 0).data;
    const auto& locv = g.input_value(self, 1).data;
    const auto& lsv = g.input_value(self, 2).data;
    const bool want_y = g.input_needs_grad(self, 0), want_loc = g.input_needs_grad(self, 1),
               want_ls = g.input_needs_grad(self, 2);
    std::vector<T>* gy = want_y ? &g.input_grad(self, 0) : nullptr;
    std::vector<T>* gloc = want_loc ? &g.input_grad(self, 1) : nullptr;
    std::vector<T>* gls = want_ls ? &g.input_grad(self, 2) : nullptr;
    auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    constexpr double kInvLn2 = 1.4426950408889634;
    for (std::size_t c = 0; c < C; ++c) {
      const double raw_s = std::exp(static_cast<double>(lsv[c]));
      const double s = std::max(raw_s, kMinScale);
      const double ds_dls = raw_s > kMinScale ? raw_s : 0.0;
      double acc_loc = 0.0, acc_ls = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < P; ++p) {
          const std::size_t idx = (n * C + c) * P + p;
          const double d = static_cast<double>(yv[idx]) - static_cast<double>(locv[c]);
          const double u = std::abs(d);
          const double hi = (0.5 - u) / s, lo = (-0.5 - u) / s;
          const double sh = sigmoid(hi), sl = sigmoid(lo);
          const double prob = sh - sl;
          if (prob <= kPmfFloor) continue;  // floored: flat
          const double dsh = sh * (1.0 - sh), dsl = sl * (1.0 - sl);
          const double dbits_dp = -kInvLn2 / prob;
          const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          const double dp_dv = sign * (-dsh + dsl) / s;
          const double dp_ds = -(dsh * hi - dsl * lo) / s;
          const double gv = go * dbits_dp * dp_dv;
          if (gy) (*gy)[idx] += static_cast<T>(gv);
          acc_loc -= gv;
          acc_ls += go * dbits_dp * dp_ds * ds_dls;
        }
      if (gloc) (*gloc)[c] += static_cast<T>(acc_loc);
      if (gls) (*gls)[c] += static_cast<T>(acc_ls);
    }
  };
  return y_hat.graph->record(Tensor<T>::scalar(static_cast<T>(total)), {y_hat.id, bm.loc.id, bm.log_scale.id}, backward,
                             "rate_bits");
}

/// x_hat = D(y_hat), cropped to out_h x out_w and optionally clamped to [0,1].
template <typename T>
Var<T> decode_image(const BoundModel<T>& bm, Var<T> y_hat, std::size_t out_h, std::size_t out_w, bool clamp_output = true) {
  const Shape& ys = y_hat.shape();
  if (ys.size() != 4 || ys[1] != bm.config().latent_channels)
    throw ShapeError("decode_image: latent shape " + shape_str(ys) + " does not match model");
  const std::size_t s = bm.config().downsampling;
  if (out_h > ys[2] * s || out_w > ys[3] * s || out_h == 0 || out_w == 0)
    throw ShapeError("decode_image: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " inconsistent with latent " + shape_str(ys));
  auto h = activation(add_channel_bias(conv2d_transpose(y_hat, bm.dec1_w, kStageStride, kDecoderPad), bm.dec1_b),
                      Activation::leaky_relu);
  auto x = add_channel_bias(conv2d_transpose(h, bm.dec2_w, kStageStride, kDecoderPad), bm.dec2_b);
  if (x.shape()[2] != out_h || x.shape()[3] != out_w) x = crop(x, 0, 0, out_h, out_w);
  if (clamp_output) x = clamp(x, T(0), T(1));
  return x;
}

/// Lift a [3,H,W] image to a [1,3,H,W] graph constant.
template <typename T>
Var<T> image_constant(Graph<T>& g, const Tensor<T>& image) {
  if (image.rank() != 3 || image.dim(0) != kImageChannels) throw ShapeError("expected a [3,H,W] image, got " + shape_str(image.shape));
  return g.constant(image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}));
}

template <typename T>
struct RDLossResult {
  RDRecord record;
  Var<T> loss;      // differentiable rate_bpp + lambda * mse
  Var<T> rate_bpp;  // differentiable rate term
  Var<T> distortion;
  Var<T> x_hat;     // [1,3,H,W]
  EncoderOutput<T> enc;
};

/// Rate-distortion loss of a [1,3,H,W] image variable (any size; padding is
/// applied internally). rate_bpp divides by the unpadded pixel count.
/// Training mode skips the output clamp so gradients reach saturated pixels.
template <typename T>
RDLossResult<T> rd_loss(const BoundModel<T>& bm, Var<T> x, QuantMode mode, Rng* noise_rng = nullptr,
                        std::optional<double> lambda_override = std::nullopt) {
  const std::size_t h = x.shape()[2], w = x.shape()[3];
  const double lambda = lambda_override.value_or(bm.config().lambda);
  auto enc = encode_latent(bm, pad_to_stride(x, bm.config().downsampling), mode, noise_rng);
  auto bits = rate_bits(bm, enc.y_hat);
  auto bpp = scale(bits, T(1) / static_cast<T>(h * w));
  auto x_hat = decode_image(bm, enc.y_hat, h, w, mode == QuantMode::eval_round);
  auto dist = mse(x, x_hat);
  auto loss = add(bpp, scale(dist, static_cast<T>(lambda)));
  RDLossResult<T> out{RDRecord::make(static_cast<double>(bpp.value().item()), static_cast<double>(dist.value().item()), lambda),
                      loss, bpp, dist, x_hat, enc};
  return out;
}

/// Detached evaluation helpers on [3,H,W] images.
template <typename T>
struct Reconstruction {
  Tensor<T> y_hat;   // [1,Cy,h,w] rounded latent
  Tensor<T> x_hat;   // [3,H,W] clamped reconstruction
  double model_bits = 0.0;
};

/// Encode (eval rounding), decode and crop an image without recording
/// gradients against the model.
template <typename T>
Reconstruction<T> reconstruct(const CodecModel<T>& model, const Tensor<T>& image) {
  Graph<T> g;
  auto bm = bind(g, model);
  auto x = image_constant(g, image);
  auto enc = encode_latent(bm, pad_to_stride(x, model.config.downsampling), QuantMode::eval_round);
  auto bits = rate_bits(bm, enc.y_hat);
  auto xh = decode_image(bm, enc.y_hat, image.dim(1), image.dim(2));
  Reconstruction<T> r;
  r.y_hat = enc.y_hat.value().detached();
  r.x_hat = xh.value().reshaped({kImageChannels, image.dim(1), image.dim(2)});
  r.model_bits = static_cast<double>(bits.value().item());
  return r;
}

/// Quantized latent of a padded-or-not [3,H,W] image.
template <typename T>
Tensor<T> latent_of(const CodecModel<T>& model, const Tensor<T>& image) {
  Graph<T> g;
  auto bm = bind(g, model);
  auto enc = encode_latent(bm, pad_to_stride(image_constant(g, image), model.config.downsampling), QuantMode::eval_round);
  return enc.y_hat.value().detached();
}

/// Decoded [3,out_h,out_w] image of a [1,Cy,h,w] latent.
template <typename T>
Tensor<T> decode_latent(const CodecModel<T>& model, const Tensor<T>& y_hat, std::size_t out_h, std::size_t out_w) {
  Graph<T> g;
  auto bm = bind(g, model);
  auto xh = decode_image(bm, g.constant(y_hat), out_h, out_w);
  return xh.value().reshaped({kImageChannels, out_h, out_w});
}

/// Model bits of a [1,Cy,h,w] latent.
template <typename T>
double latent_model_bits(const CodecModel<T>& model, const Tensor<T>& y_hat) {
  Graph<T> g;
  auto bm = bind(g, model);
  return static_cast<double>(rate_bits(bm, g.constant(y_hat)).value().item());
}

/// Full evaluation record (eval rounding; model rate) including MS-SSIM.
template <typename T>
RDRecord evaluate_model_rd(const CodecModel<T>& model, const Tensor<T>& image) {
  auto r = reconstruct(model, image);
  const double px = static_cast<double>(image.dim(1) * image.dim(2));
  RDRecord rec = RDRecord::make(r.model_bits / px, mse(image, r.x_hat), model.config.lambda);
  if (ms_ssim_scales(std::min(image.dim(1), image.dim(2))) > 0) rec.ms_ssim = ms_ssim(image, r.x_hat);
  return rec;
}

}  // namespace rdsc
