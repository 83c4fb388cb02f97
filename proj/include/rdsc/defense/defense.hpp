#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <vector>

#include "rdsc/codec/codec.hpp"
#include "rdsc/common/error.hpp"
#include "rdsc/common/rng.hpp"
#include "rdsc/entropy/bitstream.hpp"
#include "rdsc/entropy/pmf_table.hpp"
#include "rdsc/metrics/metrics.hpp"
#include "rdsc/transforms/transforms.hpp"

namespace rdsc {

/// One compressed candidate. Rate counts the whole container
/// (header + payload) over the source pixels.
struct ArmResult {
  TransformDescriptor transform;
  std::uint32_t index = 0;
  Bitstream bitstream;
  double rate_bpp = 0.0;
  double distortion = std::numeric_limits<double>::infinity();
  double rd_loss = std::numeric_limits<double>::infinity();
  bool pruned = false;  // not decoded
  Tensor<float> x_hat;
};

struct EncodeOutcome {
  Bitstream bitstream;
  std::uint32_t theta = 0;
  std::vector<std::uint32_t> arm_indices;
  std::vector<double> arm_losses;  // +inf for pruned arms
  std::size_t chosen_arm = 0;
  RDRecord record;       // of the emitted stream against the source image
  Tensor<float> x_hat;   // what decode_any reproduces
  double encode_ms = 0.0;

  double selected_loss() const { return arm_losses.at(chosen_arm); }
};

struct EncodeOptions {
  std::optional<double> lambda;  // defaults to the model's training lambda
  bool prune = true;             // skip decoding arms whose rate exceeds the best loss
  bool with_ms_ssim = false;
};

namespace detail {

template <typename T>
Tensor<T> decode_canvas(const CodecModel<T>& model, const LatentCode& code, Extent canvas) {
  return decode_latent(model, latent_to_tensor<T>(code), canvas.h, canvas.w);
}

/// Encode tau(x) and price the result. When the rate alone exceeds `bound`
/// the decoder pass is skipped: the arm can neither win nor tie.
template <typename T>
ArmResult encode_arm(const CodecModel<T>& model, std::uint64_t model_id, const Tensor<T>& x, const TransformDescriptor& td,
                     double lambda, double bound) {
  ArmResult arm;
  arm.transform = td;
  arm.index = pack(td);
  const Tensor<T> xt = apply(td, x);
  const Extent canvas{xt.dim(1), xt.dim(2)};
  const LatentCode code = latent_from_tensor(latent_of(model, xt));
  const auto [lo, hi] = table_range_for(code);
  const PmfTable table = build_pmf_table(model, lo, hi);
  arm.bitstream = encode_stream(code, table, model_id, x.dim(1), x.dim(2), arm.index);
  arm.rate_bpp = measured_bpp(arm.bitstream);
  if (arm.rate_bpp > bound) {
    arm.pruned = true;
    return arm;
  }
  Tensor<T> xh = decode_canvas(model, code, canvas);
  if (!td.is_identity()) xh = invert(td, xh);
  arm.distortion = mse(x, xh);
  arm.rd_loss = arm.rate_bpp + lambda * arm.distortion;
  arm.x_hat = xh.template cast<float>();
  return arm;
}

template <typename T>
void check_image(const Tensor<T>& x) {
  if (x.rank() != 3 || x.dim(0) != kImageChannels) throw ShapeError("encode: expected a [3,H,W] image, got " + shape_str(x.shape));
}

}  // namespace detail

/// Best of the given arms. Arm 0 is kept only on a strict win, so ties go
/// to the later (transformed) arm.
template <typename T>
EncodeOutcome encode_arms(const CodecModel<T>& model, const Tensor<T>& x, const std::vector<TransformDescriptor>& arms,
                          const EncodeOptions& opt = {}) {
  detail::check_image(x);
  if (arms.empty()) throw ArgumentError("encode: need at least one arm");
  const auto t0 = std::chrono::steady_clock::now();
  const double lambda = opt.lambda.value_or(model.config.lambda);
  const std::uint64_t id = model.model_id();
  EncodeOutcome out;
  ArmResult best;
  for (std::size_t k = 0; k < arms.size(); ++k) {
    const double bound = opt.prune && k > 0 ? best.rd_loss : std::numeric_limits<double>::infinity();
    ArmResult arm = detail::encode_arm(model, id, x, arms[k], lambda, bound);
    out.arm_indices.push_back(arm.index);
    out.arm_losses.push_back(arm.rd_loss);
    if (k == 0 || arm.rd_loss <= best.rd_loss) {
      out.chosen_arm = k;
      best = std::move(arm);
    }
  }
  out.encode_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  out.theta = best.index;
  out.record = RDRecord::make(best.rate_bpp, best.distortion, lambda);
  if (opt.with_ms_ssim && ms_ssim_scales(std::min(x.dim(1), x.dim(2))) > 0)
    out.record.ms_ssim = ms_ssim(x.template cast<float>(), best.x_hat);
  out.bitstream = std::move(best.bitstream);
  out.x_hat = std::move(best.x_hat);
  return out;
}

/// Plain codec: the identity arm alone.
template <typename T>
EncodeOutcome encode_plain(const CodecModel<T>& model, const Tensor<T>& x, const EncodeOptions& opt = {}) {
  return encode_arms(model, x, {TransformDescriptor{}}, opt);
}

/// Naive randomization: always encode with one transform drawn from all of T.
template <typename T>
EncodeOutcome encode_oneway_random(const CodecModel<T>& model, const Tensor<T>& x, Rng& rng, const EncodeOptions& opt = {}) {
  return encode_arms(model, x, {sample_transform(rng, false)}, opt);
}

/// Identity plus K-1 transforms drawn in sequence from rng, so the arm list
/// for K is a prefix of the list for any larger K under the same seed.
inline std::vector<TransformDescriptor> k_way_arms(Rng& rng, std::size_t k) {
  if (k < 1) throw ArgumentError("k-way: K must be >= 1");
  std::vector<TransformDescriptor> arms{TransformDescriptor{}};
  for (std::size_t i = 1; i < k; ++i) arms.push_back(sample_transform(rng, true));
  return arms;
}

template <typename T>
EncodeOutcome encode_k_way(const CodecModel<T>& model, const Tensor<T>& x, Rng& rng, std::size_t k, const EncodeOptions& opt = {}) {
  return encode_arms(model, x, k_way_arms(rng, k), opt);
}

template <typename T>
EncodeOutcome encode_two_way(const CodecModel<T>& model, const Tensor<T>& x, Rng& rng, const EncodeOptions& opt = {}) {
  return encode_k_way(model, x, rng, 2, opt);
}

/// Header-driven decoder: entropy-decode, synthesise the canvas and undo
/// the transform named by the header (skipped for index 0).
template <typename T>
Tensor<T> decode_any(const Bitstream& bs, const CodecModel<T>& model) {
  if (bs.model_id != model.model_id()) throw DecodeError("bitstream was produced by a different model");
  if (bs.orig_h == 0 || bs.orig_w == 0) throw DecodeError("bitstream: zero image dims");
  if (bs.transform_index >= kTransformCount) throw DecodeError("bitstream: transform index out of range");
  if (bs.ymin > bs.ymax || bs.ymax - bs.ymin + 1 > kMaxTableSymbols) throw DecodeError("bitstream: bad symbol range");
  const TransformDescriptor td = unpack(bs.transform_index);
  const Extent canvas = transformed_extent(td, {bs.orig_h, bs.orig_w});
  const std::size_t s = model.config.downsampling;
  const PmfTable table = build_pmf_table(model, bs.ymin, bs.ymax);
  const LatentCode code = decode_stream(bs, table, model.config.latent_channels, padded_extent(canvas.h, s) / s,
                                        padded_extent(canvas.w, s) / s);
  Tensor<T> xh = detail::decode_canvas(model, code, canvas);
  if (bs.transform_index == 0) return xh;
  return invert(td, xh);
}

}  // namespace rdsc
