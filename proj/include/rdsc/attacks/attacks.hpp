#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rdsc/codec/codec.hpp"
#include "rdsc/common/error.hpp"
#include "rdsc/common/rng.hpp"
#include "rdsc/transforms/transforms.hpp"

namespace rdsc {

enum class AttackTarget { rate, distortion, rd };

inline std::string to_string(AttackTarget t) {
  switch (t) {
    case AttackTarget::rate: return "rate";
    case AttackTarget::distortion: return "distortion";
    case AttackTarget::rd: return "rd";
  }
  return "?";
}

inline AttackTarget attack_target_from_string(const std::string& s) {
  if (s == "rate") return AttackTarget::rate;
  if (s == "distortion") return AttackTarget::distortion;
  if (s == "rd") return AttackTarget::rd;
  throw ArgumentError("unknown attack target '" + s + "' (rate, distortion, rd)");
}

struct AttackConfig {
  double epsilon = 4.0 / 255.0;  // l-inf radius in [0,1] pixel units
  double alpha = 2.0 / 255.0;    // step size
  std::uint32_t iters = 50;
  AttackTarget target = AttackTarget::rate;
  std::uint32_t eot_samples = 0;  // 0 = vanilla
  std::uint64_t seed = 0;

  /// epsilon = 0 is accepted as the degenerate no-op attack.
  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ArgumentError("attack: epsilon must lie in [0, 1]");
    if (epsilon > 0.0 && !(alpha > 0.0 && alpha <= epsilon)) throw ArgumentError("attack: need 0 < alpha <= epsilon");
    if (iters < 1) throw ArgumentError("attack: iters must be >= 1");
  }
  bool operator==(const AttackConfig&) const = default;
};

/// Attacker objective for one pipeline branch: x -> tau -> pad -> E -> Q ->
/// D -> crop -> tau^-1. Rate is normalised by the unpadded source pixels.
/// x and clean are [1,3,H,W].
template <typename T>
Var<T> pipeline_objective(const BoundModel<T>& bm, Var<T> x, Var<T> clean, const TransformDescriptor& td, AttackTarget target,
                          double lambda) {
  const std::size_t h = x.shape()[2], w = x.shape()[3];
  auto xt = apply(td, x);
  const std::size_t ch = xt.shape()[2], cw = xt.shape()[3];
  auto enc = encode_latent(bm, pad_to_stride(xt, bm.config().downsampling), QuantMode::eval_round);
  auto bpp = scale(rate_bits(bm, enc.y_hat), T(1) / static_cast<T>(h * w));
  if (target == AttackTarget::rate) return bpp;
  auto x_hat = invert(td, decode_image(bm, enc.y_hat, ch, cw));
  auto dist = mse(x_hat, clean);
  if (target == AttackTarget::distortion) return dist;
  return add(bpp, scale(dist, static_cast<T>(lambda)));
}

/// L(x_adv; x_clean) on [3,H,W] images under eval rounding.
template <typename T>
Tensor<T> attack_loss(const CodecModel<T>& model, const Tensor<T>& x_adv, const Tensor<T>& x_clean, AttackTarget target) {
  if (x_adv.shape != x_clean.shape) throw ShapeError("attack_loss: shapes differ");
  Graph<T> g;
  auto bm = bind(g, model);
  auto v = pipeline_objective(bm, image_constant(g, x_adv), image_constant(g, x_clean), TransformDescriptor{}, target,
                              model.config.lambda);
  return v.value().detached();
}

namespace detail {

template <typename T>
int sgn(T g) { return (g > T(0)) - (g < T(0)); }

/// x <- Proj(x + alpha * sgn(g)) onto the eps-ball around c intersected
/// with [0,1]. Bounds are enforced on the stored float values.
template <typename T>
void ascent_step(Tensor<T>& x, const std::vector<T>& grad, const Tensor<T>& clean, double alpha, double eps) {
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double c = static_cast<double>(clean[i]);
    const double lo = std::max(0.0, c - eps), hi = std::min(1.0, c + eps);
    const double v = std::clamp(static_cast<double>(x[i]) + alpha * sgn(grad[i]), lo, hi);
    T out = static_cast<T>(v);
    if (static_cast<double>(out) > hi) out = std::nextafter(out, -std::numeric_limits<T>::infinity());
    if (static_cast<double>(out) < lo) out = std::nextafter(out, std::numeric_limits<T>::infinity());
    x[i] = out;
  }
}

/// Projected sign-gradient ascent. `accumulate(g_fn)` must run one or more
/// backward passes whose input gradients land in x.grad.
template <typename T, typename Accumulate>
Tensor<T> projected_ascent(const Tensor<T>& x_clean, const AttackConfig& cfg, Accumulate&& accumulate) {
  cfg.validate();
  for (T v : x_clean.data)
    if (!(v >= T(0) && v <= T(1))) throw ArgumentError("attack: clean image must lie in [0,1]");
  Tensor<T> x = x_clean.detached();
  if (cfg.epsilon == 0.0) return x;
  Tensor<T> x4 = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  const Tensor<T> clean4 = x_clean.reshaped(x4.shape);
  x4.requires_grad = true;
  for (std::uint32_t step = 0; step < cfg.iters; ++step) {
    x4.grad.emplace(x4.numel(), T(0));
    try {
      accumulate(x4, clean4, step);
    } catch (const NumericError& e) {
      throw NumericError("attack step " + std::to_string(step) + ": " + e.what());
    }
    for (T gv : *x4.grad)
      if (!std::isfinite(gv)) throw NumericError("attack step " + std::to_string(step) + ": non-finite input gradient");
    ascent_step(x4, *x4.grad, clean4, cfg.alpha, cfg.epsilon);
  }
  x4.requires_grad = false;
  x4.grad.reset();
  return x4.reshaped(x_clean.shape);
}

}  // namespace detail

/// The EoT transform list used at step `step`: m draws from T without the
/// identity, refreshed every step.
inline std::vector<TransformDescriptor> eot_transforms(std::uint64_t seed, std::uint32_t step, std::uint32_t m) {
  Rng rng(derive_seed(seed, {stream::kAttack, step}));
  std::vector<TransformDescriptor> out;
  out.reserve(m);
  for (std::uint32_t k = 0; k < m; ++k) out.push_back(sample_transform(rng, true));
  return out;
}

/// PGD: x_{t+1} = Proj(x_t + alpha * sgn(grad L)). With eot_samples = m > 0
/// the loss is the mean over the identity and m fresh transforms per step.
template <typename T>
Tensor<T> pgd(const CodecModel<T>& model, const Tensor<T>& x_clean, const AttackConfig& cfg) {
  const std::uint32_t m = cfg.eot_samples;
  const T weight = T(1) / static_cast<T>(m + 1);
  return detail::projected_ascent(x_clean, cfg, [&](Tensor<T>& x4, const Tensor<T>& clean4, std::uint32_t step) {
    std::vector<TransformDescriptor> arms{TransformDescriptor{}};
    if (m) {
      auto extra = eot_transforms(cfg.seed, step, m);
      arms.insert(arms.end(), extra.begin(), extra.end());
    }
    // One graph per branch keeps memory flat; input gradients accumulate.
    for (const auto& td : arms) {
      Graph<T> g;
      auto bm = bind(g, model);
      auto loss = pipeline_objective(bm, g.input(x4), g.input(clean4), td, cfg.target, model.config.lambda);
      if (m) loss = scale(loss, weight);
      g.backward(loss);
    }
  });
}

template <typename T>
Tensor<T> eot_attack(const CodecModel<T>& model, const Tensor<T>& x_clean, const AttackConfig& cfg) {
  return pgd(model, x_clean, cfg);
}

/// Per-element feature statistics disruption on the encoder activations:
/// maximise sum_l [ |f_l(x) - f_l(x_clean)|^2 - |f_l(x) - mean_sp f_l(x)|^2 ] / |f_l|.
template <typename T>
Var<T> fda_objective(const BoundModel<T>& bm, Var<T> x, const std::vector<Tensor<T>>& clean_features) {
  auto enc = encode_latent(bm, pad_to_stride(x, bm.config().downsampling), QuantMode::eval_round);
  std::vector<Var<T>> feats{enc.hidden, enc.y};
  Var<T> total;
  for (std::size_t l = 0; l < feats.size(); ++l) {
    const T inv = T(1) / static_cast<T>(feats[l].value().numel());
    auto away = squared_distance(feats[l], x.graph->input(clean_features[l]));
    auto term = scale(sub(away, spatial_variance_sum(feats[l])), inv);
    total = l == 0 ? term : add(total, term);
  }
  return total;
}

template <typename T>
std::vector<Tensor<T>> encoder_features(const CodecModel<T>& model, const Tensor<T>& image) {
  Graph<T> g;
  auto bm = bind(g, model);
  auto enc = encode_latent(bm, pad_to_stride(image_constant(g, image), model.config.downsampling), QuantMode::eval_round);
  return {enc.hidden.value().detached(), enc.y.value().detached()};
}

template <typename T>
Tensor<T> fda_lite(const CodecModel<T>& model, const Tensor<T>& x_clean, const AttackConfig& cfg) {
  const auto clean_features = encoder_features(model, x_clean);
  return detail::projected_ascent(x_clean, cfg, [&](Tensor<T>& x4, const Tensor<T>&, std::uint32_t) {
    Graph<T> g;
    auto bm = bind(g, model);
    g.backward(fda_objective(bm, g.input(x4), clean_features));
  });
}

}  // namespace rdsc
