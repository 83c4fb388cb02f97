#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rdsc/codec/codec.hpp"
#include "rdsc/common/error.hpp"
#include "rdsc/common/rng.hpp"

namespace rdsc {

enum class AdversarialMode { off, fgsm_random_init };

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  std::size_t crop = 32;             // random square crop side; 0 = whole image
  std::size_t crops_per_image = 1;   // samples drawn from each image per epoch
  double learning_rate = 1e-3;       // Adam
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::uint64_t seed = 0;
  AdversarialMode adversarial = AdversarialMode::off;
  double adv_epsilon = 4.0 / 255.0;
  /// Optional progress callback: (epoch, mean train loss of the epoch).
  std::function<void(std::size_t, double)> on_epoch;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean noisy rd loss per epoch
  std::size_t steps = 0;
};

/// Adam state held in double.
class Adam {
 public:
  Adam(std::size_t n, double lr, double b1, double b2, double eps) : m_(n, 0.0), v_(n, 0.0), lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  template <typename T>
  void step(CodecModel<T>& model) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    std::size_t k = 0;
    for (auto& [name, p] : model.parameters()) {
      if (!p->grad) {
        k += p->numel();
        continue;
      }
      for (std::size_t i = 0; i < p->numel(); ++i, ++k) {
        const double g = static_cast<double>((*p->grad)[i]);
        m_[k] = b1_ * m_[k] + (1.0 - b1_) * g;
        v_[k] = b2_ * v_[k] + (1.0 - b2_) * g * g;
        p->data[i] = static_cast<T>(static_cast<double>(p->data[i]) - lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_));
      }
    }
  }

 private:
  std::vector<double> m_, v_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

/// Crop of a [3,H,W] image.
template <typename T>
Tensor<T> crop_image(const Tensor<T>& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  const std::size_t H = img.dim(1), W = img.dim(2);
  Tensor<T> out({img.dim(0), h, w});
  for (std::size_t c = 0; c < img.dim(0); ++c)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(img.data.begin() + static_cast<long>((c * H + top + y) * W + left), w,
                  out.data.begin() + static_cast<long>((c * h + y) * w));
  return out;
}

/// FGSM example with a uniform random start in the eps-ball, ascending the
/// eval-rounded rate of the current model; clipped to the ball and [0,1].
template <typename T>
Tensor<T> fgsm_random_init(const CodecModel<T>& model, const Tensor<T>& x, double eps, Rng& rng) {
  Tensor<T> start = x.detached();
  for (std::size_t i = 0; i < start.numel(); ++i)
    start[i] = static_cast<T>(std::clamp(static_cast<double>(x[i]) + rng.uniform(-eps, eps), 0.0, 1.0));
  Tensor<T> leaf = start.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  leaf.requires_grad = true;
  {
    Graph<T> g;
    auto bm = bind(g, model);
    auto r = rd_loss(bm, g.input(leaf), QuantMode::eval_round);
    g.backward(r.rate_bpp);
  }
  Tensor<T> out = start;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double gi = static_cast<double>((*leaf.grad)[i]);
    const double sg = gi > 0 ? 1.0 : (gi < 0 ? -1.0 : 0.0);
    const double lo = std::max(0.0, static_cast<double>(x[i]) - eps), hi = std::min(1.0, static_cast<double>(x[i]) + eps);
    out[i] = static_cast<T>(std::clamp(static_cast<double>(start[i]) + eps * sg, lo, hi));
  }
  return out;
}

/// Mean eval-rounded rd loss over a set of images.
template <typename T>
double mean_eval_rd(const CodecModel<T>& model, const std::vector<Tensor<T>>& images) {
  double acc = 0.0;
  for (const auto& img : images) {
    Graph<T> g;
    auto bm = bind(g, model);
    acc += rd_loss(bm, image_constant(g, img), QuantMode::eval_round).record.rd_loss;
  }
  return acc / static_cast<double>(images.size());
}

/// Minimise E[rate + lambda * mse] with noise quantization and Adam.
/// With fgsm_random_init every batch also contains one FGSM example per
/// clean sample. Throws NumericError with the epoch/step on divergence.
template <typename T>
TrainReport train(CodecModel<T>& model, const std::vector<Tensor<T>>& dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw ArgumentError("train: empty dataset");
  const std::size_t s = model.config.downsampling;
  for (const auto& img : dataset) {
    if (img.rank() != 3 || img.dim(0) != kImageChannels) throw ShapeError("train: expected [3,H,W] images, got " + shape_str(img.shape));
    if (img.dim(1) < s || img.dim(2) < s) throw ShapeError("train: image smaller than the downsampling factor");
  }
  if (cfg.batch_size == 0 || cfg.crops_per_image == 0) throw ArgumentError("train: batch size and crops per image must be positive");

  Rng rng(derive_seed(cfg.seed, {stream::kTrain}));
  Adam opt(model.parameter_count(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  model.set_requires_grad(true);
  TrainReport report;

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    for (std::size_t k = 0; k < cfg.crops_per_image; ++k) order.push_back(i);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_below(i)]);
    double epoch_loss = 0.0;
    std::size_t epoch_samples = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      std::vector<Tensor<T>> batch;
      for (std::size_t k = b0; k < b1; ++k) {
        const auto& img = dataset[order[k]];
        const std::size_t H = img.dim(1), W = img.dim(2);
        const std::size_t ch = cfg.crop ? std::min(cfg.crop, H) : H, cw = cfg.crop ? std::min(cfg.crop, W) : W;
        const std::size_t top = rng.uniform_below(H - ch + 1), left = rng.uniform_below(W - cw + 1);
        batch.push_back(crop_image(img, top, left, ch, cw));
      }
      if (cfg.adversarial == AdversarialMode::fgsm_random_init) {
        model.set_requires_grad(false);
        const std::size_t n = batch.size();
        for (std::size_t k = 0; k < n; ++k) batch.push_back(fgsm_random_init<T>(model, batch[k], cfg.adv_epsilon, rng));
        model.set_requires_grad(true);
      }
      model.zero_grad();
      const T weight = static_cast<T>(1.0 / static_cast<double>(batch.size()));
      try {
        for (const auto& x : batch) {
          Graph<T> g;
          auto bm = bind(g, model);
          auto r = rd_loss(bm, image_constant(g, x), QuantMode::train_noise, &rng);
          if (!std::isfinite(r.record.rd_loss)) throw NumericError("loss is not finite");
          g.backward(scale(r.loss, weight));
          epoch_loss += r.record.rd_loss;
          ++epoch_samples;
        }
      } catch (const NumericError& e) {
        model.set_requires_grad(false);
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(report.steps) +
                           ": " + e.what());
      }
      opt.step(model);
      ++report.steps;
      for (const auto& [name, p] : model.parameters())
        if (!p->all_finite()) {
          model.set_requires_grad(false);
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": parameter " + name + " is not finite");
        }
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(epoch_samples));
    if (cfg.on_epoch) cfg.on_epoch(epoch, report.epoch_loss.back());
  }
  model.set_requires_grad(false);
  return report;
}

}  // namespace rdsc
