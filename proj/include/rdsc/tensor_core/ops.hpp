#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rdsc/tensor_core/graph.hpp"

namespace rdsc {

namespace detail {
inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}
}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.graph->record(std::move(out), {a.id, b.id}, [](Graph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    for (std::size_t k = 0; k < 2; ++k) {
      if (!g.input_needs_grad(self, k)) continue;
      auto& gi = g.input_grad(self, k);
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
    }
  }, "add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.graph->record(std::move(out), {a.id, b.id}, [](Graph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    if (g.input_needs_grad(self, 0)) {
      auto& gi = g.input_grad(self, 0);
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
    }
    if (g.input_needs_grad(self, 1)) {
      auto& gi = g.input_grad(self, 1);
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] -= go[i];
    }
  }, "sub");
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * factor;
  return a.graph->record(std::move(out), {a.id}, [factor](Graph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    auto& gi = g.input_grad(self, 0);
    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * factor;
  }, "scale");
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.graph->record(std::move(out), {a.id}, [](Graph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    auto& gi = g.input_grad(self, 0);
    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
  }, "reshape");
}

/// x[N,C,H,W] + bias[C] broadcast over N, H, W.
template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias) {
  const Shape& xs = x.shape();
  if (xs.size() != 4 || bias.shape() != Shape{xs[1]})
    throw ShapeError("add_channel_bias: expected [N,C,H,W] and [C], got " + shape_str(xs) + " and " + shape_str(bias.shape()));
  const std::size_t N = xs[0], C = xs[1], P = xs[2] * xs[3];
  Tensor<T> out(xs);
  const auto& xv = x.value().data;
  const auto& bv = bias.value().data;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) out[(n * C + c) * P + p] = xv[(n * C + c) * P + p] + bv[c];
  return x.graph->record(std::move(out), {x.id, bias.id}, [N, C, P](Graph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    if (g.input_needs_grad(self, 0)) {
      auto& gx = g.input_grad(self, 0);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    if (g.input_needs_grad(self, 1)) {
      auto& gb = g.input_grad(self, 1);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          T acc = T(0);
          for (std::size_t p = 0; p < P; ++p) acc += go[(n * C + c) * P + p];
          gb[c] += acc;
        }
    }
  }, "add_channel_bias");
}

enum class Activation { relu, leaky_relu };

inline constexpr double kLeakySlope = 0.01;

/// Elementwise activation. The derivative at exactly 0 is taken as 0 for
/// relu and as the negative-side slope for leaky_relu.
template <typename T>
Var<T> activation(Var<T> x, Activation kind) {
  const T neg = kind == Activation::relu ? T(0) : T(kLeakySlope);
  Tensor<T> out(x.shape());
  const auto& xv = x.value().data;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] > T(0) ? xv[i] : xv[i] * neg;
  return x.graph->record(std::move(out), {x.id}, [neg](Graph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    const auto& xv = g.input_value(self, 0).data;
    auto& gi = g.input_grad(self, 0);
    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += xv[i] > T(0) ? go[i] : go[i] * neg;
  }, kind == Activation::relu ? "relu" : "leaky_relu");
}

/// Round half away from zero with a straight-through (identity) gradient.
template <typename T>
Var<T> round_ste(Var<T> x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::round(x.value()[i]);
  return x.graph->record(std::move(out), {x.id}, [](Graph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    auto& gi = g.input_grad(self, 0);
    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
  }, "round_ste");
}

/// Clamp to [lo, hi]; gradient passes where lo <= x <= hi.
template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::min(std::max(x.value()[i], lo), hi);
  return x.graph->record(std::move(out), {x.id}, [lo, hi](Graph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    const auto& xv = g.input_value(self, 0).data;
    auto& gi = g.input_grad(self, 0);
    for (std::size_t i = 0; i < go.size(); ++i)
      if (xv[i] >= lo && xv[i] <= hi) gi[i] += go[i];
  }, "clamp");
}

template <typename T>
Var<T> sum(Var<T> x) {
  double acc = 0.0;
  for (const T& v : x.value().data) acc += static_cast<double>(v);
  return x.graph->record(Tensor<T>::scalar(static_cast<T>(acc)), {x.id}, [](Graph<T>& g, std::size_t self) {
    const T go = g.grad(self)[0];
    auto& gi = g.input_grad(self, 0);
    for (auto& v : gi) v += go;
  }, "sum");
}

template <typename T>
Var<T> mean(Var<T> x) {
  if (x.value().numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.value().numel()));
}

/// sum((a - b)^2), accumulated in double.
template <typename T>
Var<T> squared_distance(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "squared_distance");
  double acc = 0.0;
  const auto& av = a.value().data;
  const auto& bv = b.value().data;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  return a.graph->record(Tensor<T>::scalar(static_cast<T>(acc)), {a.id, b.id}, [](Graph<T>& g, std::size_t self) {
    const T go = g.grad(self)[0];
    const auto& av = g.input_value(self, 0).data;
    const auto& bv = g.input_value(self, 1).data;
    if (g.input_needs_grad(self, 0)) {
      auto& ga = g.input_grad(self, 0);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += T(2) * (av[i] - bv[i]) * go;
    }
    if (g.input_needs_grad(self, 1)) {
      auto& gb = g.input_grad(self, 1);
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= T(2) * (av[i] - bv[i]) * go;
    }
  }, "squared_distance");
}

/// Mean squared error over all elements.
template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  if (a.value().numel() == 0) throw ShapeError("mse of empty tensor");
  return scale(squared_distance(a, b), T(1) / static_cast<T>(a.value().numel()));
}

/// sum over (n, c) planes of sum_p (x[p] - mean_p x)^2.
template <typename T>
Var<T> spatial_variance_sum(Var<T> x) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw ShapeError("spatial_variance_sum needs rank >= 2");
  const std::size_t P = xs[xs.size() - 1] * xs[xs.size() - 2];
  const std::size_t planes = P ? x.value().numel() / P : 0;
  const auto& xv = x.value().data;
  double acc = 0.0;
  for (std::size_t q = 0; q < planes; ++q) {
    double m = 0.0;
    for (std::size_t p = 0; p < P; ++p) m += xv[q * P + p];
    m /= static_cast<double>(P);
    for (std::size_t p = 0; p < P; ++p) {
      const double d = xv[q * P + p] - m;
      acc += d * d;
    }
  }
  return x.graph->record(Tensor<T>::scalar(static_cast<T>(acc)), {x.id}, [P, planes](Graph<T>& g, std::size_t self) {
    const T go = g.grad(self)[0];
    const auto& xv = g.input_value(self, 0).data;
    auto& gi = g.input_grad(self, 0);
    for (std::size_t q = 0; q < planes; ++q) {
      double m = 0.0;
      for (std::size_t p = 0; p < P; ++p) m += xv[q * P + p];
      const T mt = static_cast<T>(m / static_cast<double>(P));
      for (std::size_t p = 0; p < P; ++p) gi[q * P + p] += T(2) * (xv[q * P + p] - mt) * go;
    }
  }, "spatial_variance_sum");
}

}  // namespace rdsc
