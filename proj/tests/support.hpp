#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include "rdsc/common/rng.hpp"
#include "rdsc/tensor_core.hpp"

namespace rdsc::check {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Graph constant of a tensor converted to the graph's scalar type.
template <typename G, typename U>
auto lift(G& g, const Tensor<U>& t) {
  return g.constant(t.template cast<typename G::value_type>());
}

/// <a, w> accumulated in double; reduces any output to a scalar loss.
template <typename T, typename U>
Var<T> project(Var<T> a, const Tensor<U>& w) {
  double acc = 0.0;
  const auto& av = a.value().data;
  if (av.size() != w.numel()) throw ShapeError("project: size mismatch");
  for (std::size_t i = 0; i < av.size(); ++i) acc += static_cast<double>(av[i]) * static_cast<double>(w[i]);
  auto weights = std::make_shared<Tensor<T>>(w.template cast<T>());
  return a.graph->record(Tensor<T>::scalar(static_cast<T>(acc)), {a.id}, [weights](Graph<T>& g, std::size_t self) {
    const T go = g.grad(self)[0];
    auto& ga = g.input_grad(self, 0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go * (*weights)[i];
  }, "project");
}

struct GradReport {
  std::size_t total = 0;
  std::size_t passed = 0;
  double max_rel = 0.0;
  std::string worst;

  double pass_fraction() const { return total ? static_cast<double>(passed) / static_cast<double>(total) : 1.0; }
  bool all() const { return passed == total; }
};

inline void score(GradReport& r, std::size_t i, double ana, double num, double rel_tol, double abs_tol) {
  const double mag = std::max(std::abs(num), std::abs(ana));
  const double err = std::abs(num - ana);
  const bool ok = mag < 1e-6 ? err <= abs_tol : err / mag <= rel_tol;
  ++r.total;
  if (ok) ++r.passed;
  if (mag >= 1e-6 && err / mag > r.max_rel) {
    r.max_rel = err / mag;
    r.worst = "coord " + std::to_string(i) + ": analytic " + std::to_string(ana) + " numeric " + std::to_string(num);
  }
}

/// Analytic gradient of a single-precision graph against central
/// differences of the same loss. `loss` is a generic callable
/// (Graph<T>&, Var<T>) -> Var<T>; the analytic pass runs at T = float and
/// the difference quotients at T = double so that the reference is not
/// dominated by float rounding of the loss.
/// A coordinate passes when the relative error is <= rel_tol, or, when
/// both values are below 1e-6 in magnitude, the absolute error is <= abs_tol.
template <typename F>
GradReport gradcheck(const Tensor<float>& x0, F&& loss, double h = 1e-3, double rel_tol = 1e-3, double abs_tol = 1e-5) {
  Tensor<float> x = x0.detached();
  x.requires_grad = true;
  {
    Graph<float> g;
    g.backward(loss(g, g.input(x)));
  }
  Tensor<double> xd = x0.cast<double>();
  auto eval = [&] {
    Graph<double> g;
    const Tensor<double>& cx = xd;
    return loss(g, g.input(cx)).value().item();
  };
  GradReport r;
  for (std::size_t i = 0; i < xd.numel(); ++i) {
    const double keep = xd[i];
    xd[i] = keep + h;
    const double fp = eval();
    xd[i] = keep - h;
    const double fm = eval();
    xd[i] = keep;
    score(r, i, static_cast<double>((*x.grad)[i]), (fp - fm) / (2.0 * h), rel_tol, abs_tol);
  }
  return r;
}

/// Same check entirely at one precision.
template <typename T, typename F>
GradReport gradcheck_at(const Tensor<T>& x0, F&& loss, double h = 1e-3, double rel_tol = 1e-3, double abs_tol = 1e-5) {
  Tensor<T> x = x0.detached();
  x.requires_grad = true;
  {
    Graph<T> g;
    g.backward(loss(g, g.input(x)));
  }
  const std::vector<T> analytic = *x.grad;
  Tensor<T> xe = x0.detached();
  auto eval = [&] {
    Graph<T> g;
    const Tensor<T>& cx = xe;
    return static_cast<double>(loss(g, g.input(cx)).value().item());
  };
  GradReport r;
  for (std::size_t i = 0; i < xe.numel(); ++i) {
    const T keep = xe[i];
    xe[i] = static_cast<T>(static_cast<double>(keep) + h);
    const double fp = eval();
    xe[i] = static_cast<T>(static_cast<double>(keep) - h);
    const double fm = eval();
    xe[i] = keep;
    score(r, i, static_cast<double>(analytic[i]), (fp - fm) / (2.0 * h), rel_tol, abs_tol);
  }
  return r;
}

}  // namespace rdsc::check
