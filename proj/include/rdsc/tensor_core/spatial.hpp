#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rdsc/tensor_core/graph.hpp"

namespace rdsc {

/// Pixel gather over the last two dimensions: out[y][x] = in[src] with
/// src = map[y*out_w + x] (a flat in-plane offset), or 0 when src < 0.
/// Applied identically to every leading plane. Dihedral permutations, zero
/// padding, edge padding and cropping are all expressed this way.
struct IndexMap {
  std::size_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::vector<std::int64_t> src;
};

/// Bilinear resampling taps along one axis (half-pixel centres, clamped).
struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

namespace detail {

inline void split_planes(const Shape& s, std::size_t& planes, std::size_t& h, std::size_t& w, const char* op) {
  if (s.size() < 2) throw ShapeError(std::string(op) + ": needs rank >= 2, got " + shape_str(s));
  h = s[s.size() - 2];
  w = s[s.size() - 1];
  planes = 1;
  for (std::size_t i = 0; i + 2 < s.size(); ++i) planes *= s[i];
}

inline Shape with_spatial(Shape s, std::size_t h, std::size_t w) {
  s[s.size() - 2] = h;
  s[s.size() - 1] = w;
  return s;
}

inline AxisTaps make_axis_taps(std::size_t in, std::size_t out) {
  AxisTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    t.lo[o] = i0;
    t.hi[o] = std::min(i0 + 1, in - 1);
    t.frac[o] = src - static_cast<double>(i0);
  }
  return t;
}

}  // namespace detail

template <typename T>
Tensor<T> gather(const Tensor<T>& x, const IndexMap& map) {
  std::size_t planes, h, w;
  detail::split_planes(x.shape, planes, h, w, "gather");
  if (h != map.in_h || w != map.in_w)
    throw ShapeError("gather: map expects " + std::to_string(map.in_h) + "x" + std::to_string(map.in_w) + " planes, got " +
                     shape_str(x.shape));
  Tensor<T> out(detail::with_spatial(x.shape, map.out_h, map.out_w));
  const std::size_t ip = h * w, op = map.out_h * map.out_w;
  for (std::size_t q = 0; q < planes; ++q)
    for (std::size_t i = 0; i < op; ++i) {
      const std::int64_t s = map.src[i];
      out[q * op + i] = s >= 0 ? x[q * ip + static_cast<std::size_t>(s)] : T(0);
    }
  return out;
}

/// Bilinear resize of the last two dims with separable lerps, so constant
/// planes are reproduced exactly.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  std::size_t planes, h, w;
  detail::split_planes(x.shape, planes, h, w, "resize_bilinear");
  if (h == 0 || w == 0 || out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear: empty extent");
  const AxisTaps ty = detail::make_axis_taps(h, out_h), tx = detail::make_axis_taps(w, out_w);
  Tensor<T> out(detail::with_spatial(x.shape, out_h, out_w));
  for (std::size_t q = 0; q < planes; ++q) {
    const T* in = x.data.data() + q * h * w;
    T* o = out.data.data() + q * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const T* r0 = in + ty.lo[y] * w;
      const T* r1 = in + ty.hi[y] * w;
      const T fy = static_cast<T>(ty.frac[y]);
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const T fx = static_cast<T>(tx.frac[xx]);
        const T a = r0[tx.lo[xx]] + (r0[tx.hi[xx]] - r0[tx.lo[xx]]) * fx;
        const T b = r1[tx.lo[xx]] + (r1[tx.hi[xx]] - r1[tx.lo[xx]]) * fx;
        o[y * out_w + xx] = a + (b - a) * fy;
      }
    }
  }
  return out;
}

template <typename T>
Var<T> gather(Var<T> x, std::shared_ptr<const IndexMap> map) {
  Tensor<T> out = gather(x.value(), *map);
  return x.graph->record(std::move(out), {x.id}, [map](Graph<T>& g, std::size_t self) {
    const auto& go = g.grad(self);
    auto& gi = g.input_grad(self, 0);
    const std::size_t ip = map->in_h * map->in_w, op = map->out_h * map->out_w;
    const std::size_t planes = op ? go.size() / op : 0;
    for (std::size_t q = 0; q < planes; ++q)
      for (std::size_t i = 0; i < op; ++i) {
        const std::int64_t s = map->src[i];
        if (s >= 0) gi[q * ip + static_cast<std::size_t>(s)] += go[q * op + i];
      }
  }, "gather");
}

template <typename T>
Var<T> resize_bilinear(Var<T> x, std::size_t out_h, std::size_t out_w) {
  Tensor<T> out = resize_bilinear(x.value(), out_h, out_w);
  std::size_t planes, h, w;
  detail::split_planes(x.shape(), planes, h, w, "resize_bilinear");
  return x.graph->record(std::move(out), {x.id}, [planes, h, w, out_h, out_w](Graph<T>& g, std::size_t self) {
    const AxisTaps ty = detail::make_axis_taps(h, out_h), tx = detail::make_axis_taps(w, out_w);
    const auto& go = g.grad(self);
    auto& gi = g.input_grad(self, 0);
    for (std::size_t q = 0; q < planes; ++q) {
      T* in = gi.data() + q * h * w;
      const T* o = go.data() + q * out_h * out_w;
      for (std::size_t y = 0; y < out_h; ++y) {
        const T fy = static_cast<T>(ty.frac[y]);
        T* r0 = in + ty.lo[y] * w;
        T* r1 = in + ty.hi[y] * w;
        for (std::size_t xx = 0; xx < out_w; ++xx) {
          const T fx = static_cast<T>(tx.frac[xx]);
          const T gv = o[y * out_w + xx];
          const T top = gv * (T(1) - fy), bot = gv * fy;
          r0[tx.lo[xx]] += top * (T(1) - fx);
          r0[tx.hi[xx]] += top * fx;
          r1[tx.lo[xx]] += bot * (T(1) - fx);
          r1[tx.hi[xx]] += bot * fx;
        }
      }
    }
  }, "resize_bilinear");
}

// Index map builders.

/// Zero padding: `top` rows above, `left` columns before, `bottom`/`right` after.
inline IndexMap pad_zero_map(std::size_t h, std::size_t w, std::size_t top, std::size_t left, std::size_t bottom,
                             std::size_t right) {
  IndexMap m{h, w, h + top + bottom, w + left + right, {}};
  m.src.assign(m.out_h * m.out_w, -1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) m.src[(y + top) * m.out_w + x + left] = static_cast<std::int64_t>(y * w + x);
  return m;
}

/// Replicate the last row/column to grow the plane by `bottom` rows and `right` columns.
inline IndexMap pad_edge_map(std::size_t h, std::size_t w, std::size_t bottom, std::size_t right) {
  if (h == 0 || w == 0) throw ShapeError("pad_edge: empty plane");
  IndexMap m{h, w, h + bottom, w + right, {}};
  m.src.resize(m.out_h * m.out_w);
  for (std::size_t y = 0; y < m.out_h; ++y)
    for (std::size_t x = 0; x < m.out_w; ++x)
      m.src[y * m.out_w + x] = static_cast<std::int64_t>(std::min(y, h - 1) * w + std::min(x, w - 1));
  return m;
}

inline IndexMap crop_map(std::size_t h, std::size_t w, std::size_t top, std::size_t left, std::size_t out_h,
                         std::size_t out_w) {
  if (top + out_h > h || left + out_w > w)
    throw ShapeError("crop: window " + std::to_string(out_h) + "x" + std::to_string(out_w) + " at (" +
                     std::to_string(top) + "," + std::to_string(left) + ") exceeds " + std::to_string(h) + "x" +
                     std::to_string(w));
  IndexMap m{h, w, out_h, out_w, {}};
  m.src.resize(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) m.src[y * out_w + x] = static_cast<std::int64_t>((y + top) * w + x + left);
  return m;
}

template <typename T>
Var<T> crop(Var<T> x, std::size_t top, std::size_t left, std::size_t out_h, std::size_t out_w) {
  std::size_t planes, h, w;
  detail::split_planes(x.shape(), planes, h, w, "crop");
  return gather(x, std::make_shared<const IndexMap>(crop_map(h, w, top, left, out_h, out_w)));
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::size_t top, std::size_t left, std::size_t out_h, std::size_t out_w) {
  std::size_t planes, h, w;
  detail::split_planes(x.shape, planes, h, w, "crop");
  return gather(x, crop_map(h, w, top, left, out_h, out_w));
}

}  // namespace rdsc
