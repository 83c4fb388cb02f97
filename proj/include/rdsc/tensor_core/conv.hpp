#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rdsc/tensor_core/graph.hpp"

namespace rdsc {

namespace detail {

/// Geometry shared by a strided convolution and its transpose. The "big"
/// side is the conv input (transpose output); the "small" side is the conv
/// output (transpose input).
struct ConvGeom {
  std::size_t channels = 0;  // channels on the big side
  std::size_t big_h = 0, big_w = 0;
  std::size_t kernel = 0, stride = 1, pad = 0;
  std::size_t small_h = 0, small_w = 0;

  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return small_h * small_w; }
};

/// cols[(c*k + ky)*k + kx][oy*small_w + ox] = big[c][oy*s + ky - p][ox*s + kx - p] (0 outside).
template <typename T>
void im2col(const T* big, const ConvGeom& g, T* cols) {
  const std::size_t P = g.col_cols();
  const long bh = static_cast<long>(g.big_h), bw = static_cast<long>(g.big_w);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = big + c * g.big_h * g.big_w;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * P;
        for (std::size_t oy = 0; oy < g.small_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          T* dst = row + oy * g.small_w;
          if (iy < 0 || iy >= bh) {
            std::fill(dst, dst + g.small_w, T(0));
            continue;
          }
          const T* src = plane + iy * bw;
          for (std::size_t ox = 0; ox < g.small_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            dst[ox] = (ix >= 0 && ix < bw) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: big += scatter(cols).
template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* big) {
  const std::size_t P = g.col_cols();
  const long bh = static_cast<long>(g.big_h), bw = static_cast<long>(g.big_w);
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = big + c * g.big_h * g.big_w;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * P;
        for (std::size_t oy = 0; oy < g.small_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= bh) continue;
          const T* src = row + oy * g.small_w;
          T* dst = plane + iy * bw;
          for (std::size_t ox = 0; ox < g.small_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < bw) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

/// out[M][P] += A[M][K] * B[K][P]
template <typename T>
void gemm_nn(const T* a, const T* b, T* out, std::size_t M, std::size_t K, std::size_t P) {
  for (std::size_t m = 0; m < M; ++m) {
    T* orow = out + m * P;
    for (std::size_t k = 0; k < K; ++k) {
      const T w = a[m * K + k];
      const T* brow = b + k * P;
      for (std::size_t p = 0; p < P; ++p) orow[p] += w * brow[p];
    }
  }
}

/// out[K][P] += A[M][K]^T * B[M][P]
template <typename T>
void gemm_tn(const T* a, const T* b, T* out, std::size_t M, std::size_t K, std::size_t P) {
  for (std::size_t m = 0; m < M; ++m) {
    const T* brow = b + m * P;
    for (std::size_t k = 0; k < K; ++k) {
      const T w = a[m * K + k];
      T* orow = out + k * P;
      for (std::size_t p = 0; p < P; ++p) orow[p] += w * brow[p];
    }
  }
}

/// out[M][K] += A[M][P] * B[K][P]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* out, std::size_t M, std::size_t K, std::size_t P) {
  for (std::size_t m = 0; m < M; ++m) {
    const T* arow = a + m * P;
    for (std::size_t k = 0; k < K; ++k) {
      const T* brow = b + k * P;
      T acc = T(0);
      for (std::size_t p = 0; p < P; ++p) acc += arow[p] * brow[p];
      out[m * K + k] += acc;
    }
  }
}

inline void check_conv_args(const Shape& x, const Shape& w, std::size_t stride, const char* op) {
  if (x.size() != 4) throw ShapeError(std::string(op) + ": input must be [N,C,H,W], got " + shape_str(x));
  if (w.size() != 4 || w[2] != w[3]) throw ShapeError(std::string(op) + ": weight must be [A,B,k,k], got " + shape_str(w));
  if (stride == 0) throw ShapeError(std::string(op) + ": stride must be positive");
}

}  // namespace detail

/// Cross-correlation with zero padding. weight is [Co, Ci, k, k].
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::size_t stride, std::size_t pad) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  detail::check_conv_args(xs, ws, stride, "conv2d");
  if (ws[1] != xs[1])
    throw ShapeError("conv2d: weight expects " + std::to_string(ws[1]) + " input channels, input has " + std::to_string(xs[1]));
  const long span_h = static_cast<long>(xs[2] + 2 * pad) - static_cast<long>(ws[2]);
  const long span_w = static_cast<long>(xs[3] + 2 * pad) - static_cast<long>(ws[3]);
  if (span_h < 0 || span_w < 0) throw ShapeError("conv2d: non-positive output extent for input " + shape_str(xs));

  detail::ConvGeom g{xs[1], xs[2], xs[3], ws[2], stride, pad, static_cast<std::size_t>(span_h) / stride + 1,
                     static_cast<std::size_t>(span_w) / stride + 1};
  const std::size_t N = xs[0], Co = ws[0], K = g.col_rows(), P = g.col_cols();
  const std::size_t in_plane = g.channels * g.big_h * g.big_w;

  Tensor<T> out(Shape{N, Co, g.small_h, g.small_w});
  std::vector<T> cols(K * P);
  for (std::size_t n = 0; n < N; ++n) {
    detail::im2col(x.value().data.data() + n * in_plane, g, cols.data());
    detail::gemm_nn(weight.value().data.data(), cols.data(), out.data.data() + n * Co * P, Co, K, P);
  }

  auto backward = [g, N, Co, K, P, in_plane](Graph<T>& graph, std::size_t self) {
    const std::vector<T>& go = graph.grad(self);
    const Tensor<T>& xv = graph.input_value(self, 0);
    const Tensor<T>& wv = graph.input_value(self, 1);
    std::vector<T> cols(K * P);
    if (graph.input_needs_grad(self, 0)) {
      std::vector<T>& gx = graph.input_grad(self, 0);
      for (std::size_t n = 0; n < N; ++n) {
        std::fill(cols.begin(), cols.end(), T(0));
        detail::gemm_tn(wv.data.data(), go.data() + n * Co * P, cols.data(), Co, K, P);
        detail::col2im(cols.data(), g, gx.data() + n * in_plane);
      }
    }
    if (graph.input_needs_grad(self, 1)) {
      std::vector<T>& gw = graph.input_grad(self, 1);
      for (std::size_t n = 0; n < N; ++n) {
        detail::im2col(xv.data.data() + n * in_plane, g, cols.data());
        detail::gemm_nt(go.data() + n * Co * P, cols.data(), gw.data(), Co, K, P);
      }
    }
  };
  return x.graph->record(std::move(out), {x.id, weight.id}, backward, "conv2d");
}

/// Transposed convolution, the adjoint of conv2d with the same weight.
/// weight is [Ci, Co, k, k] (the conv2d layout it is the adjoint of), output
/// extent is (H-1)*stride - 2*pad + k.
template <typename T>
Var<T> conv2d_transpose(Var<T> x, Var<T> weight, std::size_t stride, std::size_t pad) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  detail::check_conv_args(xs, ws, stride, "conv2d_transpose");
  if (ws[0] != xs[1])
    throw ShapeError("conv2d_transpose: weight expects " + std::to_string(ws[0]) + " input channels, input has " +
                     std::to_string(xs[1]));
  if (xs[2] == 0 || xs[3] == 0) throw ShapeError("conv2d_transpose: empty input");
  const long oh = static_cast<long>((xs[2] - 1) * stride + ws[2]) - 2 * static_cast<long>(pad);
  const long ow = static_cast<long>((xs[3] - 1) * stride + ws[3]) - 2 * static_cast<long>(pad);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d_transpose: non-positive output extent");

  detail::ConvGeom g{ws[1], static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), ws[2], stride, pad, xs[2], xs[3]};
  const std::size_t N = xs[0], Ci = ws[0], K = g.col_rows(), P = g.col_cols();
  const std::size_t out_plane = g.channels * g.big_h * g.big_w;

  Tensor<T> out(Shape{N, g.channels, g.big_h, g.big_w});
  std::vector<T> cols(K * P);
  for (std::size_t n = 0; n < N; ++n) {
    std::fill(cols.begin(), cols.end(), T(0));
    detail::gemm_tn(weight.value().data.data(), x.value().data.data() + n * Ci * P, cols.data(), Ci, K, P);
    detail::col2im(cols.data(), g, out.data.data() + n * out_plane);
  }

  auto backward = [g, N, Ci, K, P, out_plane](Graph<T>& graph, std::size_t self) {
    const std::vector<T>& go = graph.grad(self);
    const Tensor<T>& xv = graph.input_value(self, 0);
    const Tensor<T>& wv = graph.input_value(self, 1);
    const bool want_x = graph.input_needs_grad(self, 0);
    const bool want_w = graph.input_needs_grad(self, 1);
    std::vector<T> cols(K * P);
    for (std::size_t n = 0; n < N; ++n) {
      detail::im2col(go.data() + n * out_plane, g, cols.data());
      if (want_x) detail::gemm_nn(wv.data.data(), cols.data(), graph.input_grad(self, 0).data() + n * Ci * P, Ci, K, P);
      if (want_w) detail::gemm_nt(xv.data.data() + n * Ci * P, cols.data(), graph.input_grad(self, 1).data(), Ci, K, P);
    }
  };
  return x.graph->record(std::move(out), {x.id, weight.id}, backward, "conv2d_transpose");
}

}  // namespace rdsc
