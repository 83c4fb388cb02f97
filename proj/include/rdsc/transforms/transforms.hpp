#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <string>

#include "rdsc/common/error.hpp"
#include "rdsc/common/rng.hpp"
#include "rdsc/tensor_core.hpp"

namespace rdsc {

inline constexpr std::uint32_t kDihedralCount = 8;
inline constexpr std::uint32_t kStretchLevels = 65;  // 0..64 added pixels
inline constexpr std::uint32_t kShiftLevels = 65;
inline constexpr std::uint32_t kTransformCount = kDihedralCount * kStretchLevels * kStretchLevels * kShiftLevels * kShiftLevels;
static_assert(kTransformCount == 142'805'000u);

/// Dihedral codes: 0 identity, 1 rot90 (counter-clockwise), 2 rot180,
/// 3 rot270, 4 horizontal flip, 5 vertical flip, 6 transpose,
/// 7 anti-transpose (transpose composed with rot180).
enum Dihedral : std::uint8_t { kIdentity = 0, kRot90, kRot180, kRot270, kHFlip, kVFlip, kTranspose, kAntiTranspose };

inline constexpr std::uint8_t dihedral_inverse(std::uint8_t d) {
  return d == kRot90 ? kRot270 : d == kRot270 ? kRot90 : d;
}
inline constexpr bool dihedral_swaps_axes(std::uint8_t d) {
  return d == kRot90 || d == kRot270 || d == kTranspose || d == kAntiTranspose;
}

/// One element of T: dihedral, then bilinear stretch to (H+sy, W+sx), then
/// a grow-canvas shift (tx zero columns on the left, ty zero rows on top).
struct TransformDescriptor {
  std::uint8_t dihedral = 0;
  std::uint16_t sx = 0, sy = 0;
  std::uint16_t tx = 0, ty = 0;

  bool is_identity() const { return dihedral == 0 && sx == 0 && sy == 0 && tx == 0 && ty == 0; }
  bool is_exact() const { return sx == 0 && sy == 0; }
  bool operator==(const TransformDescriptor&) const = default;
};

inline std::string to_string(const TransformDescriptor& d) {
  return "d" + std::to_string(d.dihedral) + "/s" + std::to_string(d.sx) + "x" + std::to_string(d.sy) + "/t" +
         std::to_string(d.tx) + "x" + std::to_string(d.ty);
}

/// index = (((d*65 + sy)*65 + sx)*65 + ty)*65 + tx; identity packs to 0.
inline std::uint32_t pack(const TransformDescriptor& d) {
  if (d.dihedral >= kDihedralCount || d.sx >= kStretchLevels || d.sy >= kStretchLevels || d.tx >= kShiftLevels ||
      d.ty >= kShiftLevels)
    throw ArgumentError("transform descriptor out of range: " + to_string(d));
  std::uint32_t i = d.dihedral;
  i = i * kStretchLevels + d.sy;
  i = i * kStretchLevels + d.sx;
  i = i * kShiftLevels + d.ty;
  i = i * kShiftLevels + d.tx;
  return i;
}

inline TransformDescriptor unpack(std::uint32_t index) {
  if (index >= kTransformCount) throw ArgumentError("transform index " + std::to_string(index) + " out of range");
  TransformDescriptor d;
  d.tx = static_cast<std::uint16_t>(index % kShiftLevels);
  index /= kShiftLevels;
  d.ty = static_cast<std::uint16_t>(index % kShiftLevels);
  index /= kShiftLevels;
  d.sx = static_cast<std::uint16_t>(index % kStretchLevels);
  index /= kStretchLevels;
  d.sy = static_cast<std::uint16_t>(index % kStretchLevels);
  index /= kStretchLevels;
  d.dihedral = static_cast<std::uint8_t>(index);
  return d;
}

/// Uniform draw over T (or T minus the identity).
inline TransformDescriptor sample_transform(Rng& rng, bool exclude_identity) {
  if (exclude_identity) return unpack(static_cast<std::uint32_t>(1 + rng.uniform_below(kTransformCount - 1)));
  return unpack(static_cast<std::uint32_t>(rng.uniform_below(kTransformCount)));
}

struct Extent {
  std::size_t h = 0, w = 0;
  bool operator==(const Extent&) const = default;
};

inline Extent dihedral_extent(std::uint8_t d, Extent e) { return dihedral_swaps_axes(d) ? Extent{e.w, e.h} : e; }

/// Canvas extent produced by apply() on an h x w image.
inline Extent transformed_extent(const TransformDescriptor& d, Extent e) {
  const Extent r = dihedral_extent(d.dihedral, e);
  return {r.h + d.sy + d.ty, r.w + d.sx + d.tx};
}

/// Original extent recovered from a canvas extent.
inline Extent original_extent(const TransformDescriptor& d, Extent canvas) {
  if (canvas.h <= static_cast<std::size_t>(d.sy + d.ty) || canvas.w <= static_cast<std::size_t>(d.sx + d.tx))
    throw ShapeError("canvas " + std::to_string(canvas.h) + "x" + std::to_string(canvas.w) + " too small for transform " + to_string(d));
  return dihedral_extent(d.dihedral, {canvas.h - d.sy - d.ty, canvas.w - d.sx - d.tx});
}

/// Pixel permutation of a dihedral element on an h x w plane.
inline IndexMap dihedral_map(std::uint8_t d, std::size_t h, std::size_t w) {
  const Extent o = dihedral_extent(d, {h, w});
  IndexMap m{h, w, o.h, o.w, std::vector<std::int64_t>(o.h * o.w)};
  for (std::size_t y = 0; y < o.h; ++y)
    for (std::size_t x = 0; x < o.w; ++x) {
      std::size_t sy = 0, sx = 0;
      switch (d) {
        case kIdentity: sy = y; sx = x; break;
        case kRot90: sy = x; sx = w - 1 - y; break;
        case kRot180: sy = h - 1 - y; sx = w - 1 - x; break;
        case kRot270: sy = h - 1 - x; sx = y; break;
        case kHFlip: sy = y; sx = w - 1 - x; break;
        case kVFlip: sy = h - 1 - y; sx = x; break;
        case kTranspose: sy = x; sx = y; break;
        case kAntiTranspose: sy = h - 1 - x; sx = w - 1 - y; break;
        default: throw ArgumentError("dihedral code " + std::to_string(d) + " out of range");
      }
      m.src[y * o.w + x] = static_cast<std::int64_t>(sy * w + sx);
    }
  return m;
}

namespace detail {

inline void spatial_extent(const Shape& s, std::size_t& h, std::size_t& w) {
  if (s.size() < 2) throw ShapeError("transform: image needs spatial axes, got " + shape_str(s));
  h = s[s.size() - 2];
  w = s[s.size() - 1];
}

// Tensor and Var share one code path through these overloads.
template <typename T>
Tensor<T> gather_any(const Tensor<T>& x, const std::shared_ptr<const IndexMap>& m) { return gather(x, *m); }
template <typename T>
Var<T> gather_any(Var<T> x, const std::shared_ptr<const IndexMap>& m) { return gather(x, m); }
template <typename T>
const Shape& shape_of(const Tensor<T>& x) { return x.shape; }
template <typename T>
const Shape& shape_of(const Var<T>& x) { return x.shape(); }

template <typename X>
X apply_impl(const TransformDescriptor& d, X x) {
  std::size_t h, w;
  spatial_extent(shape_of(x), h, w);
  if (d.dihedral != kIdentity) {
    x = gather_any(x, std::make_shared<const IndexMap>(dihedral_map(d.dihedral, h, w)));
    spatial_extent(shape_of(x), h, w);
  }
  if (d.sx || d.sy) {
    x = resize_bilinear(x, h + d.sy, w + d.sx);
    h += d.sy;
    w += d.sx;
  }
  if (d.tx || d.ty) x = gather_any(x, std::make_shared<const IndexMap>(pad_zero_map(h, w, d.ty, d.tx, 0, 0)));
  return x;
}

template <typename X>
X invert_impl(const TransformDescriptor& d, X x) {
  std::size_t h, w;
  spatial_extent(shape_of(x), h, w);
  const Extent orig = original_extent(d, {h, w});
  const Extent mid = dihedral_extent(d.dihedral, orig);
  if (d.tx || d.ty) x = crop(x, d.ty, d.tx, mid.h + d.sy, mid.w + d.sx);
  if (d.sx || d.sy) x = resize_bilinear(x, mid.h, mid.w);
  if (d.dihedral != kIdentity)
    x = gather_any(x, std::make_shared<const IndexMap>(dihedral_map(dihedral_inverse(d.dihedral), mid.h, mid.w)));
  return x;
}

}  // namespace detail

/// tau_theta(x) on [..., H, W] tensors.
template <typename T>
Tensor<T> apply(const TransformDescriptor& d, const Tensor<T>& x) {
  if (d.is_identity()) return x.detached();
  return detail::apply_impl(d, x.detached());
}

/// Inverse: crop the shift (exact), resize back (pseudo-inverse), undo the
/// dihedral (exact).
template <typename T>
Tensor<T> invert(const TransformDescriptor& d, const Tensor<T>& x) {
  if (d.is_identity()) return x.detached();
  return detail::invert_impl(d, x.detached());
}

/// Differentiable versions on graph values [N, C, H, W].
template <typename T>
Var<T> apply(const TransformDescriptor& d, Var<T> x) {
  return d.is_identity() ? x : detail::apply_impl(d, x);
}

template <typename T>
Var<T> invert(const TransformDescriptor& d, Var<T> x) {
  return d.is_identity() ? x : detail::invert_impl(d, x);
}

// Study-only transforms: rotation about the image centre and zero padding.

enum class StudyKind { rotate, zero_pad };

struct StudyTransform {
  StudyKind kind = StudyKind::rotate;
  double degrees = 0.0;  // rotate: [-10, 10]
  std::size_t pad = 0;   // zero_pad: [0, 32] on every side

  static StudyTransform rotate(double deg) {
    if (!(deg >= -10.0 && deg <= 10.0)) throw ArgumentError("rotation must lie in [-10, 10] degrees");
    return {StudyKind::rotate, deg, 0};
  }
  static StudyTransform zero_pad(std::size_t p) {
    if (p > 32) throw ArgumentError("zero padding must lie in [0, 32]");
    return {StudyKind::zero_pad, 0.0, p};
  }
};

inline std::string to_string(const StudyTransform& t) {
  if (t.kind == StudyKind::rotate) {
    const long tenths = std::lround(t.degrees * 10.0);
    return "rotate" + std::to_string(tenths / 10) + (tenths % 10 ? "." + std::to_string(std::labs(tenths % 10)) : "");
  }
  return "zero_pad" + std::to_string(t.pad);
}

/// Bilinear rotation of every [H,W] plane by `degrees` counter-clockwise
/// about the centre; samples falling outside the image read zero.
template <typename T>
Tensor<T> rotate_bilinear(const Tensor<T>& x, double degrees) {
  std::size_t h, w;
  detail::spatial_extent(x.shape, h, w);
  if (degrees == 0.0) return x.detached();
  const std::size_t planes = x.numel() / (h * w);
  const double th = degrees * std::numbers::pi / 180.0, c = std::cos(th), s = std::sin(th);
  const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);
  Tensor<T> out(x.shape);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xo = 0; xo < w; ++xo) {
      // Inverse map: rotate the output coordinate back by -theta. Image rows
      // grow downwards, so a counter-clockwise turn uses (x, -y) axes.
      const double dx = static_cast<double>(xo) - cx, dy = cy - static_cast<double>(y);
      const double sx = c * dx + s * dy + cx;
      const double sy = cy - (-s * dx + c * dy);
      const double fy = std::floor(sy), fx = std::floor(sx);
      const double ay = sy - fy, ax = sx - fx;
      const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
      for (std::size_t q = 0; q < planes; ++q) {
        const T* src = x.data.data() + q * h * w;
        auto at = [&](long yy, long xx) -> double {
          if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) return 0.0;
          return static_cast<double>(src[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)]);
        };
        const double v = (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) + ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
        out[q * h * w + y * w + xo] = static_cast<T>(v);
      }
    }
  return out;
}

template <typename T>
Tensor<T> apply_study(const StudyTransform& t, const Tensor<T>& x) {
  if (t.kind == StudyKind::rotate) return rotate_bilinear(x, t.degrees);
  std::size_t h, w;
  detail::spatial_extent(x.shape, h, w);
  return gather(x, pad_zero_map(h, w, t.pad, t.pad, t.pad, t.pad));
}

template <typename T>
Tensor<T> invert_study(const StudyTransform& t, const Tensor<T>& x) {
  if (t.kind == StudyKind::rotate) return rotate_bilinear(x, -t.degrees);
  std::size_t h, w;
  detail::spatial_extent(x.shape, h, w);
  if (h <= 2 * t.pad || w <= 2 * t.pad) throw ShapeError("invert_study: image smaller than its padding");
  return crop(x, t.pad, t.pad, h - 2 * t.pad, w - 2 * t.pad);
}

}  // namespace rdsc
