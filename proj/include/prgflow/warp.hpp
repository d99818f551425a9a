#pragma once

// Warp algebra for the translation / scale / pseudo-similarity / similarity
// family. Parameters live in normalized image coordinates ([-1, 1] across the
// image); the pixel-domain matrix is M * S(h) * M^-1 with
//
//   M = [[W/2, 0, W/2], [0, H/2, H/2], [0, 0, 1]],
//   S(h) = [[(1+s)cos(theta), -(1+s)sin(theta), tx],
//           [(1+s)sin(theta),  (1+s)cos(theta), ty],
//           [0, 0, 1]].
//
// theta is only active for the similarity model.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "prgflow/errors.hpp"

namespace prgflow {

enum class WarpModel { Translation, Scale, PseudoSimilarity, Similarity };

constexpr int dof(WarpModel m) {
  switch (m) {
    case WarpModel::Translation: return 2;
    case WarpModel::Scale: return 1;
    case WarpModel::PseudoSimilarity: return 3;
    case WarpModel::Similarity: return 4;
  }
  return 0;
}

// Short tags used in configs and file headers: T, S, PS, Sim.
inline std::string_view model_tag(WarpModel m);
inline WarpModel parse_model_tag(std::string_view tag);

// True when every warp of `inner` is also a warp of `outer`.
constexpr bool model_contains(WarpModel outer, WarpModel inner) {
  if (outer == inner) return true;
  switch (outer) {
    case WarpModel::Similarity: return true;
    case WarpModel::PseudoSimilarity:
      return inner == WarpModel::Translation || inner == WarpModel::Scale;
    default: return false;
  }
}

template <typename Scalar>
struct WarpParams {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

  Scalar s{0};
  Scalar tx{0};
  Scalar ty{0};
  Scalar theta{0};
  WarpModel model{WarpModel::PseudoSimilarity};

  static WarpParams identity(WarpModel m = WarpModel::PseudoSimilarity) {
    WarpParams h;
    h.model = m;
    return h;
  }

  static WarpParams pseudo_similarity(Scalar s, Scalar tx, Scalar ty) {
    WarpParams h;
    h.s = s;
    h.tx = tx;
    h.ty = ty;
    return h;
  }

  // Entries in model order: T (tx, ty); S (s); PS (s, tx, ty);
  // Sim (s, tx, ty, theta).
  static WarpParams from_vector(WarpModel m, const Eigen::Ref<const Vector>& v) {
    if (v.size() != dof(m)) throw ShapeError("warp parameter vector has wrong length for model");
    WarpParams h = identity(m);
    switch (m) {
      case WarpModel::Translation:
        h.tx = v(0);
        h.ty = v(1);
        break;
      case WarpModel::Scale:
        h.s = v(0);
        break;
      case WarpModel::PseudoSimilarity:
        h.s = v(0);
        h.tx = v(1);
        h.ty = v(2);
        break;
      case WarpModel::Similarity:
        h.s = v(0);
        h.tx = v(1);
        h.ty = v(2);
        h.theta = v(3);
        break;
    }
    return h;
  }

  Vector vector() const {
    Vector v(dof(model));
    switch (model) {
      case WarpModel::Translation: v << tx, ty; break;
      case WarpModel::Scale: v << s; break;
      case WarpModel::PseudoSimilarity: v << s, tx, ty; break;
      case WarpModel::Similarity: v << s, tx, ty, theta; break;
    }
    return v;
  }

  bool invertible() const { return Scalar(1) + s > Scalar(0); }

  // S(h), the normalized-domain matrix.
  Matrix3 normalized_matrix() const {
    using std::cos;
    using std::sin;
    const Scalar k = Scalar(1) + s;
    const Scalar c = cos(theta), sn = sin(theta);
    Matrix3 m;
    m << k * c, -k * sn, tx, k * sn, k * c, ty, Scalar(0), Scalar(0), Scalar(1);
    return m;
  }

  // dS/dh_k for the k-th entry of vector().
  Matrix3 normalized_derivative(int k) const {
    using std::cos;
    using std::sin;
    const Scalar c = cos(theta), sn = sin(theta);
    Matrix3 d = Matrix3::Zero();
    auto ds = [&] { d << c, -sn, 0, sn, c, 0, 0, 0, 0; };
    auto dtx = [&] { d(0, 2) = 1; };
    auto dty = [&] { d(1, 2) = 1; };
    switch (model) {
      case WarpModel::Translation:
        (k == 0) ? dtx() : dty();
        break;
      case WarpModel::Scale:
        ds();
        break;
      case WarpModel::PseudoSimilarity:
      case WarpModel::Similarity:
        if (k == 0) ds();
        else if (k == 1) dtx();
        else if (k == 2) dty();
        else {
          const Scalar r = Scalar(1) + s;
          d << -r * sn, -r * c, 0, r * c, -r * sn, 0, 0, 0, 0;
        }
        break;
    }
    return d;
  }

  template <typename Other>
  WarpParams<Other> cast() const {
    WarpParams<Other> o;
    o.s = Other(s);
    o.tx = Other(tx);
    o.ty = Other(ty);
    o.theta = Other(theta);
    o.model = model;
    return o;
  }
};

using WarpParamsd = WarpParams<double>;

template <typename Scalar>
struct PixelWarp {
  Eigen::Matrix<Scalar, 3, 3> m = Eigen::Matrix<Scalar, 3, 3>::Identity();
  int width{0};
  int height{0};
};

using PixelWarpd = PixelWarp<double>;

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> normalization_matrix(int width, int height) {
  Eigen::Matrix<Scalar, 3, 3> m;
  const Scalar hw = Scalar(width) / 2, hh = Scalar(height) / 2;
  m << hw, 0, hw, 0, hh, hh, 0, 0, 1;
  return m;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> normalization_inverse(int width, int height) {
  Eigen::Matrix<Scalar, 3, 3> m;
  const Scalar iw = Scalar(2) / Scalar(width), ih = Scalar(2) / Scalar(height);
  m << iw, 0, -1, 0, ih, -1, 0, 0, 1;
  return m;
}

template <typename Scalar>
PixelWarp<Scalar> params_to_pixel_warp(const WarpParams<Scalar>& h, int width, int height) {
  if (!h.invertible()) throw DomainError("warp scale offset must satisfy 1 + s > 0");
  if (width < 2 || height < 2) throw DomainError("warp image size must be at least 2x2");
  PixelWarp<Scalar> w;
  w.m = normalization_matrix<Scalar>(width, height) * h.normalized_matrix() *
        normalization_inverse<Scalar>(width, height);
  w.width = width;
  w.height = height;
  return w;
}

namespace detail {

// Least-squares projection of a normalized-domain matrix onto `model`, weighting
// x residuals by half_w and y residuals by half_h (i.e. pixel units). The point
// set is the four image corners.
template <typename Scalar>
WarpParams<Scalar> project_normalized(const Eigen::Matrix<Scalar, 3, 3>& target, WarpModel model,
                                      Scalar half_w, Scalar half_h) {
  using std::abs;
  using std::atan2;
  using std::hypot;
  using std::isfinite;
  static constexpr std::array<std::array<int, 2>, 4> kCorners{{{-1, -1}, {1, -1}, {-1, 1}, {1, 1}}};
  const int n = dof(model);
  const int unknowns = model == WarpModel::Similarity ? 4 : n;
  Eigen::Matrix<Scalar, 8, Eigen::Dynamic> a(8, unknowns);
  Eigen::Matrix<Scalar, 8, 1> b;
  a.setZero();
  for (int i = 0; i < 4; ++i) {
    const Scalar ux = Scalar(kCorners[i][0]), uy = Scalar(kCorners[i][1]);
    const Eigen::Matrix<Scalar, 3, 1> q = target * Eigen::Matrix<Scalar, 3, 1>(ux, uy, Scalar(1));
    if (!(abs(q(2)) > Scalar(1e-12)) || !isfinite(q(0)) || !isfinite(q(1)))
      throw DegenerateError("warp maps an image corner to infinity");
    const Scalar vx = q(0) / q(2), vy = q(1) / q(2);
    const int rx = 2 * i, ry = 2 * i + 1;
    switch (model) {
      case WarpModel::Translation:
        a(rx, 0) = half_w;
        a(ry, 1) = half_h;
        b(rx) = half_w * (vx - ux);
        b(ry) = half_h * (vy - uy);
        break;
      case WarpModel::Scale:
        a(rx, 0) = half_w * ux;
        a(ry, 0) = half_h * uy;
        b(rx) = half_w * (vx - ux);
        b(ry) = half_h * (vy - uy);
        break;
      case WarpModel::PseudoSimilarity:
        a(rx, 0) = half_w * ux;
        a(rx, 1) = half_w;
        a(ry, 0) = half_h * uy;
        a(ry, 2) = half_h;
        b(rx) = half_w * (vx - ux);
        b(ry) = half_h * (vy - uy);
        break;
      case WarpModel::Similarity:
        // unknowns: (1+s)cos, (1+s)sin, tx, ty
        a(rx, 0) = half_w * ux;
        a(rx, 1) = -half_w * uy;
        a(rx, 2) = half_w;
        a(ry, 0) = half_h * uy;
        a(ry, 1) = half_h * ux;
        a(ry, 3) = half_h;
        b(rx) = half_w * vx;
        b(ry) = half_h * vy;
        break;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::Matrix<Scalar, 8, Eigen::Dynamic>> qr(a);
  if (qr.rank() < unknowns) throw DegenerateError("rank-deficient corner system in warp projection");
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x = qr.solve(b);
  WarpParams<Scalar> h;
  if (model == WarpModel::Similarity) {
    h = WarpParams<Scalar>::identity(model);
    h.s = hypot(x(0), x(1)) - Scalar(1);
    h.theta = atan2(x(1), x(0));
    h.tx = x(2);
    h.ty = x(3);
  } else {
    h = WarpParams<Scalar>::from_vector(model, x);
  }
  if (!h.invertible()) throw DomainError("projected warp is not invertible (1 + s <= 0)");
  return h;
}

}  // namespace detail

template <typename Scalar>
WarpParams<Scalar> matrix_to_params(const PixelWarp<Scalar>& w, WarpModel model) {
  using std::abs;
  if (w.width < 2 || w.height < 2) throw DomainError("warp image size must be at least 2x2");
  if (!(abs(w.m.determinant()) > Scalar(0))) throw DegenerateError("pixel warp is singular");
  const Eigen::Matrix<Scalar, 3, 3> normalized = normalization_inverse<Scalar>(w.width, w.height) * w.m *
                                                 normalization_matrix<Scalar>(w.width, w.height);
  return detail::project_normalized<Scalar>(normalized, model, Scalar(w.width) / 2, Scalar(w.height) / 2);
}

// compose(a, b) has matrix S(a) * S(b): b is applied first, then a.
template <typename Scalar>
WarpParams<Scalar> compose(const WarpParams<Scalar>& a, const WarpParams<Scalar>& b) {
  if (a.model != b.model) throw ShapeError("compose requires warps of the same model");
  if (!a.invertible() || !b.invertible()) throw DomainError("compose of non-invertible warp");
  return detail::project_normalized<Scalar>(a.normalized_matrix() * b.normalized_matrix(), a.model,
                                            Scalar(1), Scalar(1));
}

template <typename Scalar>
WarpParams<Scalar> invert(const WarpParams<Scalar>& h) {
  if (!h.invertible()) throw DomainError("cannot invert warp with 1 + s <= 0");
  return detail::project_normalized<Scalar>(h.normalized_matrix().inverse(), h.model, Scalar(1),
                                            Scalar(1));
}

// Least-squares restriction of h to another model (exact when h already lies
// in it).
template <typename Scalar>
WarpParams<Scalar> project(const WarpParams<Scalar>& h, WarpModel model) {
  if (!h.invertible()) throw DomainError("cannot project warp with 1 + s <= 0");
  return detail::project_normalized<Scalar>(h.normalized_matrix(), model, Scalar(1), Scalar(1));
}

// Re-tags h as a warp of a containing model (zero-padding missing entries).
template <typename Scalar>
WarpParams<Scalar> lift(const WarpParams<Scalar>& h, WarpModel target) {
  if (!model_contains(target, h.model))
    throw ShapeError(std::string("cannot lift ") + std::string(model_tag(h.model)) + " warp to " +
                     std::string(model_tag(target)));
  WarpParams<Scalar> out = h;
  out.model = target;
  return out;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> warp_point(const PixelWarp<Scalar>& w, const Eigen::Matrix<Scalar, 2, 1>& p) {
  const Eigen::Matrix<Scalar, 3, 1> q = w.m * p.homogeneous();
  return q.template head<2>() / q(2);
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, Eigen::Dynamic> warp_points(const PixelWarp<Scalar>& w,
                                                      const Eigen::Matrix<Scalar, 2, Eigen::Dynamic>& pts) {
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> q = w.m * pts.colwise().homogeneous();
  return q.colwise().hnormalized();
}

inline std::string_view model_tag(WarpModel m) {
  switch (m) {
    case WarpModel::Translation: return "T";
    case WarpModel::Scale: return "S";
    case WarpModel::PseudoSimilarity: return "PS";
    case WarpModel::Similarity: return "Sim";
  }
  return "?";
}

inline WarpModel parse_model_tag(std::string_view tag) {
  if (tag == "T") return WarpModel::Translation;
  if (tag == "S") return WarpModel::Scale;
  if (tag == "PS") return WarpModel::PseudoSimilarity;
  if (tag == "Sim") return WarpModel::Similarity;
  throw DataError("unknown warp model tag '" + std::string(tag) + "' (expected T, S, PS or Sim)");
}

}  // namespace prgflow
