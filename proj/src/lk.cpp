#include "prgflow/lk.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <vector>

#include "prgflow/errors.hpp"

namespace prgflow {
namespace {

struct TemplateLevel {
  ImagePlane tmpl;
  ImagePlane image;
  std::vector<Eigen::Vector2d> points;
  std::vector<double> values;
  Eigen::MatrixXd sd;  // steepest-descent rows, one per point
};

TemplateLevel prepare_level(const ImagePlane& tmpl, const ImagePlane& image, WarpModel model) {
  TemplateLevel lvl{tmpl, image, {}, {}, {}};
  const int w = tmpl.width(), h = tmpl.height(), n = dof(model);
  const Plane& t = tmpl.channel(0);
  const WarpParamsd zero = WarpParamsd::identity(model);
  const Eigen::Matrix3d norm = normalization_matrix<double>(w, h);
  const Eigen::Matrix3d norm_inv = normalization_inverse<double>(w, h);
  std::vector<Eigen::Matrix3d> dw(n);
  for (int k = 0; k < n; ++k) dw[k] = norm * zero.normalized_derivative(k) * norm_inv;
  std::vector<Eigen::RowVectorXd> rows;
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      if (!tmpl.mask()(y, x) || !tmpl.mask()(y, x - 1) || !tmpl.mask()(y, x + 1) || !tmpl.mask()(y - 1, x) ||
          !tmpl.mask()(y + 1, x))
        continue;
      const double gx = 0.5 * (t(y, x + 1) - t(y, x - 1));
      const double gy = 0.5 * (t(y + 1, x) - t(y - 1, x));
      Eigen::RowVectorXd row(n);
      for (int k = 0; k < n; ++k) {
        const Eigen::Vector3d d = dw[k] * Eigen::Vector3d(x, y, 1.0);
        row(k) = gx * d(0) + gy * d(1);
      }
      rows.push_back(row);
      lvl.points.emplace_back(x, y);
      lvl.values.push_back(t(y, x));
    }
  }
  lvl.sd.resize(static_cast<Eigen::Index>(rows.size()), n);
  for (std::size_t i = 0; i < rows.size(); ++i) lvl.sd.row(static_cast<Eigen::Index>(i)) = rows[i];
  return lvl;
}

bool is_degenerate(const Eigen::MatrixXd& sd, double eps) {
  if (sd.rows() < sd.cols() * 4) return true;
  const Eigen::MatrixXd hess = sd.transpose() * sd / static_cast<double>(sd.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
  return !(es.eigenvalues().minCoeff() > eps);
}

struct Residuals {
  Eigen::VectorXd r;
  std::vector<char> valid;
  double mean_abs{std::numeric_limits<double>::infinity()};
  std::size_t count{0};
};

Residuals residuals(const TemplateLevel& lvl, const WarpParamsd& h) {
  Residuals out;
  const PixelWarpd w = params_to_pixel_warp(h, lvl.tmpl.width(), lvl.tmpl.height());
  const Eigen::Index n = static_cast<Eigen::Index>(lvl.points.size());
  out.r = Eigen::VectorXd::Zero(n);
  out.valid.assign(n, 0);
  double sum = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d q = warp_point(w, lvl.points[i]);
    double v = 0;
    if (!bilinear_sample(lvl.image.channel(0), lvl.image.mask(), q(0), q(1), v)) continue;
    out.r(i) = v - lvl.values[i];
    out.valid[i] = 1;
    sum += std::abs(out.r(i));
    ++out.count;
  }
  if (out.count * 4 >= static_cast<std::size_t>(std::max<Eigen::Index>(n, 1))) out.mean_abs = sum / out.count;
  return out;
}

}  // namespace

double photometric_residual(const ImagePlane& p1, const ImagePlane& p2, const WarpParamsd& h) {
  const ImagePlane warped = warp_image(p1, h);
  const MaskPlane m = joint_mask(warped, p2);
  const auto n = m.count();
  if (n == 0) return std::numeric_limits<double>::infinity();
  return m.select((warped.channel(0) - p2.channel(0)).abs(), 0.0).sum() / static_cast<double>(n);
}

LkResult lk_refine(const ImagePlane& p1, const ImagePlane& p2, const WarpParamsd& h0, const LkOptions& opts) {
  if (!p1.same_shape(p2)) throw ShapeError("lk_refine: image shapes differ");
  if (p1.channel_count() != 1) throw ShapeError("lk_refine: grayscale images required");
  if (opts.iterations < 1 || opts.levels < 1 || !(opts.tol > 0)) throw DomainError("lk_refine: invalid options");
  const WarpModel model = h0.model;

  std::vector<ImagePlane> t_pyr{p1}, i_pyr{p2};
  for (int l = 1; l < opts.levels; ++l) {
    if (t_pyr.back().width() < 16 || t_pyr.back().height() < 16) break;
    t_pyr.push_back(downsample_half(t_pyr.back()));
    i_pyr.push_back(downsample_half(i_pyr.back()));
  }

  LkResult result{h0, false, false, std::numeric_limits<double>::infinity(), 0};
  WarpParamsd h = h0;
  for (int l = static_cast<int>(t_pyr.size()) - 1; l >= 0; --l) {
    const TemplateLevel lvl = prepare_level(t_pyr[l], i_pyr[l], model);
    const bool finest = l == 0;
    if (is_degenerate(lvl.sd, opts.degeneracy_eps)) {
      if (!finest) continue;
      result.h = h0;
      result.degenerate = true;
      result.converged = false;
      result.residual = residuals(lvl, h0).mean_abs;
      return result;
    }
    WarpParamsd best = h;
    double best_res = std::numeric_limits<double>::infinity();
    if (finest) {
      // h0 itself is a candidate so the result never regresses below it.
      const double r0 = residuals(lvl, h0).mean_abs;
      best = h0;
      best_res = r0;
    }
    bool converged = false;
    for (int it = 0; it < opts.iterations; ++it) {
      const Residuals res = residuals(lvl, h);
      if (finest && res.mean_abs < best_res) {
        best_res = res.mean_abs;
        best = h;
      }
      if (res.count < static_cast<std::size_t>(dof(model)) * 4) break;
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dof(model), dof(model));
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dof(model));
      for (Eigen::Index i = 0; i < res.r.size(); ++i) {
        if (!res.valid[i]) continue;
        double wt = 1.0;
        if (opts.huber) {
          const double a = std::abs(res.r(i));
          if (a > opts.huber_delta) wt = opts.huber_delta / a;
        }
        const auto row = lvl.sd.row(i);
        hess.noalias() += wt * row.transpose() * row;
        rhs.noalias() += wt * row.transpose() * res.r(i);
      }
      const Eigen::VectorXd delta = hess.ldlt().solve(rhs);
      if (!delta.allFinite()) break;
      ++result.iterations;
      const WarpParamsd d = WarpParamsd::from_vector(model, delta);
      if (!d.invertible()) break;
      WarpParamsd next;
      try {
        next = compose(h, invert(d));
      } catch (const std::exception&) {
        break;
      }
      h = next;
      if (delta.norm() < opts.tol) {
        converged = true;
        break;
      }
    }
    if (finest) {
      const double final_res = residuals(lvl, h).mean_abs;
      if (final_res <= best_res) {
        best_res = final_res;
        best = h;
      }
      result.h = best;
      result.residual = best_res;
      result.converged = converged;
    }
  }
  return result;
}

}  // namespace prgflow
