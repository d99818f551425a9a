#include <doctest.h>

#include "prgflow/errors.hpp"
#include "prgflow/warp.hpp"
#include "support.hpp"

using namespace prgflow;

TEST_SUITE("warp") {

TEST_CASE("zero params give the identity matrix") {
  const PixelWarpd w = params_to_pixel_warp(WarpParamsd::identity(), 128, 128);
  CHECK((w.m - Eigen::Matrix3d::Identity()).norm() == doctest::Approx(0.0));
}

TEST_CASE("pixel mapping examples") {
  const auto t = params_to_pixel_warp(WarpParamsd::pseudo_similarity(0, 0.2, 0), 128, 128);
  const Eigen::Vector2d a = warp_point(t, Eigen::Vector2d(64, 64));
  CHECK(a.x() == doctest::Approx(76.8).epsilon(1e-12));
  CHECK(a.y() == doctest::Approx(64.0).epsilon(1e-12));

  const auto s = params_to_pixel_warp(WarpParamsd::pseudo_similarity(0.1, 0, 0), 128, 128);
  const Eigen::Vector2d b = warp_point(s, Eigen::Vector2d(128, 128));
  CHECK(b.x() == doctest::Approx(134.4).epsilon(1e-12));
  CHECK(b.y() == doctest::Approx(134.4).epsilon(1e-12));
  const Eigen::Vector2d c = warp_point(s, Eigen::Vector2d(64, 64));
  CHECK(c.x() == doctest::Approx(64.0));
  CHECK(c.y() == doctest::Approx(64.0));

  PixelWarpd id;
  id.width = id.height = 128;
  const Eigen::Vector2d d = warp_point(id, Eigen::Vector2d(10, 20));
  CHECK(d.x() == 10.0);
  CHECK(d.y() == 20.0);
}

TEST_CASE("warp_points maps every column") {
  const auto t = params_to_pixel_warp(WarpParamsd::pseudo_similarity(0.1, 0.2, -0.1), 128, 96);
  Eigen::Matrix2Xd pts(2, 3);
  pts << 0, 64, 128, 0, 48, 96;
  const Eigen::Matrix2Xd out = warp_points(t, pts);
  for (int i = 0; i < 3; ++i) CHECK((out.col(i) - warp_point(t, Eigen::Vector2d(pts.col(i)))).norm() < 1e-12);
}

TEST_CASE("non-invertible params are rejected") {
  CHECK_THROWS_AS(params_to_pixel_warp(WarpParamsd::pseudo_similarity(-1.0, 0, 0), 128, 128), DomainError);
  CHECK_THROWS_AS(invert(WarpParamsd::pseudo_similarity(-1.5, 0, 0)), DomainError);
  CHECK_THROWS_AS(params_to_pixel_warp(WarpParamsd::identity(), 1, 128), DomainError);
}

TEST_CASE("compose examples") {
  const auto h = WarpParamsd::pseudo_similarity(0.05, 0.1, -0.2);
  CHECK(testing::max_abs_diff(compose(h, WarpParamsd::identity()), h) < 1e-14);
  const auto a = compose(WarpParamsd::pseudo_similarity(0, 0.1, 0), WarpParamsd::pseudo_similarity(0, 0.05, 0));
  CHECK(a.tx == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(std::abs(a.s) < 1e-14);
  const auto b = compose(WarpParamsd::pseudo_similarity(0.1, 0, 0), WarpParamsd::pseudo_similarity(0.1, 0, 0));
  CHECK(b.s == doctest::Approx(0.21).epsilon(1e-12));
  CHECK_THROWS_AS(compose(WarpParamsd::identity(WarpModel::Translation), WarpParamsd::identity()), ShapeError);
}

TEST_CASE("invert examples") {
  CHECK(testing::max_abs_diff(invert(WarpParamsd::identity()), WarpParamsd::identity()) < 1e-15);
  const auto a = invert(WarpParamsd::pseudo_similarity(0, 0.3, -0.1));
  CHECK(a.tx == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(a.ty == doctest::Approx(0.1).epsilon(1e-12));
  const auto b = invert(WarpParamsd::pseudo_similarity(0.1, 0, 0));
  CHECK(b.s == doctest::Approx(1.0 / 1.1 - 1.0).epsilon(1e-12));
}

TEST_CASE("matrix_to_params examples") {
  PixelWarpd id;
  id.width = id.height = 128;
  CHECK(testing::max_abs_diff(matrix_to_params(id, WarpModel::PseudoSimilarity), WarpParamsd::identity()) < 1e-14);

  const auto h = WarpParamsd::pseudo_similarity(0.08, -0.12, 0.2);
  PixelWarpd w = params_to_pixel_warp(h, 128, 128);
  w.m(2, 0) += 1e-6;
  w.m(2, 1) -= 1e-6;
  CHECK(testing::max_abs_diff(matrix_to_params(w, WarpModel::PseudoSimilarity), h) < 1e-4);
}

TEST_CASE("perturbed projection agrees with a brute-force grid search") {
  const auto h = WarpParamsd::pseudo_similarity(0.05, 0.1, -0.05);
  PixelWarpd w = params_to_pixel_warp(h, 128, 128);
  w.m(2, 0) = 1e-4;
  const WarpParamsd p = matrix_to_params(w, WarpModel::PseudoSimilarity);
  Eigen::Matrix2Xd corners(2, 4);
  corners << 0, 128, 0, 128, 0, 0, 128, 128;
  auto cost = [&](const WarpParamsd& q) {
    const Eigen::Matrix2Xd a = warp_points(w, corners);
    const Eigen::Matrix2Xd b = warp_points(params_to_pixel_warp(q, 128, 128), corners);
    return (a - b).squaredNorm();
  };
  const double best = cost(p);
  const double step = 2e-4;
  for (int i = -2; i <= 2; ++i)
    for (int j = -2; j <= 2; ++j)
      for (int k = -2; k <= 2; ++k)
        CHECK(cost(WarpParamsd::pseudo_similarity(p.s + i * step, p.tx + j * step, p.ty + k * step)) >= best - 1e-12);
}

TEST_CASE("group laws hold over random draws") {
  std::mt19937_64 rng(7);
  int failures = 0;
  for (int n = 0; n < 2000; ++n) {
    for (WarpModel m : testing::kModels) {
      const auto a = testing::random_warp(rng, m), b = testing::random_warp(rng, m), c = testing::random_warp(rng, m);
      const auto lhs = compose(compose(a, b), c), rhs = compose(a, compose(b, c));
      if (testing::max_abs_diff(lhs, rhs) > 1e-12) ++failures;
      if (testing::max_abs_diff(compose(a, invert(a)), WarpParamsd::identity(m)) > 1e-12) ++failures;
      if (testing::max_abs_diff(compose(invert(a), a), WarpParamsd::identity(m)) > 1e-12) ++failures;
      const PixelWarpd pa = params_to_pixel_warp(a, 128, 96), pb = params_to_pixel_warp(b, 128, 96);
      const PixelWarpd pab = params_to_pixel_warp(compose(a, b), 128, 96);
      if ((pab.m - pa.m * pb.m).cwiseAbs().maxCoeff() > 1e-12 * pab.m.cwiseAbs().maxCoeff()) ++failures;
      if (testing::max_abs_diff(matrix_to_params(pa, m), a) > 1e-10) ++failures;
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("params_to_pixel_warp separates nearby params") {
  std::mt19937_64 rng(11);
  for (int n = 0; n < 200; ++n) {
    const auto a = testing::random_warp(rng, WarpModel::PseudoSimilarity);
    for (int k = 0; k < 3; ++k) {
      WarpParamsd b = a;
      (k == 0 ? b.s : k == 1 ? b.tx : b.ty) += 1e-6;
      const double d = (params_to_pixel_warp(a, 128, 128).m - params_to_pixel_warp(b, 128, 128).m).cwiseAbs().maxCoeff();
      CHECK(d >= 1e-7);
    }
  }
}

TEST_CASE("model nesting preserves values") {
  const auto t = WarpParamsd::from_vector(WarpModel::Translation, Eigen::Vector2d(0.1, -0.2));
  const auto t2 = project(lift(t, WarpModel::PseudoSimilarity), WarpModel::Translation);
  CHECK(std::abs(t2.tx - t.tx) < 1e-15);
  CHECK(std::abs(t2.ty - t.ty) < 1e-15);
  CHECK(t2.s == 0.0);
  const auto s = WarpParamsd::from_vector(WarpModel::Scale, Eigen::VectorXd::Constant(1, 0.15));
  const auto s2 = project(lift(s, WarpModel::PseudoSimilarity), WarpModel::Scale);
  CHECK(s2.s == doctest::Approx(s.s).epsilon(1e-15));
  CHECK_THROWS(lift(WarpParamsd::identity(), WarpModel::Translation));
}

TEST_CASE("dof matches model") {
  CHECK(dof(WarpModel::Translation) == 2);
  CHECK(dof(WarpModel::Scale) == 1);
  CHECK(dof(WarpModel::PseudoSimilarity) == 3);
  CHECK(dof(WarpModel::Similarity) == 4);
  for (WarpModel m : testing::kModels) CHECK(parse_model_tag(model_tag(m)) == m);
}

}
