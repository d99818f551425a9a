#include <doctest.h>

#include "prgflow/errors.hpp"
#include "prgflow/image.hpp"
#include "support.hpp"

using namespace prgflow;

namespace {

ImagePlane ramp(int w, int h) {
  ImagePlane img(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(0, y, x) = static_cast<double>(x) / w;
  return img;
}

}  // namespace

TEST_SUITE("image") {

TEST_CASE("identity warp reproduces the input") {
  const ImagePlane src = testing::texture(64, 3);
  const ImagePlane out = warp_image(src, WarpParamsd::identity());
  CHECK((out.channel(0) - src.channel(0)).abs().maxCoeff() < 1e-12);
  CHECK(out.valid_count() == 64u * 64u);
}

TEST_CASE("integer translation shifts pixels and masks the boundary") {
  const ImagePlane src = testing::texture(128, 5);
  const ImagePlane out = warp_image(src, WarpParamsd::pseudo_similarity(0, 2.0 / 64.0, 0));
  for (int y = 0; y < 128; ++y) {
    CHECK_FALSE(out.mask()(y, 0));
    CHECK_FALSE(out.mask()(y, 1));
    for (int x = 2; x < 128; ++x) REQUIRE(out.at(0, y, x) == doctest::Approx(src.at(0, y, x - 2)).epsilon(1e-12));
  }
}

TEST_CASE("constant images stay constant") {
  const ImagePlane c(50, 40, 3, 0.37);
  const ImagePlane out = warp_image(c, WarpParamsd::pseudo_similarity(0.1, 0.05, -0.1));
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 50; ++x)
        if (out.mask()(y, x)) REQUIRE(out.at(ch, y, x) == doctest::Approx(0.37));
}

TEST_CASE("warping by h composed with its inverse returns the input") {
  std::mt19937_64 rng(2);
  for (int n = 0; n < 50; ++n) {
    const WarpModel m = testing::kModels[n % 4];
    const ImagePlane src = testing::texture(96, 100 + n);
    const auto h = testing::random_warp(rng, m, 0.3);
    const ImagePlane back = warp_image(src, compose(h, invert(h)));
    double worst = 0;
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 96; ++x)
        if (back.mask()(y, x)) worst = std::max(worst, std::abs(back.at(0, y, x) - src.at(0, y, x)));
    CHECK(worst <= 2.0 / 255.0);
  }
}

TEST_CASE("warp then inverse warp stays close on smooth images") {
  std::mt19937_64 rng(3);
  for (int n = 0; n < 10; ++n) {
    const ImagePlane src = testing::texture(96, 200 + n, 1, 96.0);
    const auto h = testing::random_warp(rng, WarpModel::PseudoSimilarity, 0.15);
    const ImagePlane back = warp_image(warp_image(src, h), invert(h));
    double sum = 0;
    std::size_t count = 0;
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 96; ++x)
        if (back.mask()(y, x)) {
          sum += std::abs(back.at(0, y, x) - src.at(0, y, x));
          ++count;
        }
    CHECK(sum / count < 2.0 / 255.0);
  }
}

TEST_CASE("warp_jacobian of a constant image is zero") {
  const ImagePlane c(32, 32, 1, 0.5);
  const WarpJacobian j = warp_jacobian(c, WarpParamsd::pseudo_similarity(0.05, 0.1, 0));
  CHECK(j.rows.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("warp_jacobian on a horizontal ramp") {
  const int w = 64;
  const ImagePlane src = ramp(w, w);
  const WarpJacobian j = warp_jacobian(src, WarpParamsd::identity(WarpModel::Translation));
  // Backward sampling: out(x) = src(x - (W/2) tx), so d out / d tx = -(W/2) / W.
  for (int y = 4; y < w - 4; ++y)
    for (int x = 4; x < w - 4; ++x) REQUIRE(j.rows(y * w + x, 0) == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(j.rows.col(1).segment(4 * w, w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("warp_jacobian matches central finite differences") {
  std::mt19937_64 rng(4);
  int bad = 0;
  for (int n = 0; n < 100; ++n) {
    const WarpModel m = testing::kModels[n % 4];
    const ImagePlane src = testing::texture(24, 200 + n, n % 3 == 0 ? 3 : 1, 10.0);
    const auto h = testing::random_warp(rng, m, 0.1);
    const WarpJacobian j = warp_jacobian(src, h);
    const Eigen::VectorXd v = h.vector();
    const double eps = 1e-6;
    for (int k = 0; k < v.size(); ++k) {
      Eigen::VectorXd vp = v, vm = v;
      vp(k) += eps;
      vm(k) -= eps;
      const ImagePlane a = warp_image(src, WarpParamsd::from_vector(m, vp));
      const ImagePlane b = warp_image(src, WarpParamsd::from_vector(m, vm));
      double num = 0, den = 0;
      std::size_t row = 0;
      for (int c = 0; c < src.channel_count(); ++c)
        for (int y = 0; y < 24; ++y)
          for (int x = 0; x < 24; ++x, ++row) {
            if (!(a.mask()(y, x) && b.mask()(y, x) && j.warped.mask()(y, x))) continue;
            const double fd = (a.at(c, y, x) - b.at(c, y, x)) / (2 * eps);
            num += (fd - j.rows(row, k)) * (fd - j.rows(row, k));
            den += fd * fd;
          }
      if (den > 1e-12 && std::sqrt(num / den) > 1e-4) ++bad;
    }
  }
  CHECK(bad == 0);
}

TEST_CASE("preprocess examples") {
  ImagePlane rgb(20, 20, 3);
  rgb.channel(0).setConstant(0.3);
  rgb.channel(1).setConstant(0.3);
  rgb.channel(2).setConstant(0.3);
  const ImagePlane g = preprocess(rgb, InputMode::Gray);
  CHECK(g.channel_count() == 1);
  CHECK(g.channel(0).maxCoeff() == doctest::Approx(0.3));
  CHECK(g.channel(0).minCoeff() == doctest::Approx(0.3));
  const ImagePlane hp = preprocess(ImagePlane(20, 20, 1, 0.7), InputMode::HighPass);
  CHECK((hp.channel(0) - 0.5).abs().maxCoeff() < 1e-12);
  const ImagePlane cr = preprocess(ImagePlane(20, 20, 1, 0.7), InputMode::Corner);
  CHECK(cr.channel(0).abs().maxCoeff() == doctest::Approx(0.0));
  const ImagePlane tex = preprocess(testing::texture(40, 1), InputMode::Corner);
  CHECK(tex.channel(0).maxCoeff() == doctest::Approx(1.0));
  CHECK(tex.channel(0).minCoeff() == doctest::Approx(0.0));
  CHECK(parse_input_mode("highpass") == InputMode::HighPass);
  CHECK_THROWS_AS(parse_input_mode("sobel"), DataError);
}

TEST_CASE("augment examples") {
  const ImagePlane src = testing::texture(32, 9, 3);
  const ImagePlane same = augment(src, AugmentParams{});
  for (int c = 0; c < 3; ++c) CHECK((same.channel(c) - src.channel(c)).abs().maxCoeff() < 1e-12);

  AugmentParams b;
  b.brightness = 0.1;
  const ImagePlane bright = augment(ImagePlane(8, 8, 1, 0.5), b);
  CHECK(bright.channel(0).minCoeff() == doctest::Approx(0.6));
  CHECK(bright.channel(0).maxCoeff() == doctest::Approx(0.6));

  const AugmentParams r = AugmentParams::random(42);
  const ImagePlane x = augment(src, r), y = augment(src, r);
  for (int c = 0; c < 3; ++c) CHECK((x.channel(c) - y.channel(c)).abs().maxCoeff() == 0.0);
  for (int c = 0; c < 3; ++c) {
    CHECK(x.channel(c).minCoeff() >= 0.0);
    CHECK(x.channel(c).maxCoeff() <= 1.0);
  }
}

TEST_CASE("augment is monotone in brightness off the clamp") {
  const ImagePlane src = testing::texture(32, 13);
  AugmentParams lo, hi;
  lo.brightness = -0.05;
  hi.brightness = 0.05;
  const ImagePlane a = augment(src, lo), b = augment(src, hi);
  CHECK((b.channel(0) - a.channel(0)).minCoeff() >= 0.0);
}

TEST_CASE("ssim examples") {
  const ImagePlane a = testing::texture(40, 21);
  CHECK((ssim_map(a, a).channel(0) - 1.0).abs().maxCoeff() < 1e-9);
  const ImagePlane c1(30, 30, 1, 0.2), c2(30, 30, 1, 0.8);
  const double expect = (2 * 0.16 + 1e-4) / (0.68 + 1e-4);
  CHECK(ssim_map(c1, c2).channel(0).minCoeff() == doctest::Approx(expect).epsilon(1e-9));
  CHECK(ssim_map(c1, c2).channel(0).maxCoeff() == doctest::Approx(expect).epsilon(1e-9));
  const ImagePlane b = testing::texture(40, 22);
  CHECK((ssim_map(a, b).channel(0) - ssim_map(b, a).channel(0)).abs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(ssim_map(a, c1), ShapeError);
}

}
