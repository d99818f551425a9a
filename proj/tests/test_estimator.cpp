#include <doctest.h>

#include "prgflow/bench.hpp"
#include "prgflow/errors.hpp"
#include "prgflow/estimator.hpp"
#include "prgflow/fft_align.hpp"
#include "prgflow/lk.hpp"
#include "prgflow/network.hpp"
#include "support.hpp"

using namespace prgflow;

namespace {

ImagePlane circular_shift(const ImagePlane& src, int dx, int dy) {
  ImagePlane out(src.width(), src.height(), src.channel_count());
  const int w = src.width(), h = src.height();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(0, y, x) = src.at(0, ((y - dy) % h + h) % h, ((x - dx) % w + w) % w);
  return out;
}

ImagePlane pixel_shift(const ImagePlane& src, double dx, double dy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = -dx;
  m(1, 2) = -dy;
  return resample(src, m, src.width(), src.height());
}

// Exact residual of a known truth, tracking the running estimate itself.
class OracleBlock final : public BlockEstimator {
 public:
  explicit OracleBlock(const WarpParamsd& truth) : truth_(truth) {}
  BlockOutput estimate(const ImagePlane&, const ImagePlane&, std::size_t, WarpModel model) const override {
    const WarpParamsd d = project(compose(truth_, invert(acc_)), model);
    acc_ = compose(lift(d, WarpModel::PseudoSimilarity), acc_);
    return {d, false};
  }

 private:
  WarpParamsd truth_;
  mutable WarpParamsd acc_{WarpParamsd::identity()};
};

// Direct stride-2, pad-1 convolution with leaky-ReLU, then dense.
Eigen::VectorXd naive_block(const BlockWeights<double>& b, const ImagePlane& stack) {
  int size = stack.width();
  std::vector<Eigen::MatrixXd> act;
  for (int c = 0; c < stack.channel_count(); ++c) act.push_back(stack.channel(c).matrix().array() - 0.5);
  for (const auto& conv : b.convs) {
    const int out_size = (size - 1) / 2 + 1;
    std::vector<Eigen::MatrixXd> next(conv.out_channels(), Eigen::MatrixXd::Zero(out_size, out_size));
    for (int co = 0; co < conv.out_channels(); ++co)
      for (int oy = 0; oy < out_size; ++oy)
        for (int ox = 0; ox < out_size; ++ox) {
          double acc = conv.bias(co);
          for (int ci = 0; ci < conv.in_channels(); ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = 2 * oy + ky - 1, ix = 2 * ox + kx - 1;
                if (iy < 0 || ix < 0 || iy >= size || ix >= size) continue;
                acc += conv.kernel(co, (ci * 3 + ky) * 3 + kx) * act[ci](iy, ix);
              }
          next[co](oy, ox) = acc > 0 ? acc : 0.1 * acc;
        }
    act = std::move(next);
    size = out_size;
  }
  Eigen::VectorXd flat(static_cast<Eigen::Index>(act.size()) * size * size);
  Eigen::Index k = 0;
  for (const auto& a : act)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) flat(k++) = a(y, x);
  return b.dense.weight * flat + b.dense.bias;
}

}  // namespace

TEST_SUITE("estimator") {

TEST_CASE("lk identity pair") {
  const ImagePlane p = testing::texture(128, 1);
  const LkResult r = lk_refine(p, p, WarpParamsd::identity());
  CHECK(testing::max_abs_diff(r.h, WarpParamsd::identity()) < 1e-9);
  CHECK(r.residual < 1e-9);
  CHECK_FALSE(r.degenerate);
}

TEST_CASE("lk recovers a 2 px shift") {
  const ImagePlane p1 = testing::texture(128, 2);
  const ImagePlane p2 = warp_image(p1, WarpParamsd::pseudo_similarity(0, 2.0 * 2.0 / 128.0, 0));
  const LkResult r = lk_refine(p1, p2, WarpParamsd::identity());
  CHECK(std::abs(r.h.tx * 64 - 2.0) < 0.1);
  CHECK(std::abs(r.h.ty * 64) < 0.1);
}

TEST_CASE("lk flags textureless input") {
  const ImagePlane c(64, 64, 1, 0.4);
  const auto h0 = WarpParamsd::pseudo_similarity(0.01, 0.02, 0.03);
  const LkResult r = lk_refine(c, c, h0);
  CHECK(r.degenerate);
  CHECK_FALSE(r.converged);
  CHECK(testing::max_abs_diff(r.h, h0) == 0.0);
}

TEST_CASE("lk is translation equivariant") {
  const ImagePlane big = testing::texture(200, 3);
  const ImagePlane moved = pixel_shift(big, 3.3, -1.7);
  const LkResult a = lk_refine(crop(big, 30, 30, 128, 128), crop(moved, 30, 30, 128, 128), WarpParamsd::identity());
  const LkResult b = lk_refine(crop(big, 37, 25, 128, 128), crop(moved, 37, 25, 128, 128), WarpParamsd::identity());
  CHECK(std::abs(a.h.tx - b.h.tx) * 64 < 0.05);
  CHECK(std::abs(a.h.ty - b.h.ty) * 64 < 0.05);
  CHECK(std::abs(a.h.tx * 64 - 3.3) < 0.1);
}

TEST_CASE("fft translation examples") {
  const ImagePlane p = testing::texture(128, 4);
  const FftShift z = fft_translation(p, p);
  CHECK(std::abs(z.dx) < 1e-9);
  CHECK(std::abs(z.dy) < 1e-9);
  const FftShift s = fft_translation(p, circular_shift(p, 5, -3));
  CHECK(s.dx == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(s.dy == doctest::Approx(-3.0).epsilon(1e-9));
  const FftShift f = fft_translation(p, pixel_shift(p, 2.5, 0));
  CHECK(std::abs(f.dx - 2.5) < 0.5);
  CHECK(std::abs(f.dy) < 0.5);
  const FftShift flat = fft_translation(ImagePlane(64, 64, 1, 0.5), ImagePlane(64, 64, 1, 0.5));
  CHECK(flat.low_confidence);
}

TEST_CASE("fft translation is exact on random circular shifts") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> u(-40, 40);
  int bad = 0;
  for (int n = 0; n < 100; ++n) {
    const ImagePlane p = testing::texture(128, 600 + n);
    const int dx = u(rng), dy = u(rng);
    const FftShift s = fft_translation(p, circular_shift(p, dx, dy));
    if (std::abs(s.dx - dx) > 1e-6 || std::abs(s.dy - dy) > 1e-6) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("fft scale examples") {
  const ImagePlane big = testing::texture(300, 5);
  const ImagePlane p1 = crop(big, 86, 86, 128, 128);
  const FftScaleResult id = fft_scale_translation(p1, p1);
  CHECK(std::abs(id.h.s) < 0.005);
  CHECK(std::abs(id.h.tx * 64) < 0.5);
  CHECK(std::abs(id.h.ty * 64) < 0.5);

  const ImagePlane zoom = crop(warp_image(big, WarpParamsd::pseudo_similarity(0.10, 0, 0)), 86, 86, 128, 128);
  const FftScaleResult z = fft_scale_translation(p1, zoom);
  CHECK(z.h.s == doctest::Approx(0.10).epsilon(0.1));
  CHECK(std::abs(z.h.s - 0.10) <= 0.01);

  const ImagePlane shifted = crop(pixel_shift(big, 4, -2), 86, 86, 128, 128);
  const FftScaleResult sh = fft_scale_translation(p1, shifted);
  CHECK(std::abs(sh.h.s) < 0.01);
  CHECK(std::abs(sh.h.tx * 64 - 4) < 0.5);
  CHECK(std::abs(sh.h.ty * 64 + 2) < 0.5);
}

TEST_CASE("cnn forward contracts") {
  const CascadeConfig cfg = CascadeConfig::parse("PS*1,T*1,S*1");
  const auto zero = zero_model<float>(cfg, 2, 32, {4, 4});
  const ImagePlane stack = stack_channels(testing::texture(32, 1), testing::texture(32, 2));
  CHECK(testing::max_abs_diff(cnn_forward(zero, 0, stack), WarpParamsd::identity()) == 0.0);
  const auto w = init_model<float>(cfg, 2, 32, {4, 4}, 3);
  CHECK(cnn_forward(w, 0, stack).vector().size() == 3);
  CHECK(cnn_forward(w, 1, stack).vector().size() == 2);
  CHECK(cnn_forward(w, 2, stack).vector().size() == 1);
  CHECK_THROWS_AS(cnn_forward(w, 0, testing::texture(32, 1)), ShapeError);
}

TEST_CASE("cnn forward matches naive convolution") {
  const CascadeConfig cfg = CascadeConfig::parse("PS*1");
  const auto wd = init_model<double>(cfg, 2, 24, {3, 5, 4}, 99);
  const auto wf = wd.cast<float>();
  const ImagePlane stack = stack_channels(testing::texture(24, 7), testing::texture(24, 8));
  const Eigen::VectorXd ref = naive_block(wd.blocks[0], stack);
  const Eigen::VectorXd got = cnn_forward(wf, 0, stack).vector();
  CHECK((ref - got).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((ref - cnn_forward(wd, 0, stack).vector()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("oracle cascade reaches the truth after the first block") {
  const ImagePlane p = testing::texture(64, 9);
  const auto truth = WarpParamsd::pseudo_similarity(0.1, -0.15, 0.05);
  CascadeOptions o;
  o.guard = false;
  OracleBlock oracle(truth);
  const CascadeResult r = cascade_estimate(p, p, CascadeConfig::parse("PS*3"), oracle, o);
  CHECK(testing::max_abs_diff(r.h, truth) < 1e-12);
  OracleBlock split(truth);
  const CascadeResult q = cascade_estimate(p, p, CascadeConfig::parse("T*2,S*2,PS*1"), split, o);
  CHECK(testing::max_abs_diff(q.h, truth) < 1e-10);
}

TEST_CASE("single PS block equals the bare estimator") {
  const ImagePlane p1 = testing::texture(128, 10);
  const ImagePlane p2 = warp_image(p1, WarpParamsd::pseudo_similarity(0.05, 0.1, -0.05));
  const CascadeResult r = cascade_estimate(p1, p2, CascadeConfig::single(WarpModel::PseudoSimilarity),
                                           EstimatorKind::lucas_kanade());
  const LkResult l = lk_refine(p1, p2, WarpParamsd::identity());
  CHECK(testing::max_abs_diff(r.h, l.h) < 1e-12);
}

TEST_CASE("cascade guard never worsens the residual") {
  std::mt19937_64 rng(12);
  const WarpRange range = WarpRange::gamma1();
  for (int n = 0; n < 20; ++n) {
    const SyntheticPair pr = gen_pair(testing::texture(320, 700 + n), range, 800 + n);
    for (const EstimatorKind& k : {EstimatorKind::lucas_kanade(), EstimatorKind::fft_baseline()}) {
      const CascadeResult r = cascade_estimate(pr.p1, pr.p2, CascadeConfig::parse("T*2,S*2"), k);
      CHECK(photometric_residual(pr.p1, pr.p2, r.h) <=
            photometric_residual(pr.p1, pr.p2, WarpParamsd::identity()) + 1e-9);
    }
  }
}

TEST_CASE("T*2,S*2 LK cascade beats single-block LK" * doctest::may_fail()) {
  const ProceduralCorpus corpus(40, 320, 5, 1);
  const WarpRange range = WarpRange::gamma1();
  std::vector<WarpParamsd> split, single, truths;
  for (std::size_t i = 0; i < 40; ++i) {
    const SyntheticPair p = benchmark_pair(corpus, range, 3, i);
    split.push_back(cascade_estimate(p.p1, p.p2, CascadeConfig::parse("T*2,S*2"), EstimatorKind::lucas_kanade()).h);
    single.push_back(cascade_estimate(p.p1, p.p2, CascadeConfig::parse("PS*1"), EstimatorKind::lucas_kanade()).h);
    truths.push_back(p.truth);
  }
  const MetricErrors a = metric_errors(split, truths, 128, 128), b = metric_errors(single, truths, 128, 128);
  MESSAGE("T*2,S*2: " << a.e_scale << " / " << a.e_trans << "  PS*1: " << b.e_scale << " / " << b.e_trans);
  CHECK(a.e_scale + a.e_trans < b.e_scale + b.e_trans);
}

TEST_CASE("cascade config grammar") {
  const CascadeConfig c = CascadeConfig::parse("T*2,S*2");
  CHECK(c.size() == 4);
  CHECK(c.to_string() == "T*2,S*2");
  CHECK(CascadeConfig::parse(c.to_string()) == c);
  CHECK_THROWS_AS(CascadeConfig::parse(""), DataError);
  CHECK_THROWS_AS(CascadeConfig::parse("Q*2"), DataError);
}

}
