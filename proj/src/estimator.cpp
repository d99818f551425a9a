#include "prgflow/estimator.hpp"

#include <cmath>

#include "prgflow/errors.hpp"

namespace prgflow {
namespace {

ImagePlane gray_of(const ImagePlane& p) { return p.channel_count() == 1 ? p : to_gray(p); }

class IdentityEstimator final : public BlockEstimator {
 public:
  BlockOutput estimate(const ImagePlane&, const ImagePlane&, std::size_t, WarpModel model) const override {
    return {WarpParamsd::identity(model), false};
  }
};

class LkEstimator final : public BlockEstimator {
 public:
  explicit LkEstimator(LkOptions o) : opts_(o) {}
  BlockOutput estimate(const ImagePlane& warped_p1, const ImagePlane& p2, std::size_t,
                       WarpModel model) const override {
    const LkResult r = lk_refine(gray_of(warped_p1), gray_of(p2), WarpParamsd::identity(model), opts_);
    return {r.h, r.degenerate};
  }

 private:
  LkOptions opts_;
};

class FftEstimator final : public BlockEstimator {
 public:
  explicit FftEstimator(FftOptions o) : opts_(o) {}
  BlockOutput estimate(const ImagePlane& warped_p1, const ImagePlane& p2, std::size_t,
                       WarpModel model) const override {
    const ImagePlane a = gray_of(warped_p1), b = gray_of(p2);
    if (model == WarpModel::Translation) {
      const FftShift s = fft_translation(a, b, opts_);
      WarpParamsd d = WarpParamsd::identity(model);
      d.tx = s.dx / (a.width() / 2.0);
      d.ty = s.dy / (a.height() / 2.0);
      return {s.low_confidence ? WarpParamsd::identity(model) : d, s.low_confidence};
    }
    const FftScaleResult r = fft_scale_translation(a, b, opts_);
    if (r.low_confidence) return {WarpParamsd::identity(model), true};
    return {model == WarpModel::Similarity ? lift(r.h, model) : project(r.h, model), false};
  }

 private:
  FftOptions opts_;
};

class CnnEstimator final : public BlockEstimator {
 public:
  explicit CnnEstimator(std::shared_ptr<const ModelWeights<float>> w) : w_(std::move(w)) {}
  BlockOutput estimate(const ImagePlane& warped_p1, const ImagePlane& p2, std::size_t block,
                       WarpModel model) const override {
    if (block >= w_->blocks.size() || w_->blocks[block].model != model)
      throw ShapeError("cascade block does not match the network's block " + std::to_string(block));
    return {cnn_forward(*w_, block, network_input(warped_p1, p2, w_->input_channels)), false};
  }

 private:
  std::shared_ptr<const ModelWeights<float>> w_;
};

}  // namespace

void EstimatorKind::validate() const {
  if (lk.iterations < 1 || lk.levels < 1) throw DomainError("estimator: iterations and levels must be >= 1");
  if (!(lk.tol > 0)) throw DomainError("estimator: tol must be > 0");
  if (type == EstimatorType::Cnn && !weights) throw DataError("estimator: cnn requires weights");
}

std::unique_ptr<BlockEstimator> make_block_estimator(const EstimatorKind& kind) {
  kind.validate();
  switch (kind.type) {
    case EstimatorType::Identity: return std::make_unique<IdentityEstimator>();
    case EstimatorType::LucasKanade: return std::make_unique<LkEstimator>(kind.lk);
    case EstimatorType::Fft: return std::make_unique<FftEstimator>(kind.fft);
    case EstimatorType::Cnn: return std::make_unique<CnnEstimator>(kind.weights);
  }
  throw DomainError("unknown estimator type");
}

WarpModel accumulation_model(const CascadeConfig& cfg) {
  for (WarpModel m : cfg.blocks)
    if (m == WarpModel::Similarity) return WarpModel::Similarity;
  return WarpModel::PseudoSimilarity;
}

ImagePlane network_input(const ImagePlane& warped_p1, const ImagePlane& p2, int input_channels) {
  if (input_channels == 2 && warped_p1.channel_count() != 1)
    return stack_channels(to_gray(warped_p1), to_gray(p2));
  if (input_channels == 6 && warped_p1.channel_count() == 1) {
    const ImagePlane a = stack_channels(stack_channels(warped_p1, warped_p1), warped_p1);
    const ImagePlane b = stack_channels(stack_channels(p2, p2), p2);
    return stack_channels(a, b);
  }
  return stack_channels(warped_p1, p2);
}

CascadeResult cascade_estimate(const ImagePlane& p1, const ImagePlane& p2, const CascadeConfig& cfg,
                               const BlockEstimator& est, const CascadeOptions& opts) {
  cfg.validate();
  if (!p1.same_shape(p2)) throw ShapeError("cascade_estimate: patch shapes differ");
  const WarpModel acc_model = accumulation_model(cfg);
  CascadeResult res{WarpParamsd::identity(acc_model), 0, 0};
  const ImagePlane g1 = gray_of(p1), g2 = gray_of(p2);
  double current = opts.guard ? photometric_residual(g1, g2, res.h) : 0.0;
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    const WarpModel model = cfg.blocks[b];
    const ImagePlane warped = b == 0 ? p1 : warp_image(p1, res.h);
    const BlockOutput out = est.estimate(warped, p2, b, model);
    if (out.degenerate) {
      ++res.degenerate_blocks;
      continue;
    }
    WarpParamsd next;
    try {
      next = compose(lift(out.delta, acc_model), res.h);
    } catch (const DomainError&) {
      ++res.degenerate_blocks;
      continue;
    } catch (const DegenerateError&) {
      ++res.degenerate_blocks;
      continue;
    }
    if (opts.guard) {
      const double r = photometric_residual(g1, g2, next);
      if (!(r <= current + opts.guard_tol)) {
        ++res.rejected_blocks;
        continue;
      }
      current = r;
    }
    res.h = next;
  }
  return res;
}

CascadeResult cascade_estimate(const ImagePlane& p1, const ImagePlane& p2, const CascadeConfig& cfg,
                               const EstimatorKind& kind, const CascadeOptions& opts) {
  return cascade_estimate(p1, p2, cfg, *make_block_estimator(kind), opts);
}

}  // namespace prgflow
