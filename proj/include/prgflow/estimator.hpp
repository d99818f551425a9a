#pragma once

#include <memory>
#include <string>

#include "prgflow/cascade.hpp"
#include "prgflow/fft_align.hpp"
#include "prgflow/image.hpp"
#include "prgflow/lk.hpp"
#include "prgflow/network.hpp"
#include "prgflow/warp.hpp"

namespace prgflow {

enum class EstimatorType { Identity, LucasKanade, Fft, Cnn };

struct EstimatorKind {
  EstimatorType type{EstimatorType::LucasKanade};
  LkOptions lk;
  FftOptions fft;
  std::shared_ptr<const ModelWeights<float>> weights;  // Cnn only

  static EstimatorKind identity() { return {EstimatorType::Identity, {}, {}, nullptr}; }
  static EstimatorKind lucas_kanade(const LkOptions& o = {}) { return {EstimatorType::LucasKanade, o, {}, nullptr}; }
  static EstimatorKind fft_baseline(const FftOptions& o = {}) { return {EstimatorType::Fft, {}, o, nullptr}; }
  static EstimatorKind cnn(std::shared_ptr<const ModelWeights<float>> w) { return {EstimatorType::Cnn, {}, {}, std::move(w)}; }

  void validate() const;
};

struct BlockOutput {
  WarpParamsd delta;  // in the block's model
  bool degenerate{false};
};

// Estimates one block increment from the pre-warped first patch and the
// second patch (both raw, same shape).
class BlockEstimator {
 public:
  virtual ~BlockEstimator() = default;
  virtual BlockOutput estimate(const ImagePlane& warped_p1, const ImagePlane& p2, std::size_t block,
                               WarpModel model) const = 0;
};

std::unique_ptr<BlockEstimator> make_block_estimator(const EstimatorKind& kind);

struct CascadeOptions {
  // Reject a block increment that raises the photometric residual of the
  // running estimate by more than guard_tol.
  bool guard{true};
  double guard_tol{1e-9};
};

struct CascadeResult {
  WarpParamsd h;  // pseudo-similarity (or similarity if any block is Sim)
  int degenerate_blocks{0};
  int rejected_blocks{0};
};

// h_acc starts at identity; each block sees stack(warp(p1, h_acc), p2) and its
// lifted increment is applied on the output side: h_acc <- lift(dh) o h_acc.
CascadeResult cascade_estimate(const ImagePlane& p1, const ImagePlane& p2, const CascadeConfig& cfg,
                               const BlockEstimator& est, const CascadeOptions& opts = {});
CascadeResult cascade_estimate(const ImagePlane& p1, const ImagePlane& p2, const CascadeConfig& cfg,
                               const EstimatorKind& kind, const CascadeOptions& opts = {});

// Accumulation domain for a cascade: Sim if any block is Sim, else PS.
WarpModel accumulation_model(const CascadeConfig& cfg);

// Network input for a pair: matches the channel count the weights expect
// (2 -> grayscale pair, 2 * C -> C-channel pair).
ImagePlane network_input(const ImagePlane& warped_p1, const ImagePlane& p2, int input_channels);

}  // namespace prgflow
