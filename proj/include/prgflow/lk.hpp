#pragma once

#include "prgflow/image.hpp"
#include "prgflow/warp.hpp"

namespace prgflow {

struct LkOptions {
  int levels{3};
  int iterations{50};  // per pyramid level
  double tol{1e-6};    // on ||delta h||
  bool huber{true};    // false: plain SSD
  double huber_delta{0.05};
  // Minimum eigenvalue of the per-pixel Gauss-Newton matrix below which the
  // pair is declared textureless.
  double degeneracy_eps{1e-10};
};

struct LkResult {
  WarpParamsd h;
  bool converged{false};
  bool degenerate{false};
  double residual{0.0};  // mean |r| at the finest level for the returned h
  int iterations{0};
};

// Inverse-compositional Gauss-Newton alignment: finds h (in h0's model) such
// that warp_image(p1, h) ~ p2. p1 is the template; p2 is sampled at w(h) y.
// Coarse-to-fine over a 2x pyramid; the normalized parameterization is
// resolution independent so h carries across levels unchanged.
LkResult lk_refine(const ImagePlane& p1, const ImagePlane& p2, const WarpParamsd& h0, const LkOptions& opts = {});

// Mean |warp_image(p1, h) - p2| over the joint valid mask (first channel).
double photometric_residual(const ImagePlane& p1, const ImagePlane& p2, const WarpParamsd& h);

}  // namespace prgflow
