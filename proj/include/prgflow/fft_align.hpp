#pragma once

#include "prgflow/image.hpp"
#include "prgflow/warp.hpp"

namespace prgflow {

struct FftShift {
  double dx{0.0};
  double dy{0.0};
  double confidence{0.0};  // height of the normalized correlation peak
  bool low_confidence{false};
};

struct FftOptions {
  bool hann_window{true};
  double min_confidence{0.02};
  // Scale search range for the log-polar stage.
  double min_scale{-0.5};
  double max_scale{1.0};
  int angle_samples{128};
  int radius_samples{256};
};

// Phase correlation: returns the pixel shift d with p2(x) ~ p1(x - d).
// Both images must be grayscale with power-of-two width and height.
FftShift fft_translation(const ImagePlane& p1, const ImagePlane& p2, const FftOptions& opts = {});

struct FftScaleResult {
  WarpParamsd h;  // pseudo-similarity
  double scale_confidence{0.0};
  FftShift shift;
  bool low_confidence{false};
};

// Scale from a 1-D correlation along log-radius of the log-polar magnitude
// spectra, then translation by phase correlation of the de-scaled pair.
FftScaleResult fft_scale_translation(const ImagePlane& p1, const ImagePlane& p2, const FftOptions& opts = {});

}  // namespace prgflow
