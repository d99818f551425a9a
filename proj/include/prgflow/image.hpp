#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "prgflow/warp.hpp"

namespace prgflow {

using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskPlane = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Planar multi-channel image with unit-interval intensities and a per-pixel
// validity mask. A cleared mask bit means the pixel was sampled from outside
// its source.
class ImagePlane {
 public:
  ImagePlane() = default;
  ImagePlane(int width, int height, int channels, double fill = 0.0);
  explicit ImagePlane(Plane gray);

  int width() const { return mask_.cols(); }
  int height() const { return mask_.rows(); }
  int channel_count() const { return static_cast<int>(channels_.size()); }
  bool empty() const { return channels_.empty(); }

  Plane& channel(int c) { return channels_[c]; }
  const Plane& channel(int c) const { return channels_[c]; }
  MaskPlane& mask() { return mask_; }
  const MaskPlane& mask() const { return mask_; }

  double& at(int c, int y, int x) { return channels_[c](y, x); }
  double at(int c, int y, int x) const { return channels_[c](y, x); }

  bool same_shape(const ImagePlane& o) const {
    return width() == o.width() && height() == o.height() && channel_count() == o.channel_count();
  }
  std::size_t valid_count() const { return static_cast<std::size_t>(mask_.count()); }

 private:
  std::vector<Plane> channels_;
  MaskPlane mask_;
};

// out(x) = bilinear(src, w^-1 x). The mask is cleared wherever a tap with
// non-zero weight falls outside src or on an invalid src pixel; such pixels
// still carry a border-replicated value.
ImagePlane sample_bilinear(const ImagePlane& src, const PixelWarpd& w);

// out(x) = bilinear(src, out_to_src x) for a width x height output; same mask
// rules as sample_bilinear.
ImagePlane resample(const ImagePlane& src, const Eigen::Matrix3d& out_to_src, int width, int height);

// Warp by parameters at the image's own size.
ImagePlane warp_image(const ImagePlane& src, const WarpParamsd& h);

// Derivative of warp_image(src, h) with respect to the parameter vector of h.
// `rows` holds one row per (channel, pixel) in channel-major, row-major order;
// rows of masked pixels are zero. The derivative is that of the bilinear
// interpolant itself, so it agrees with finite differences of warp_image.
struct WarpJacobian {
  ImagePlane warped;
  Eigen::MatrixXd rows;
};
WarpJacobian warp_jacobian(const ImagePlane& src, const WarpParamsd& h);

enum class InputMode { Raw, Gray, HighPass, Corner };
InputMode parse_input_mode(std::string_view name);
std::string_view input_mode_name(InputMode m);

// gray: luminance (0.299, 0.587, 0.114); highpass: src - gaussian(sigma 2) + 0.5;
// corner: Harris response (k = 0.04, sigma 1.5), min-max normalized.
ImagePlane preprocess(const ImagePlane& src, InputMode mode);

struct AugmentParams {
  double brightness{0.0};  // additive, [-0.2, 0.2]
  double contrast{1.0};    // multiplicative about 0.5, [0.8, 1.2]
  double hue{0.0};         // radians, [-0.1, 0.1]
  double saturation{1.0};  // [0.8, 1.2]
  double noise_sigma{0.0}; // [0, 0.05]
  std::uint64_t seed{0};

  static AugmentParams random(std::uint64_t seed);
  void validate() const;
};

ImagePlane augment(const ImagePlane& src, const AugmentParams& p);

// Per-pixel SSIM (11x11 gaussian window, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2).
// Window statistics only use pixels valid in both inputs.
ImagePlane ssim_map(const ImagePlane& a, const ImagePlane& b);

// --- building blocks shared with the losses and estimators -----------------

// Normalized 1-D gaussian taps, radius = ceil(3 sigma) unless given.
std::vector<double> gaussian_kernel(double sigma, int radius = -1);

// Separable convolution. With replicate_border the image edge is extended;
// otherwise samples outside the image contribute zero.
Plane convolve_separable(const Plane& in, const std::vector<double>& kernel, bool replicate_border);

// Bilinear sample of one plane at (px, py) with its spatial gradient. Returns
// false when a weighted tap is outside the plane or masked.
bool bilinear_sample(const Plane& src, const MaskPlane& mask, double px, double py, double& value,
                     double* gx = nullptr, double* gy = nullptr);

struct SsimStats {
  Plane ssim, mu_a, mu_b, var_a, var_b, cov, norm;
  MaskPlane valid;
};
SsimStats ssim_stats(const Plane& a, const Plane& b, const MaskPlane& mask);
// dL/da given dL/dssim(x) per pixel.
Plane ssim_backprop(const SsimStats& st, const Plane& a, const Plane& b, const MaskPlane& mask,
                    const Plane& upstream);

ImagePlane crop(const ImagePlane& src, int x0, int y0, int width, int height);
ImagePlane stack_channels(const ImagePlane& a, const ImagePlane& b);
ImagePlane to_gray(const ImagePlane& src);
// 2x2 box downsample; odd trailing rows/cols are dropped.
ImagePlane downsample_half(const ImagePlane& src);
// Joint validity of two equally sized images.
MaskPlane joint_mask(const ImagePlane& a, const ImagePlane& b);

}  // namespace prgflow
