#include "prgflow/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prgflow/errors.hpp"

namespace prgflow {

ImagePlane::ImagePlane(int width, int height, int channels, double fill) {
  if (width < 0 || height < 0 || channels < 1) throw ShapeError("invalid image dimensions");
  channels_.assign(channels, Plane::Constant(height, width, fill));
  mask_ = MaskPlane::Constant(height, width, true);
}

ImagePlane::ImagePlane(Plane gray) {
  mask_ = MaskPlane::Constant(gray.rows(), gray.cols(), true);
  channels_.push_back(std::move(gray));
}

namespace {

constexpr double kSnap = 1e-9;

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < kSnap ? r : v;
}

}  // namespace

bool bilinear_sample(const Plane& src, const MaskPlane& mask, double px, double py, double& value,
                     double* gx, double* gy) {
  const int w = static_cast<int>(src.cols()), h = static_cast<int>(src.rows());
  px = snap(px);
  py = snap(py);
  const double flx = std::floor(px), fly = std::floor(py);
  const double fx = px - flx, fy = py - fly;
  const int x0 = static_cast<int>(flx), y0 = static_cast<int>(fly);
  const int x1 = x0 + 1, y1 = y0 + 1;
  bool valid = true;
  auto tap = [&](int x, int y, bool weighted) {
    const bool inside = x >= 0 && x < w && y >= 0 && y < h;
    if (weighted && (!inside || !mask(y, x))) valid = false;
    return src(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1));
  };
  const bool wx1 = fx > 0.0, wy1 = fy > 0.0;
  const double i00 = tap(x0, y0, true);
  const double i10 = tap(x1, y0, wx1);
  const double i01 = tap(x0, y1, wy1);
  const double i11 = tap(x1, y1, wx1 && wy1);
  value = (1 - fy) * ((1 - fx) * i00 + fx * i10) + fy * ((1 - fx) * i01 + fx * i11);
  if (gx) *gx = (1 - fy) * (i10 - i00) + fy * (i11 - i01);
  if (gy) *gy = (1 - fx) * (i01 - i00) + fx * (i11 - i10);
  return valid;
}

ImagePlane resample(const ImagePlane& src, const Eigen::Matrix3d& out_to_src, int width, int height) {
  const int nc = src.channel_count();
  ImagePlane out(width, height, nc);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d p = out_to_src * Eigen::Vector3d(x, y, 1.0);
      const double px = p(0) / p(2), py = p(1) / p(2);
      bool valid = true;
      for (int c = 0; c < nc; ++c) {
        double v = 0;
        valid = bilinear_sample(src.channel(c), src.mask(), px, py, v) && valid;
        out.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
      out.mask()(y, x) = valid;
    }
  }
  return out;
}

ImagePlane sample_bilinear(const ImagePlane& src, const PixelWarpd& w) {
  return resample(src, w.m.inverse(), src.width(), src.height());
}

ImagePlane warp_image(const ImagePlane& src, const WarpParamsd& h) {
  return sample_bilinear(src, params_to_pixel_warp(h, src.width(), src.height()));
}

WarpJacobian warp_jacobian(const ImagePlane& src, const WarpParamsd& h) {
  const int width = src.width(), height = src.height(), nc = src.channel_count();
  const int n = dof(h.model);
  const PixelWarpd w = params_to_pixel_warp(h, width, height);
  const Eigen::Matrix3d inv = w.m.inverse();
  const Eigen::Matrix3d norm = normalization_matrix<double>(width, height);
  const Eigen::Matrix3d norm_inv = normalization_inverse<double>(width, height);
  // dp/dh_k = -w^-1 (dw/dh_k) p, with p = w^-1 x (affine, so no dehomogenization term).
  std::vector<Eigen::Matrix3d> dp(n);
  for (int k = 0; k < n; ++k) dp[k] = -inv * (norm * h.normalized_derivative(k) * norm_inv);

  WarpJacobian out{ImagePlane(width, height, nc), Eigen::MatrixXd::Zero(Eigen::Index(nc) * width * height, n)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d p = inv * Eigen::Vector3d(x, y, 1.0);
      bool valid = true;
      std::vector<double> gxs(nc), gys(nc);
      for (int c = 0; c < nc; ++c) {
        double v = 0;
        valid = bilinear_sample(src.channel(c), src.mask(), p(0), p(1), v, &gxs[c], &gys[c]) && valid;
        out.warped.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
      out.warped.mask()(y, x) = valid;
      if (!valid) continue;
      for (int k = 0; k < n; ++k) {
        const Eigen::Vector3d d = dp[k] * p;
        for (int c = 0; c < nc; ++c)
          out.rows(Eigen::Index(c) * width * height + Eigen::Index(y) * width + x, k) =
              gxs[c] * d(0) + gys[c] * d(1);
      }
    }
  }
  return out;
}

InputMode parse_input_mode(std::string_view name) {
  if (name == "raw") return InputMode::Raw;
  if (name == "gray") return InputMode::Gray;
  if (name == "highpass") return InputMode::HighPass;
  if (name == "corner") return InputMode::Corner;
  throw DataError("unknown input mode '" + std::string(name) + "' (expected raw, gray, highpass, corner)");
}

std::string_view input_mode_name(InputMode m) {
  switch (m) {
    case InputMode::Raw: return "raw";
    case InputMode::Gray: return "gray";
    case InputMode::HighPass: return "highpass";
    case InputMode::Corner: return "corner";
  }
  return "?";
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
  if (radius < 0) radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

Plane convolve_separable(const Plane& in, const std::vector<double>& kernel, bool replicate_border) {
  const int h = static_cast<int>(in.rows()), w = static_cast<int>(in.cols());
  const int r = static_cast<int>(kernel.size() / 2);
  Plane tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -r; k <= r; ++k) {
        int xx = x + k;
        if (xx < 0 || xx >= w) {
          if (!replicate_border) continue;
          xx = std::clamp(xx, 0, w - 1);
        }
        acc += kernel[k + r] * in(y, xx);
      }
      tmp(y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -r; k <= r; ++k) {
        int yy = y + k;
        if (yy < 0 || yy >= h) {
          if (!replicate_border) continue;
          yy = std::clamp(yy, 0, h - 1);
        }
        acc += kernel[k + r] * tmp(yy, x);
      }
      out(y, x) = acc;
    }
  }
  return out;
}

namespace {

Plane luminance(const ImagePlane& src) {
  if (src.channel_count() == 1) return src.channel(0);
  if (src.channel_count() != 3) throw ShapeError("grayscale conversion needs 1 or 3 channels");
  return 0.299 * src.channel(0) + 0.587 * src.channel(1) + 0.114 * src.channel(2);
}

Plane harris(const Plane& g) {
  const int h = static_cast<int>(g.rows()), w = static_cast<int>(g.cols());
  Plane ix(h, w), iy(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      ix(y, x) = 0.5 * (g(y, std::min(x + 1, w - 1)) - g(y, std::max(x - 1, 0)));
      iy(y, x) = 0.5 * (g(std::min(y + 1, h - 1), x) - g(std::max(y - 1, 0), x));
    }
  }
  const auto k = gaussian_kernel(1.5);
  const Plane sxx = convolve_separable(ix * ix, k, true);
  const Plane syy = convolve_separable(iy * iy, k, true);
  const Plane sxy = convolve_separable(ix * iy, k, true);
  const Plane tr = sxx + syy;
  Plane r = sxx * syy - sxy * sxy - 0.04 * tr * tr;
  const double lo = r.minCoeff(), hi = r.maxCoeff();
  if (!(hi - lo > 1e-15)) return Plane::Zero(h, w);
  return (r - lo) / (hi - lo);
}

}  // namespace

ImagePlane preprocess(const ImagePlane& src, InputMode mode) {
  switch (mode) {
    case InputMode::Raw:
      return src;
    case InputMode::Gray: {
      ImagePlane out(luminance(src).cwiseMax(0.0).cwiseMin(1.0));
      out.mask() = src.mask();
      return out;
    }
    case InputMode::HighPass: {
      ImagePlane out = src;
      const auto k = gaussian_kernel(2.0);
      for (int c = 0; c < src.channel_count(); ++c)
        out.channel(c) = (src.channel(c) - convolve_separable(src.channel(c), k, true) + 0.5).cwiseMax(0.0).cwiseMin(1.0);
      return out;
    }
    case InputMode::Corner: {
      ImagePlane out(harris(luminance(src)));
      out.mask() = src.mask();
      return out;
    }
  }
  return src;
}

AugmentParams AugmentParams::random(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AugmentParams p;
  p.brightness = 0.2 * u(rng);
  p.contrast = 1.0 + 0.2 * u(rng);
  p.hue = 0.1 * u(rng);
  p.saturation = 1.0 + 0.2 * u(rng);
  p.noise_sigma = 0.025 * (u(rng) + 1.0);
  p.seed = rng();
  return p;
}

void AugmentParams::validate() const {
  auto check = [](double v, double lo, double hi, const char* name) {
    if (!(v >= lo && v <= hi))
      throw DomainError(std::string("augment ") + name + " out of range [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
  };
  check(brightness, -0.2, 0.2, "brightness");
  check(contrast, 0.8, 1.2, "contrast");
  check(hue, -0.1, 0.1, "hue");
  check(saturation, 0.8, 1.2, "saturation");
  check(noise_sigma, 0.0, 0.05, "noise_sigma");
}

ImagePlane augment(const ImagePlane& src, const AugmentParams& p) {
  p.validate();
  ImagePlane out = src;
  for (int c = 0; c < out.channel_count(); ++c) out.channel(c) = (out.channel(c) - 0.5) * p.contrast + 0.5 + p.brightness;
  if (out.channel_count() == 3 && (p.hue != 0.0 || p.saturation != 1.0)) {
    // Hue rotation and saturation scaling of the chroma plane in YIQ space.
    Eigen::Matrix3d to_yiq;
    to_yiq << 0.299, 0.587, 0.114, 0.596, -0.274, -0.322, 0.211, -0.523, 0.312;
    const double c = std::cos(p.hue) * p.saturation, s = std::sin(p.hue) * p.saturation;
    Eigen::Matrix3d chroma;
    chroma << 1, 0, 0, 0, c, -s, 0, s, c;
    const Eigen::Matrix3d t = to_yiq.inverse() * chroma * to_yiq;
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        const Eigen::Vector3d rgb(out.at(0, y, x), out.at(1, y, x), out.at(2, y, x));
        const Eigen::Vector3d v = t * rgb;
        for (int k = 0; k < 3; ++k) out.at(k, y, x) = v(k);
      }
    }
  }
  if (p.noise_sigma > 0.0) {
    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> noise(0.0, p.noise_sigma);
    for (int c = 0; c < out.channel_count(); ++c)
      for (Eigen::Index i = 0; i < out.channel(c).size(); ++i) out.channel(c).data()[i] += noise(rng);
  }
  for (int c = 0; c < out.channel_count(); ++c) out.channel(c) = out.channel(c).cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& ssim_window() {
  static const std::vector<double> k = gaussian_kernel(1.5, 5);
  return k;
}

}  // namespace

SsimStats ssim_stats(const Plane& a, const Plane& b, const MaskPlane& mask) {
  const auto& k = ssim_window();
  const Plane m = mask.cast<double>();
  SsimStats st;
  st.norm = convolve_separable(m, k, false);
  st.valid = mask && (st.norm > 1e-12);
  const Plane safe = st.norm.max(1e-12);
  st.mu_a = convolve_separable(m * a, k, false) / safe;
  st.mu_b = convolve_separable(m * b, k, false) / safe;
  st.var_a = convolve_separable(m * a * a, k, false) / safe - st.mu_a.square();
  st.var_b = convolve_separable(m * b * b, k, false) / safe - st.mu_b.square();
  st.cov = convolve_separable(m * a * b, k, false) / safe - st.mu_a * st.mu_b;
  st.ssim = ((2 * st.mu_a * st.mu_b + kC1) * (2 * st.cov + kC2)) /
            ((st.mu_a.square() + st.mu_b.square() + kC1) * (st.var_a + st.var_b + kC2));
  st.ssim = st.valid.select(st.ssim, 0.0);
  return st;
}

Plane ssim_backprop(const SsimStats& st, const Plane& a, const Plane& b, const MaskPlane& mask,
                    const Plane& upstream) {
  const auto& k = ssim_window();
  const Plane a1 = 2 * st.mu_a * st.mu_b + kC1;
  const Plane a2 = 2 * st.cov + kC2;
  const Plane b1 = st.mu_a.square() + st.mu_b.square() + kC1;
  const Plane b2 = st.var_a + st.var_b + kC2;
  const Plane d_mu = 2 * st.mu_b * a2 / (b1 * b2) - st.ssim * 2 * st.mu_a / b1;
  const Plane d_var = -st.ssim / b2;
  const Plane d_cov = 2 * a1 / (b1 * b2);
  const Plane u = st.valid.select(upstream / st.norm.max(1e-12), 0.0);
  const Plane ca = convolve_separable(u * (d_mu - 2 * st.mu_a * d_var - st.mu_b * d_cov), k, false);
  const Plane cb = convolve_separable(u * 2 * d_var, k, false);
  const Plane cc = convolve_separable(u * d_cov, k, false);
  return mask.select(ca + a * cb + b * cc, 0.0);
}

ImagePlane ssim_map(const ImagePlane& a, const ImagePlane& b) {
  if (!a.same_shape(b)) throw ShapeError("ssim_map: image shapes differ");
  const MaskPlane m = joint_mask(a, b);
  ImagePlane out(a.width(), a.height(), a.channel_count());
  MaskPlane valid = m;
  for (int c = 0; c < a.channel_count(); ++c) {
    SsimStats st = ssim_stats(a.channel(c), b.channel(c), m);
    out.channel(c) = std::move(st.ssim);
    valid = valid && st.valid;
  }
  out.mask() = valid;
  return out;
}

ImagePlane crop(const ImagePlane& src, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || width < 1 || height < 1 || x0 + width > src.width() || y0 + height > src.height())
    throw ShapeError("crop window outside image");
  ImagePlane out(width, height, src.channel_count());
  for (int c = 0; c < src.channel_count(); ++c) out.channel(c) = src.channel(c).block(y0, x0, height, width);
  out.mask() = src.mask().block(y0, x0, height, width);
  return out;
}

ImagePlane stack_channels(const ImagePlane& a, const ImagePlane& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw ShapeError("stack_channels: sizes differ");
  ImagePlane out(a.width(), a.height(), a.channel_count() + b.channel_count());
  for (int c = 0; c < a.channel_count(); ++c) out.channel(c) = a.channel(c);
  for (int c = 0; c < b.channel_count(); ++c) out.channel(a.channel_count() + c) = b.channel(c);
  out.mask() = joint_mask(a, b);
  return out;
}

ImagePlane to_gray(const ImagePlane& src) { return preprocess(src, InputMode::Gray); }

ImagePlane downsample_half(const ImagePlane& src) {
  const int w = src.width() / 2, h = src.height() / 2;
  ImagePlane out(w, h, src.channel_count());
  for (int c = 0; c < src.channel_count(); ++c) {
    const Plane& in = src.channel(c);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = 0.25 * (in(2 * y, 2 * x) + in(2 * y, 2 * x + 1) + in(2 * y + 1, 2 * x) + in(2 * y + 1, 2 * x + 1));
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.mask()(y, x) = src.mask()(2 * y, 2 * x) && src.mask()(2 * y, 2 * x + 1) && src.mask()(2 * y + 1, 2 * x) &&
                         src.mask()(2 * y + 1, 2 * x + 1);
  return out;
}

MaskPlane joint_mask(const ImagePlane& a, const ImagePlane& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw ShapeError("joint_mask: sizes differ");
  return a.mask() && b.mask();
}

}  // namespace prgflow
