#include "prgflow/fft_align.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include "prgflow/errors.hpp"

namespace prgflow {
namespace {

using Complex = std::complex<double>;
using Spectrum = Eigen::Array<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

void check_inputs(const ImagePlane& p1, const ImagePlane& p2) {
  if (!p1.same_shape(p2)) throw ShapeError("fft alignment: image shapes differ");
  if (p1.channel_count() != 1) throw ShapeError("fft alignment: grayscale images required");
  if (!power_of_two(p1.width()) || !power_of_two(p1.height()))
    throw ShapeError("fft alignment: width and height must be powers of two");
}

Spectrum fft2(const Spectrum& in, bool inverse) {
  Eigen::FFT<double> fft;
  const Eigen::Index h = in.rows(), w = in.cols();
  Spectrum out(h, w);
  std::vector<Complex> src(w), dst(w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) src[x] = in(y, x);
    inverse ? fft.inv(dst, src) : fft.fwd(dst, src);
    for (Eigen::Index x = 0; x < w; ++x) out(y, x) = dst[x];
  }
  src.resize(h);
  dst.resize(h);
  for (Eigen::Index x = 0; x < w; ++x) {
    for (Eigen::Index y = 0; y < h; ++y) src[y] = out(y, x);
    inverse ? fft.inv(dst, src) : fft.fwd(dst, src);
    for (Eigen::Index y = 0; y < h; ++y) out(y, x) = dst[y];
  }
  return out;
}

Plane hann(int w, int h) {
  Plane win(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      win(y, x) = (0.5 - 0.5 * std::cos(2 * std::numbers::pi * x / w)) * (0.5 - 0.5 * std::cos(2 * std::numbers::pi * y / h));
  return win;
}

Spectrum windowed_spectrum(const Plane& p, bool window) {
  Plane v = p - p.mean();
  if (window) v *= hann(static_cast<int>(p.cols()), static_cast<int>(p.rows()));
  return fft2(v.cast<Complex>(), false);
}

// Sub-pixel offset of a peak from its two neighbours (parabola through three
// samples).
double parabolic(double left, double center, double right) {
  const double denom = left - 2 * center + right;
  if (!(std::abs(denom) > 1e-12)) return 0.0;
  const double off = 0.5 * (left - right) / denom;
  return std::clamp(off, -0.5, 0.5);
}

// Normalized cross-power spectrum back in the spatial domain; the peak sits at
// the shift d with p2(x) ~ p1(x - d).
Plane phase_correlation(const Plane& p1, const Plane& p2, bool window) {
  const Spectrum f1 = windowed_spectrum(p1, window);
  const Spectrum f2 = windowed_spectrum(p2, window);
  Spectrum cross = f2 * f1.conjugate();
  const Plane mag = cross.abs();
  const double floor = std::max(1e-12, mag.maxCoeff() * 1e-9);
  cross = (mag > floor).select(cross / mag.max(floor).cast<Complex>(), Complex(0, 0));
  return fft2(cross, true).real();
}

}  // namespace

FftShift fft_translation(const ImagePlane& p1, const ImagePlane& p2, const FftOptions& opts) {
  check_inputs(p1, p2);
  const int w = p1.width(), h = p1.height();
  const Plane corr = phase_correlation(p1.channel(0), p2.channel(0), opts.hann_window);

  Eigen::Index py = 0, px = 0;
  const double peak = corr.maxCoeff(&py, &px);
  FftShift out;
  out.confidence = std::isfinite(peak) ? peak : 0.0;

  // A near-perfect unwindowed peak means the pair is a circular shift; its
  // correlation is then a delta and refines without window bias.
  const Plane* surface = &corr;
  Plane plain;
  if (opts.hann_window) {
    plain = phase_correlation(p1.channel(0), p2.channel(0), false);
    if (plain(py, px) >= 0.9) surface = &plain;
  }
  auto at = [&](Eigen::Index y, Eigen::Index x) { return (*surface)((y + h) % h, (x + w) % w); };
  const double c = at(py, px);
  const double ox = parabolic(at(py, px - 1), c, at(py, px + 1));
  const double oy = parabolic(at(py - 1, px), c, at(py + 1, px));
  double dx = static_cast<double>(px), dy = static_cast<double>(py);
  if (dx > w / 2) dx -= w;
  if (dy > h / 2) dy -= h;
  out.dx = dx + ox;
  out.dy = dy + oy;
  out.low_confidence = !(out.confidence >= opts.min_confidence);
  return out;
}

FftScaleResult fft_scale_translation(const ImagePlane& p1, const ImagePlane& p2, const FftOptions& opts) {
  check_inputs(p1, p2);
  const int w = p1.width(), h = p1.height();
  if (w != h) throw ShapeError("fft scale alignment: square images required");
  if (!(opts.min_scale > -1.0) || !(opts.max_scale > opts.min_scale)) throw DomainError("fft scale range invalid");

  auto log_magnitude = [&](const Plane& p) {
    const Spectrum f = windowed_spectrum(p, opts.hann_window);
    Plane m(h, w);
    // fftshift so DC sits at (w/2, h/2)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m((y + h / 2) % h, (x + w / 2) % w) = std::log1p(std::abs(f(y, x)));
    return m;
  };
  const Plane m1 = log_magnitude(p1.channel(0));
  const Plane m2 = log_magnitude(p2.channel(0));

  const int na = opts.angle_samples, nr = opts.radius_samples;
  const double r_min = 3.0, r_max = 0.45 * w;
  const double step = std::log(r_max / r_min) / (nr - 1);
  const MaskPlane all = MaskPlane::Constant(h, w, true);
  auto log_polar = [&](const Plane& m) {
    Plane lp(na, nr);
    for (int a = 0; a < na; ++a) {
      const double th = std::numbers::pi * a / na;
      for (int r = 0; r < nr; ++r) {
        const double rad = r_min * std::exp(step * r);
        double v = 0;
        bilinear_sample(m, all, w / 2.0 + rad * std::cos(th), h / 2.0 + rad * std::sin(th), v);
        lp(a, r) = v;
      }
    }
    return lp;
  };
  const Plane lp1 = log_polar(m1);
  const Plane lp2 = log_polar(m2);

  // LP2(rho) = LP1(rho + ln(1 + s)); score normalized cross-correlation of the
  // overlapping columns for each integer log-radius shift.
  const int lo = static_cast<int>(std::floor(std::log1p(opts.min_scale) / step));
  const int hi = static_cast<int>(std::ceil(std::log1p(opts.max_scale) / step));
  std::vector<double> score(hi - lo + 1, -std::numeric_limits<double>::infinity());
  for (int d = lo; d <= hi; ++d) {
    const int i0 = std::max(0, -d), i1 = std::min(nr, nr - d);
    if (i1 - i0 < nr / 4) continue;
    const auto a = lp1.middleCols(i0 + d, i1 - i0);
    const auto b = lp2.middleCols(i0, i1 - i0);
    const double ma = a.mean(), mb = b.mean();
    const double num = ((a - ma) * (b - mb)).sum();
    const double den = std::sqrt((a - ma).square().sum() * (b - mb).square().sum());
    score[d - lo] = den > 1e-12 ? num / den : 0.0;
  }
  int best = 0;
  for (int i = 1; i < static_cast<int>(score.size()); ++i)
    if (score[i] > score[best]) best = i;
  double off = 0.0;
  if (best > 0 && best + 1 < static_cast<int>(score.size()) && std::isfinite(score[best - 1]) &&
      std::isfinite(score[best + 1]))
    off = parabolic(score[best - 1], score[best], score[best + 1]);
  const double shift = (best + lo + off) * step;

  FftScaleResult out;
  out.scale_confidence = std::isfinite(score[best]) ? score[best] : 0.0;
  const double s = std::clamp(std::expm1(shift), opts.min_scale, opts.max_scale);
  WarpParamsd scale_only = WarpParamsd::identity(WarpModel::PseudoSimilarity);
  scale_only.s = s;
  const ImagePlane descaled = warp_image(p1, scale_only);
  out.shift = fft_translation(descaled, p2, opts);
  out.h = WarpParamsd::pseudo_similarity(s, out.shift.dx / (w / 2.0), out.shift.dy / (h / 2.0));
  out.low_confidence = out.shift.low_confidence || !(out.scale_confidence > 0.1);
  return out;
}

}  // namespace prgflow
