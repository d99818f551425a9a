#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prgflow/image.hpp"
#include "prgflow/warp.hpp"

namespace prgflow {

enum class MetricKind { L1, Charbonnier, SSIM, Robust };

// alpha means something different per kind: Charbonnier exponent, SSIM L1
// blend weight, Robust latent shape parameter (mapped through a logistic).
struct MetricSpec {
  MetricKind kind{MetricKind::L1};
  double alpha{0.0};
  double c{0.1};
  double eps{1e-3};
  double eps_alpha{1e-3};

  static MetricSpec l1();
  static MetricSpec charbonnier(double alpha = 0.45, double eps = 1e-3);
  static MetricSpec ssim(double alpha = 0.15);
  static MetricSpec robust(double alpha = 0.0, double c = 0.1);

  void validate() const;

  // Robust-loss shape terms.
  double alpha_hat() const;
  double robust_b() const;
  double robust_d() const;
};

struct LossTerm {
  double lambda{1.0};
  MetricSpec metric;
  InputMode mode{InputMode::Raw};
};

// First term is the data metric (lambda fixed at 1), the rest are weighted
// regularizers. Round-trips through the shorthand grammar
//   ssim(raw) + 0.1*l1(highpass) + 2*robust(gray, alpha=1, c=0.2)
struct LossSpec {
  LossTerm metric;
  std::vector<LossTerm> regularizers;

  static LossSpec parse(std::string_view text);
  std::string to_string() const;
};

struct DistanceResult {
  double value{0.0};
  std::vector<Plane> grad;  // d value / d a, one plane per channel
};

// Mean of the per-pixel distance over pixels valid in both images (and over
// channels). Throws DegenerateError when no pixel is valid.
DistanceResult photometric_distance(const ImagePlane& a, const ImagePlane& b, const MetricSpec& m);

struct VectorLoss {
  double value{0.0};
  Eigen::VectorXd grad;
};

// || pred - truth ||_2 and its gradient with respect to pred (zero at equality).
VectorLoss l2_distance(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

struct BatchLoss {
  double value{0.0};
  std::vector<Eigen::VectorXd> grads;  // per sample, already divided by batch size
};

// Mean over the batch of || pred - truth ||_2.
BatchLoss loss_supervised(std::span<const WarpParamsd> pred, std::span<const WarpParamsd> truth);

// D(W(P1, h), P2) + sum_i lambda_i D_i(W(f_i(P1), h), f_i(P2)), gradient w.r.t.
// the parameter vector of h. Inputs are raw patches; each term applies its own
// input mode.
VectorLoss loss_unsupervised(const ImagePlane& p1, const ImagePlane& p2, const WarpParamsd& h,
                             const LossSpec& spec);

// Same loss with the per-term preprocessing done once, for repeated evaluation.
class UnsupervisedObjective {
 public:
  UnsupervisedObjective(const ImagePlane& p1, const ImagePlane& p2, LossSpec spec);
  VectorLoss evaluate(const WarpParamsd& h) const;
  double value(const WarpParamsd& h) const;

 private:
  struct Prepared {
    LossTerm term;
    ImagePlane a, b;
  };
  std::vector<Prepared> terms_;
};

struct ProjectionLambdas {
  double teacher_truth{1.0};
  double student_truth{1.0};
  double teacher_student{0.1};
};

struct ProjectionLoss {
  double value{0.0};
  Eigen::VectorXd grad_teacher;
  Eigen::VectorXd grad_student;
};

// l1 * Ls(truth, teacher) + l2 * Ls(truth, student) + l3 * Ls(teacher, student).
ProjectionLoss loss_projection(const WarpParamsd& truth, const WarpParamsd& teacher, const WarpParamsd& student,
                               const ProjectionLambdas& lambdas = {});

// Ls(teacher, student); gradient w.r.t. the student only.
VectorLoss loss_distill(const WarpParamsd& teacher, const WarpParamsd& student);

}  // namespace prgflow
