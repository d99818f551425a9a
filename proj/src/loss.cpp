#include "prgflow/loss.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "prgflow/errors.hpp"

namespace prgflow {

MetricSpec MetricSpec::l1() { return MetricSpec{MetricKind::L1, 0.0}; }

MetricSpec MetricSpec::charbonnier(double alpha, double eps) {
  MetricSpec m{MetricKind::Charbonnier, alpha};
  m.eps = eps;
  return m;
}

MetricSpec MetricSpec::ssim(double alpha) { return MetricSpec{MetricKind::SSIM, alpha}; }

MetricSpec MetricSpec::robust(double alpha, double c) {
  MetricSpec m{MetricKind::Robust, alpha};
  m.c = c;
  return m;
}

void MetricSpec::validate() const {
  if (!(c > 0)) throw DomainError("metric scale c must be > 0");
  if (!(eps > 0)) throw DomainError("metric eps must be > 0");
  if (!(eps_alpha > 0) || !(eps_alpha < 1)) throw DomainError("metric eps_alpha must be in (0, 1)");
  if (kind == MetricKind::SSIM && !(alpha >= 0)) throw DomainError("ssim blend weight alpha must be >= 0");
}

double MetricSpec::alpha_hat() const {
  const double e = std::exp(alpha);
  return (2.0 - 2.0 * eps_alpha) * e / (e + 1.0);
}

double MetricSpec::robust_b() const { return std::abs(2.0 - alpha_hat()) + eps; }

double MetricSpec::robust_d() const {
  const double ah = alpha_hat();
  // alpha_hat is a scaled logistic and always positive; the negative branch is
  // kept for completeness.
  return ah >= 0 ? ah + eps : ah - eps;
}

namespace {

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

DistanceResult photometric_distance(const ImagePlane& a, const ImagePlane& b, const MetricSpec& m) {
  if (!a.same_shape(b)) throw ShapeError("photometric_distance: image shapes differ");
  m.validate();
  const MaskPlane mask = joint_mask(a, b);
  const int nc = a.channel_count();
  DistanceResult out;
  out.grad.assign(nc, Plane::Zero(a.height(), a.width()));

  if (m.kind == MetricKind::SSIM) {
    std::vector<SsimStats> stats;
    stats.reserve(nc);
    MaskPlane valid = mask;
    for (int c = 0; c < nc; ++c) {
      stats.push_back(ssim_stats(a.channel(c), b.channel(c), mask));
      valid = valid && stats.back().valid;
    }
    const double n = static_cast<double>(valid.count()) * nc;
    if (n == 0) throw DegenerateError("photometric_distance: no valid pixels");
    const Plane upstream = valid.select(Plane::Constant(a.height(), a.width(), -0.5 / n), 0.0);
    double total = 0;
    for (int c = 0; c < nc; ++c) {
      const Plane r = a.channel(c) - b.channel(c);
      total += valid.select((1.0 - stats[c].ssim) * 0.5 + m.alpha * r.abs(), 0.0).sum();
      out.grad[c] = ssim_backprop(stats[c], a.channel(c), b.channel(c), mask, upstream) +
                    valid.select(r.unaryExpr([](double v) { return sign(v); }) * (m.alpha / n), 0.0);
    }
    out.value = total / n;
    return out;
  }

  const double n = static_cast<double>(mask.count()) * nc;
  if (n == 0) throw DegenerateError("photometric_distance: no valid pixels");
  const double rb = m.robust_b(), rd = m.robust_d();
  double total = 0;
  for (int c = 0; c < nc; ++c) {
    const Plane r = a.channel(c) - b.channel(c);
    Plane val, grad;
    switch (m.kind) {
      case MetricKind::L1:
        val = r.abs();
        grad = r.unaryExpr([](double v) { return sign(v); });
        break;
      case MetricKind::Charbonnier: {
        const Plane base = r.square() + m.eps * m.eps;
        val = base.pow(m.alpha);
        grad = 2.0 * m.alpha * r * base.pow(m.alpha - 1.0);
        break;
      }
      case MetricKind::Robust: {
        const Plane x = r / m.c;
        const Plane inner = x.square() / rb + 1.0;
        val = (rb / rd) * (inner.pow(rd / 2.0) - 1.0);
        grad = x * inner.pow(rd / 2.0 - 1.0) / m.c;
        break;
      }
      case MetricKind::SSIM:
        break;
    }
    total += mask.select(val, 0.0).sum();
    out.grad[c] = mask.select(grad / n, 0.0);
  }
  out.value = total / n;
  return out;
}

VectorLoss l2_distance(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size()) throw ShapeError("l2_distance: vector sizes differ");
  const Eigen::VectorXd d = pred - truth;
  const double n = d.norm();
  return {n, n > 0 ? Eigen::VectorXd(d / n) : Eigen::VectorXd::Zero(d.size())};
}

BatchLoss loss_supervised(std::span<const WarpParamsd> pred, std::span<const WarpParamsd> truth) {
  if (pred.size() != truth.size()) throw ShapeError("loss_supervised: batch sizes differ");
  if (pred.empty()) throw DegenerateError("loss_supervised: empty batch");
  BatchLoss out;
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].model != truth[i].model) throw ShapeError("loss_supervised: warp models differ");
    VectorLoss l = l2_distance(pred[i].vector(), truth[i].vector());
    out.value += l.value * inv;
    out.grads.push_back(l.grad * inv);
  }
  return out;
}

UnsupervisedObjective::UnsupervisedObjective(const ImagePlane& p1, const ImagePlane& p2, LossSpec spec) {
  if (!p1.same_shape(p2)) throw ShapeError("unsupervised loss: patch shapes differ");
  auto add = [&](const LossTerm& t) {
    t.metric.validate();
    if (t.lambda < 0) throw DomainError("regularizer weight must be >= 0");
    terms_.push_back({t, preprocess(p1, t.mode), preprocess(p2, t.mode)});
  };
  add(spec.metric);
  for (const auto& r : spec.regularizers) add(r);
}

VectorLoss UnsupervisedObjective::evaluate(const WarpParamsd& h) const {
  VectorLoss out{0.0, Eigen::VectorXd::Zero(dof(h.model))};
  for (const auto& t : terms_) {
    if (t.term.lambda == 0.0) continue;
    const WarpJacobian jac = warp_jacobian(t.a, h);
    const DistanceResult d = photometric_distance(jac.warped, t.b, t.term.metric);
    const Eigen::Index plane = Eigen::Index(t.a.width()) * t.a.height();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dof(h.model));
    for (int c = 0; c < t.a.channel_count(); ++c) {
      const Eigen::Map<const Eigen::VectorXd> gc(d.grad[c].data(), plane);
      g += jac.rows.middleRows(c * plane, plane).transpose() * gc;
    }
    out.value += t.term.lambda * d.value;
    out.grad += t.term.lambda * g;
  }
  return out;
}

double UnsupervisedObjective::value(const WarpParamsd& h) const {
  double v = 0;
  for (const auto& t : terms_) {
    if (t.term.lambda == 0.0) continue;
    v += t.term.lambda * photometric_distance(warp_image(t.a, h), t.b, t.term.metric).value;
  }
  return v;
}

VectorLoss loss_unsupervised(const ImagePlane& p1, const ImagePlane& p2, const WarpParamsd& h,
                             const LossSpec& spec) {
  return UnsupervisedObjective(p1, p2, spec).evaluate(h);
}

ProjectionLoss loss_projection(const WarpParamsd& truth, const WarpParamsd& teacher, const WarpParamsd& student,
                               const ProjectionLambdas& lambdas) {
  if (truth.model != teacher.model || truth.model != student.model)
    throw ShapeError("loss_projection: warp models differ");
  const Eigen::VectorXd t = truth.vector(), ht = teacher.vector(), hs = student.vector();
  const VectorLoss lt = l2_distance(ht, t);
  const VectorLoss ls = l2_distance(hs, t);
  const VectorLoss lts = l2_distance(hs, ht);
  ProjectionLoss out;
  out.value = lambdas.teacher_truth * lt.value + lambdas.student_truth * ls.value + lambdas.teacher_student * lts.value;
  out.grad_teacher = lambdas.teacher_truth * lt.grad - lambdas.teacher_student * lts.grad;
  out.grad_student = lambdas.student_truth * ls.grad + lambdas.teacher_student * lts.grad;
  return out;
}

VectorLoss loss_distill(const WarpParamsd& teacher, const WarpParamsd& student) {
  if (teacher.model != student.model) throw ShapeError("loss_distill: warp models differ");
  return l2_distance(student.vector(), teacher.vector());
}

// --- shorthand grammar -----------------------------------------------------

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  LossSpec parse() {
    LossSpec spec;
    skip();
    double lambda = 1.0;
    bool explicit_lambda = parse_weight(lambda);
    spec.metric = parse_term(1.0);
    if (explicit_lambda && lambda != 1.0) fail("the leading metric term cannot carry a weight");
    skip();
    while (pos_ < text_.size()) {
      expect('+');
      skip();
      double w = 1.0;
      parse_weight(w);
      spec.regularizers.push_back(parse_term(w));
      skip();
    }
    return spec;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("loss shorthand '" + std::string(text_) + "': " + what + " at offset " + std::to_string(pos_));
  }

  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void expect(char c) {
    skip();
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  bool parse_weight(double& w) {
    skip();
    if (pos_ >= text_.size()) fail("expected a term");
    const char c = text_[pos_];
    if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.')) return false;
    w = parse_number();
    skip();
    if (pos_ < text_.size() && text_[pos_] == '*') ++pos_;
    return true;
  }

  double parse_number() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
                                   text_[pos_] == 'e' || text_[pos_] == 'E' ||
                                   ((text_[pos_] == '-' || text_[pos_] == '+') && pos_ > start &&
                                    (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E')) ||
                                   (text_[pos_] == '-' && pos_ == start)))
      ++pos_;
    if (start == pos_) fail("expected a number");
    try {
      return std::stod(std::string(text_.substr(start, pos_ - start)));
    } catch (...) {
      fail("malformed number");
    }
  }

  std::string parse_ident() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
    if (start == pos_) fail("expected a name");
    return std::string(text_.substr(start, pos_ - start));
  }

  LossTerm parse_term(double lambda) {
    LossTerm t;
    t.lambda = lambda;
    const std::string name = parse_ident();
    if (name == "l1") t.metric = MetricSpec::l1();
    else if (name == "chab" || name == "charbonnier") t.metric = MetricSpec::charbonnier();
    else if (name == "ssim") t.metric = MetricSpec::ssim();
    else if (name == "robust") t.metric = MetricSpec::robust();
    else fail("unknown metric '" + name + "' (expected l1, chab, ssim, robust)");
    expect('(');
    t.mode = parse_input_mode(parse_ident());
    skip();
    while (pos_ < text_.size() && text_[pos_] == ',') {
      ++pos_;
      const std::string key = parse_ident();
      expect('=');
      const double v = parse_number();
      if (key == "alpha") t.metric.alpha = v;
      else if (key == "c") t.metric.c = v;
      else if (key == "eps") t.metric.eps = v;
      else if (key == "eps_alpha") t.metric.eps_alpha = v;
      else fail("unknown metric option '" + key + "'");
      skip();
    }
    expect(')');
    t.metric.validate();
    return t;
  }

  std::string_view text_;
  std::size_t pos_{0};
};

std::string term_string(const LossTerm& t, bool leading) {
  std::ostringstream os;
  os.precision(17);
  if (!leading) os << t.lambda << "*";
  switch (t.metric.kind) {
    case MetricKind::L1: os << "l1"; break;
    case MetricKind::Charbonnier: os << "chab"; break;
    case MetricKind::SSIM: os << "ssim"; break;
    case MetricKind::Robust: os << "robust"; break;
  }
  os << "(" << input_mode_name(t.mode);
  switch (t.metric.kind) {
    case MetricKind::L1: break;
    case MetricKind::Charbonnier: os << ", alpha=" << t.metric.alpha << ", eps=" << t.metric.eps; break;
    case MetricKind::SSIM: os << ", alpha=" << t.metric.alpha; break;
    case MetricKind::Robust:
      os << ", alpha=" << t.metric.alpha << ", c=" << t.metric.c << ", eps=" << t.metric.eps
         << ", eps_alpha=" << t.metric.eps_alpha;
      break;
  }
  os << ")";
  return os.str();
}

}  // namespace

LossSpec LossSpec::parse(std::string_view text) { return Parser(text).parse(); }

std::string LossSpec::to_string() const {
  std::string s = term_string(metric, true);
  for (const auto& r : regularizers) s += " + " + term_string(r, false);
  return s;
}

}  // namespace prgflow
