#include "prgflow/learner.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "prgflow/errors.hpp"
#include "prgflow/estimator.hpp"
#include "prgflow/parallel.hpp"

namespace prgflow {
namespace {

template <typename Scalar>
struct BlockEval {
  WarpParamsd pred;
  BlockCache<Scalar> cache;
};

template <typename Scalar>
BlockEval<Scalar> run_block(const ModelWeights<Scalar>& w, std::size_t b, const ImagePlane& p1, const ImagePlane& p2,
                            const WarpParamsd& acc, bool keep_cache) {
  if (p1.width() != w.input_size || p1.height() != w.input_size)
    throw ShapeError("training patches must be " + std::to_string(w.input_size) + " px square");
  const bool is_identity = acc.vector().isZero(0.0);
  const ImagePlane stack = network_input(is_identity ? p1 : warp_image(p1, acc), p2, w.input_channels);
  if (stack.channel_count() != w.input_channels) throw ShapeError("pair channels do not match the network input");
  BlockEval<Scalar> e;
  const VectorX<Scalar> out =
      block_forward(w.blocks[b], to_tensor<Scalar>(stack), w.input_size, keep_cache ? &e.cache : nullptr);
  e.pred = WarpParamsd::from_vector(w.blocks[b].model, out.template cast<double>());
  return e;
}

template <typename Scalar>
void backprop(const ModelWeights<Scalar>& w, std::size_t b, const BlockEval<Scalar>& e, const Eigen::VectorXd& g,
              double weight, ModelWeights<Scalar>& grad) {
  const VectorX<Scalar> up = (g * weight).template cast<Scalar>();
  block_backward(w.blocks[b], e.cache, w.input_size, up, grad.blocks[b]);
}

WarpParamsd advance(const WarpParamsd& acc, const WarpParamsd& pred) {
  try {
    return compose(lift(pred, acc.model), acc);
  } catch (const DomainError&) {
    return acc;
  } catch (const DegenerateError&) {
    return acc;
  }
}

// The part of `target` still missing after acc, restricted to `model`.
WarpParamsd residual_label(const WarpParamsd& target, const WarpParamsd& acc, WarpModel model) {
  return project(compose(lift(target, acc.model), invert(acc)), model);
}

WarpParamsd start_of(const CascadeConfig& c) { return WarpParamsd::identity(accumulation_model(c)); }

// Read-only view of a subset of a corpus.
class SubsetCorpus final : public Corpus {
 public:
  SubsetCorpus(const Corpus& base, std::size_t begin, std::size_t end) : base_(base), begin_(begin), end_(end) {}
  std::size_t size() const override { return end_ - begin_; }
  ImagePlane image(std::size_t i) const override { return base_.image(begin_ + i); }
  std::string describe() const override { return base_.describe(); }

 private:
  const Corpus& base_;
  std::size_t begin_, end_;
};

enum class Regime { Supervised, Unsupervised, Distill, Projection };

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = derive_seed(seed, i) % i;
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

double final_error(const WarpParamsd& h, const WarpParamsd& truth) {
  return l2_distance(project(h, WarpModel::PseudoSimilarity).vector(), truth.vector()).value;
}

TrainResult run_training(const Corpus& corpus, const TrainConfig& cfg, const CascadeConfig& cascade, Regime regime,
                         const ModelWeights<float>* teacher_in, const EpochCallback& on_epoch) {
  cfg.validate();
  cascade.validate();
  const std::size_t n = corpus.size();
  if (n < static_cast<std::size_t>(cfg.batch))
    throw DataError("corpus has " + std::to_string(n) + " images, fewer than the batch size " +
                    std::to_string(cfg.batch));
  std::size_t n_val = cfg.val_fraction > 0 && n >= 2
                          ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * cfg.val_fraction)))
                          : 0;
  n_val = std::min(n_val, n - 1);
  const SubsetCorpus train_set(corpus, 0, n - n_val);
  const SubsetCorpus val_set(corpus, n_val ? n - n_val : 0, n);

  std::vector<SyntheticPair> val(cfg.val_pairs);
  parallel_for(val.size(), [&](std::size_t i) { val[i] = benchmark_pair(val_set, cfg.gamma, derive_seed(cfg.seed, 0x5a17), i); });

  ModelWeights<float> model =
      init_model<float>(cascade, cfg.input_channels, kPatchSize, cfg.widths, derive_seed(cfg.seed, 0x1417));
  ModelWeights<float> teacher;
  if (teacher_in) {
    teacher = *teacher_in;
    if (teacher.input_size != kPatchSize || teacher.input_channels != cfg.input_channels)
      throw ShapeError("teacher input shape does not match the training configuration");
  }
  AdamState<float> adam, adam_teacher;
  VectorX<float> params = flatten(model), teacher_params;
  if (regime == Regime::Projection) teacher_params = flatten(teacher);

  auto val_loss = [&]() {
    std::vector<double> v(val.size());
    parallel_for(val.size(), [&](std::size_t i) {
      const CascadeTrace tr = cascade_forward(model, val[i].p1, val[i].p2);
      if (regime == Regime::Unsupervised) {
        try {
          v[i] = UnsupervisedObjective(val[i].p1, val[i].p2, cfg.loss).value(tr.final_h);
        } catch (const DegenerateError&) {
          v[i] = 1.0;
        }
      } else {
        v[i] = final_error(tr.final_h, val[i].truth);
      }
    });
    double s = 0;
    for (double x : v) s += x;
    return val.empty() ? 0.0 : s / static_cast<double>(val.size());
  };

  TrainResult result;
  result.weights = model;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  long step = 0;
  const std::size_t n_train = train_set.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = permutation(n_train, derive_seed(cfg.seed, epoch, 0x0bde));
    double loss_sum = 0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch) {
      const std::size_t count = std::min<std::size_t>(cfg.batch, n_train - start);
      const double weight = 1.0 / static_cast<double>(count);
      std::vector<VectorX<float>> grads(count), tgrads(regime == Regime::Projection ? count : 0);
      std::vector<double> losses(count);
      parallel_for(count, [&](std::size_t j) {
        const std::size_t k = start + j;
        const SyntheticPair pair =
            gen_pair(train_set.image(order[k]), cfg.gamma, derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), k));
        ModelWeights<float> g = zero_like(model);
        CascadeTrace tr;
        switch (regime) {
          case Regime::Supervised:
            supervised_sample(model, pair, &g, weight, nullptr, &tr);
            losses[j] = final_error(tr.final_h, pair.truth);
            break;
          case Regime::Unsupervised:
            losses[j] = unsupervised_sample(model, pair, cfg.loss, &g, weight, nullptr, &tr);
            break;
          case Regime::Distill:
            distill_sample(teacher, model, pair, &g, weight, &tr);
            losses[j] = final_error(tr.final_h, pair.truth);
            break;
          case Regime::Projection: {
            ModelWeights<float> tg = zero_like(teacher);
            projection_sample(teacher, model, pair, cfg.lambdas, &tg, &g, weight, &tr);
            tgrads[j] = flatten(tg);
            losses[j] = final_error(tr.final_h, pair.truth);
            break;
          }
        }
        grads[j] = flatten(g);
      });
      VectorX<float> total = VectorX<float>::Zero(params.size());
      for (std::size_t j = 0; j < count; ++j) {
        total += grads[j];
        loss_sum += losses[j];
      }
      ++step;
      adam_step(params, total, adam, step, cfg.adam);
      unflatten(model, params);
      if (regime == Regime::Projection) {
        VectorX<float> ttotal = VectorX<float>::Zero(teacher_params.size());
        for (const auto& g : tgrads) ttotal += g;
        adam_step(teacher_params, ttotal, adam_teacher, step, cfg.adam);
        unflatten(teacher, teacher_params);
      }
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(n_train), val_loss()};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_loss < best) {
      best = rec.val_loss;
      result.weights = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace

template <typename Scalar>
CascadeTrace cascade_forward(const ModelWeights<Scalar>& w, const ImagePlane& p1, const ImagePlane& p2) {
  CascadeTrace tr;
  WarpParamsd acc = start_of(w.cascade);
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    tr.acc.push_back(acc);
    const BlockEval<Scalar> e = run_block(w, b, p1, p2, acc, false);
    tr.pred.push_back(e.pred);
    acc = advance(acc, e.pred);
  }
  tr.final_h = acc;
  return tr;
}

template <typename Scalar>
double supervised_sample(const ModelWeights<Scalar>& w, const SyntheticPair& pair, ModelWeights<Scalar>* grad,
                         double weight, const std::vector<WarpParamsd>* frozen_acc, CascadeTrace* trace) {
  if (frozen_acc && frozen_acc->size() != w.blocks.size()) throw ShapeError("frozen trajectory length mismatch");
  CascadeTrace tr;
  WarpParamsd acc = start_of(w.cascade);
  double total = 0;
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    const WarpParamsd a = frozen_acc ? (*frozen_acc)[b] : acc;
    const BlockEval<Scalar> e = run_block(w, b, pair.p1, pair.p2, a, grad != nullptr);
    const WarpParamsd label = residual_label(pair.truth, a, w.blocks[b].model);
    const VectorLoss l = l2_distance(e.pred.vector(), label.vector());
    total += l.value;
    if (grad) backprop(w, b, e, l.grad, weight, *grad);
    tr.acc.push_back(a);
    tr.pred.push_back(e.pred);
    acc = advance(a, e.pred);
  }
  tr.final_h = acc;
  if (trace) *trace = std::move(tr);
  return total;
}

template <typename Scalar>
double unsupervised_sample(const ModelWeights<Scalar>& w, const SyntheticPair& pair, const LossSpec& spec,
                           ModelWeights<Scalar>* grad, double weight, const std::vector<WarpParamsd>* frozen_acc,
                           CascadeTrace* trace) {
  if (frozen_acc && frozen_acc->size() != w.blocks.size()) throw ShapeError("frozen trajectory length mismatch");
  const UnsupervisedObjective objective(pair.p1, pair.p2, spec);
  CascadeTrace tr;
  WarpParamsd acc = start_of(w.cascade);
  double total = 0;
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    const WarpParamsd a = frozen_acc ? (*frozen_acc)[b] : acc;
    const BlockEval<Scalar> e = run_block(w, b, pair.p1, pair.p2, a, grad != nullptr);
    tr.acc.push_back(a);
    tr.pred.push_back(e.pred);
    acc = advance(a, e.pred);
    try {
      const WarpParamsd h = compose(lift(e.pred, a.model), a);
      const VectorLoss v = objective.evaluate(h);
      total += v.value;
      if (!grad) continue;
      // d h / d pred by central differences of the (smooth) composition.
      const int n = dof(e.pred.model);
      Eigen::MatrixXd jac(v.grad.size(), n);
      const Eigen::VectorXd base = e.pred.vector();
      for (int k = 0; k < n; ++k) {
        const double step = 1e-6;
        Eigen::VectorXd hi = base, lo = base;
        hi(k) += step;
        lo(k) -= step;
        const WarpParamsd ph = compose(lift(WarpParamsd::from_vector(e.pred.model, hi), a.model), a);
        const WarpParamsd pl = compose(lift(WarpParamsd::from_vector(e.pred.model, lo), a.model), a);
        jac.col(k) = (ph.vector() - pl.vector()) / (2 * step);
      }
      backprop(w, b, e, jac.transpose() * v.grad, weight, *grad);
    } catch (const DomainError&) {
    } catch (const DegenerateError&) {
    }
  }
  tr.final_h = acc;
  if (trace) *trace = std::move(tr);
  return total;
}

template <typename Scalar>
double distill_sample(const ModelWeights<Scalar>& teacher, const ModelWeights<Scalar>& student,
                      const SyntheticPair& pair, ModelWeights<Scalar>* grad_student, double weight,
                      CascadeTrace* student_trace) {
  const WarpParamsd target = cascade_forward(teacher, pair.p1, pair.p2).final_h;
  CascadeTrace tr;
  WarpParamsd acc = start_of(student.cascade);
  double total = 0;
  for (std::size_t b = 0; b < student.blocks.size(); ++b) {
    const BlockEval<Scalar> e = run_block(student, b, pair.p1, pair.p2, acc, grad_student != nullptr);
    const VectorLoss l = loss_distill(residual_label(target, acc, student.blocks[b].model), e.pred);
    total += l.value;
    if (grad_student) backprop(student, b, e, l.grad, weight, *grad_student);
    tr.acc.push_back(acc);
    tr.pred.push_back(e.pred);
    acc = advance(acc, e.pred);
  }
  tr.final_h = acc;
  if (student_trace) *student_trace = std::move(tr);
  return total;
}

template <typename Scalar>
double projection_sample(const ModelWeights<Scalar>& teacher, const ModelWeights<Scalar>& student,
                         const SyntheticPair& pair, const ProjectionLambdas& lambdas, ModelWeights<Scalar>* grad_teacher,
                         ModelWeights<Scalar>* grad_student, double weight, CascadeTrace* student_trace) {
  CascadeTrace ttr;
  double total =
      lambdas.teacher_truth * supervised_sample(teacher, pair, grad_teacher, weight * lambdas.teacher_truth, nullptr, &ttr);
  const ProjectionLambdas student_part{0.0, lambdas.student_truth, lambdas.teacher_student};
  CascadeTrace tr;
  WarpParamsd acc = start_of(student.cascade);
  for (std::size_t b = 0; b < student.blocks.size(); ++b) {
    const WarpModel m = student.blocks[b].model;
    const BlockEval<Scalar> e = run_block(student, b, pair.p1, pair.p2, acc, grad_student != nullptr);
    const ProjectionLoss l =
        loss_projection(residual_label(pair.truth, acc, m), residual_label(ttr.final_h, acc, m), e.pred, student_part);
    total += l.value;
    if (grad_student) backprop(student, b, e, l.grad_student, weight, *grad_student);
    tr.acc.push_back(acc);
    tr.pred.push_back(e.pred);
    acc = advance(acc, e.pred);
  }
  tr.final_h = acc;
  if (student_trace) *student_trace = std::move(tr);
  return total;
}

#define PRGFLOW_INSTANTIATE(S)                                                                                       \
  template CascadeTrace cascade_forward<S>(const ModelWeights<S>&, const ImagePlane&, const ImagePlane&);             \
  template double supervised_sample<S>(const ModelWeights<S>&, const SyntheticPair&, ModelWeights<S>*, double,        \
                                       const std::vector<WarpParamsd>*, CascadeTrace*);                              \
  template double unsupervised_sample<S>(const ModelWeights<S>&, const SyntheticPair&, const LossSpec&,              \
                                         ModelWeights<S>*, double, const std::vector<WarpParamsd>*, CascadeTrace*);  \
  template double distill_sample<S>(const ModelWeights<S>&, const ModelWeights<S>&, const SyntheticPair&,             \
                                    ModelWeights<S>*, double, CascadeTrace*);                                        \
  template double projection_sample<S>(const ModelWeights<S>&, const ModelWeights<S>&, const SyntheticPair&,          \
                                       const ProjectionLambdas&, ModelWeights<S>*, ModelWeights<S>*, double,          \
                                       CascadeTrace*);
PRGFLOW_INSTANTIATE(float)
PRGFLOW_INSTANTIATE(double)
#undef PRGFLOW_INSTANTIATE

void TrainConfig::validate() const {
  if (!(adam.lr > 0)) throw DomainError("train: lr must be > 0");
  if (batch < 1) throw DomainError("train: batch must be >= 1");
  if (epochs < 1) throw DomainError("train: epochs must be >= 1");
  if (patience < 1) throw DomainError("train: patience must be >= 1");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw DomainError("train: val_fraction must be in [0, 1)");
  if (val_pairs < 1) throw DomainError("train: val_pairs must be >= 1");
  if (input_channels != 2 && input_channels != 6) throw DomainError("train: input_channels must be 2 or 6");
  gamma.validate();
}

TrainResult train(const Corpus& corpus, const TrainConfig& cfg, const CascadeConfig& cascade,
                  const EpochCallback& on_epoch) {
  return run_training(corpus, cfg, cascade,
                      cfg.objective == TrainObjective::Supervised ? Regime::Supervised : Regime::Unsupervised, nullptr,
                      on_epoch);
}

CompressionMode parse_compression_mode(const std::string& name) {
  if (name == "scratch") return CompressionMode::Scratch;
  if (name == "projection") return CompressionMode::Projection;
  if (name == "distill") return CompressionMode::Distill;
  throw DataError("unknown compression mode '" + name + "' (expected scratch, projection or distill)");
}

TrainResult train_student(const ModelWeights<float>& teacher, CompressionMode mode, const Corpus& corpus,
                          const TrainConfig& cfg, const CascadeConfig& small_cascade, const EpochCallback& on_epoch) {
  switch (mode) {
    case CompressionMode::Scratch: return run_training(corpus, cfg, small_cascade, Regime::Supervised, nullptr, on_epoch);
    case CompressionMode::Projection:
      return run_training(corpus, cfg, small_cascade, Regime::Projection, &teacher, on_epoch);
    case CompressionMode::Distill: return run_training(corpus, cfg, small_cascade, Regime::Distill, &teacher, on_epoch);
  }
  throw DomainError("unknown compression mode");
}

double evaluate_supervised(const ModelWeights<float>& w, const std::vector<SyntheticPair>& pairs) {
  if (pairs.empty()) throw ShapeError("evaluate_supervised: no pairs");
  std::vector<double> v(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    v[i] = final_error(cascade_forward(w, pairs[i].p1, pairs[i].p2).final_h, pairs[i].truth);
  });
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
  os << "epoch,train_loss,val_loss\n";
  for (const auto& r : history)
    os << r.epoch << ',' << std::setprecision(10) << r.train_loss << ',' << r.val_loss << '\n';
}

}  // namespace prgflow
