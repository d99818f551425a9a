#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "prgflow/bench.hpp"
#include "prgflow/cascade.hpp"
#include "prgflow/corpus.hpp"
#include "prgflow/loss.hpp"
#include "prgflow/network.hpp"

namespace prgflow {

struct AdamConfig {
  double lr{1e-4};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
};

template <typename Scalar>
struct AdamState {
  VectorX<Scalar> m, v;
};

// Bias-corrected ADAM update of a flat parameter vector; t is the 1-based step.
template <typename Scalar>
void adam_step(VectorX<Scalar>& params, const VectorX<Scalar>& grads, AdamState<Scalar>& state, long t,
               const AdamConfig& cfg) {
  if (t < 1) throw DomainError("adam_step: t must be >= 1");
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient length mismatch");
  if (state.m.size() != params.size()) {
    state.m = VectorX<Scalar>::Zero(params.size());
    state.v = VectorX<Scalar>::Zero(params.size());
  }
  const Scalar b1 = Scalar(cfg.beta1), b2 = Scalar(cfg.beta2);
  state.m = b1 * state.m + (Scalar(1) - b1) * grads;
  state.v = b2 * state.v + (Scalar(1) - b2) * grads.cwiseProduct(grads);
  const Scalar c1 = Scalar(1 - std::pow(cfg.beta1, static_cast<double>(t)));
  const Scalar c2 = Scalar(1 - std::pow(cfg.beta2, static_cast<double>(t)));
  params.array() -= Scalar(cfg.lr) * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + Scalar(cfg.eps));
}

// --- per-sample objectives (also used by the gradient checks) --------------

// Running estimate before each block, and the final estimate.
struct CascadeTrace {
  std::vector<WarpParamsd> acc;
  std::vector<WarpParamsd> pred;
  WarpParamsd final_h;
};

// Plain cascade forward pass (no residual guard).
template <typename Scalar>
CascadeTrace cascade_forward(const ModelWeights<Scalar>& w, const ImagePlane& p1, const ImagePlane& p2);

// Sum over blocks of || pred_b - label_b ||, label_b = project(truth o acc_b^-1)
// in block b's model. Block inputs use the running estimate from the forward
// pass (or `frozen_acc` when given) and are not differentiated. Gradients are
// added into *grad scaled by `weight`.
template <typename Scalar>
double supervised_sample(const ModelWeights<Scalar>& w, const SyntheticPair& pair, ModelWeights<Scalar>* grad,
                         double weight = 1.0, const std::vector<WarpParamsd>* frozen_acc = nullptr,
                         CascadeTrace* trace = nullptr);

// Sum over blocks of the photometric objective at lift(pred_b) o acc_b.
template <typename Scalar>
double unsupervised_sample(const ModelWeights<Scalar>& w, const SyntheticPair& pair, const LossSpec& spec,
                           ModelWeights<Scalar>* grad, double weight = 1.0,
                           const std::vector<WarpParamsd>* frozen_acc = nullptr, CascadeTrace* trace = nullptr);

// Student blocks regress the frozen teacher's final estimate expressed as a
// residual of the student's running estimate.
template <typename Scalar>
double distill_sample(const ModelWeights<Scalar>& teacher, const ModelWeights<Scalar>& student,
                      const SyntheticPair& pair, ModelWeights<Scalar>* grad_student, double weight = 1.0,
                      CascadeTrace* student_trace = nullptr);

// Joint objective: l1 * teacher supervised + sum over student blocks of
// l2 * Ls(label, pred) + l3 * Ls(teacher residual, pred). The teacher-student
// term only reaches the student.
template <typename Scalar>
double projection_sample(const ModelWeights<Scalar>& teacher, const ModelWeights<Scalar>& student,
                         const SyntheticPair& pair, const ProjectionLambdas& lambdas, ModelWeights<Scalar>* grad_teacher,
                         ModelWeights<Scalar>* grad_student, double weight = 1.0,
                         CascadeTrace* student_trace = nullptr);

// --- training ----------------------------------------------------------------

enum class TrainObjective { Supervised, Unsupervised };

struct TrainConfig {
  AdamConfig adam;
  int batch{32};
  int epochs{100};
  TrainObjective objective{TrainObjective::Supervised};
  LossSpec loss{LossSpec::parse("l1(raw)")};
  WarpRange gamma{WarpRange::gamma1()};
  int patience{5};
  std::uint64_t seed{0};
  double val_fraction{0.1};
  std::size_t val_pairs{256};
  int input_channels{2};
  std::vector<int> widths{small_widths()};
  ProjectionLambdas lambdas;

  void validate() const;
};

struct EpochRecord {
  int epoch{0};
  double train_loss{0.0};
  double val_loss{0.0};
};

struct TrainResult {
  ModelWeights<float> weights;  // best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch{0};
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Losses in the history are the mean final-estimate supervised error (or the
// photometric objective for unsupervised training).
TrainResult train(const Corpus& corpus, const TrainConfig& cfg, const CascadeConfig& cascade,
                  const EpochCallback& on_epoch = {});

enum class CompressionMode { Scratch, Projection, Distill };
CompressionMode parse_compression_mode(const std::string& name);

TrainResult train_student(const ModelWeights<float>& teacher, CompressionMode mode, const Corpus& corpus,
                          const TrainConfig& cfg, const CascadeConfig& small_cascade,
                          const EpochCallback& on_epoch = {});

// Mean final-estimate supervised error of a network over pairs.
double evaluate_supervised(const ModelWeights<float>& w, const std::vector<SyntheticPair>& pairs);

void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history);

}  // namespace prgflow
