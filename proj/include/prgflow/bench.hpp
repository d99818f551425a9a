#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "prgflow/cascade.hpp"
#include "prgflow/corpus.hpp"
#include "prgflow/estimator.hpp"
#include "prgflow/image.hpp"
#include "prgflow/warp.hpp"

namespace prgflow {

// Half-widths of the uniform truth distribution per coordinate.
struct WarpRange {
  std::string id;
  double s{0.0};
  double tx{0.0};
  double ty{0.0};

  static WarpRange gamma1() { return {"gamma1", 0.25, 0.20, 0.20}; }
  static WarpRange gamma2() { return {"gamma2", 0.50, 0.40, 0.40}; }
  // "gamma1", "gamma2" or "S,TX,TY".
  static WarpRange parse(const std::string& text);
  void validate() const;
};

inline constexpr int kPatchSize = 128;
inline constexpr int kCropSize = 300;

// Truth drawn uniformly in +-range per coordinate, deterministic in seed.
WarpParamsd sample_truth(const WarpRange& range, std::uint64_t seed);

struct SyntheticPair {
  ImagePlane p1, p2;
  WarpParamsd truth;
};

// Random 300x300 crop of src; p1 is its center 128x128 patch and p2 samples the
// crop so that p2 = warp(p1, truth) in patch coordinates (about the patch
// center), keeping crop content where p1 has none.
SyntheticPair gen_pair(const ImagePlane& src, const WarpRange& range, std::uint64_t seed);

struct MetricErrors {
  double e_scale{0.0};
  double e_trans{0.0};
};

// Median pixel errors (scale: sqrt((W^2 + H^2) / 2) |ds|; translation:
// sqrt((W dtx)^2 + (H dty)^2) / 2).
MetricErrors metric_errors(std::span<const WarpParamsd> preds, std::span<const WarpParamsd> truths, int width,
                           int height);

// (1 - (e_scale + e_trans) / (id_scale + id_trans)) * 100.
double accuracy(double e_scale, double e_trans, double id_scale, double id_trans);

// Identity-prediction errors over n sampled truths.
MetricErrors identity_baseline(const WarpRange& range, int width, int height, std::size_t n, std::uint64_t seed);

struct EstimatorSpec {
  std::string id;
  EstimatorKind kind;
  CascadeConfig cascade;
};

// "identity", "lk[:CASCADE]", "lk-ssd[:CASCADE]", "fft[:CASCADE]", "cnn:WEIGHTS"
// (cascade taken from the weights file).
EstimatorSpec parse_estimator_spec(const std::string& text, const std::filesystem::path& base_dir = {});

// Splits a comma list of estimator specs, keeping cascade commas with their
// estimator ("identity,lk:T*2,S*2,fft" -> identity | lk:T*2,S*2 | fft).
std::vector<std::string> split_estimator_list(const std::string& text);

struct BenchRecord {
  std::string estimator;
  std::string gamma;
  double e_scale_px{0.0};
  double e_trans_px{0.0};
  double accuracy_pct{0.0};
  std::size_t n{0};
  std::uint64_t params{0};
  std::uint64_t flops{0};
  double ms_per_pair{-1.0};  // negative: not measured
  std::size_t failures{0};
};

struct BenchOptions {
  std::size_t n_pairs{500};
  std::uint64_t seed{0};
  bool timing{false};  // wall clock makes reports non-reproducible
  CascadeOptions cascade;
};

// Same pair set for every estimator of a range. Each range contributes an
// identity row first, then one row per estimator.
std::vector<BenchRecord> run_benchmark(const Corpus& corpus, const std::vector<EstimatorSpec>& estimators,
                                       const std::vector<WarpRange>& ranges, const BenchOptions& opts);

// Pair i of a benchmark run (shared by the trainer's validation split).
SyntheticPair benchmark_pair(const Corpus& corpus, const WarpRange& range, std::uint64_t seed, std::size_t i);

void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records);

}  // namespace prgflow
