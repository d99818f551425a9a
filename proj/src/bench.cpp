#include "prgflow/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "prgflow/errors.hpp"
#include "prgflow/network.hpp"
#include "prgflow/parallel.hpp"

namespace prgflow {
namespace {

double unit(std::uint64_t seed, std::uint64_t k) {
  return static_cast<double>(derive_seed(seed, k) >> 11) * 0x1.0p-53;
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  const double hi = v[n / 2];
  if (n % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + n / 2));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

WarpRange WarpRange::parse(const std::string& text) {
  if (text == "gamma1" || text == "g1") return gamma1();
  if (text == "gamma2" || text == "g2") return gamma2();
  WarpRange r;
  r.id = text;
  std::stringstream ss(text);
  std::string a, b, c;
  if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ','))
    throw DataError("warp range '" + text + "': expected gamma1, gamma2 or S,TX,TY");
  try {
    r.s = std::stod(a);
    r.tx = std::stod(b);
    r.ty = std::stod(c);
  } catch (const std::exception&) {
    throw DataError("warp range '" + text + "': bad number");
  }
  r.validate();
  return r;
}

void WarpRange::validate() const {
  if (!(s >= 0) || !(tx >= 0) || !(ty >= 0)) throw DomainError("warp range entries must be nonnegative");
  if (!(s < 1)) throw DomainError("warp range scale must be below 1");
}

WarpParamsd sample_truth(const WarpRange& range, std::uint64_t seed) {
  range.validate();
  return WarpParamsd::pseudo_similarity(range.s * (2 * unit(seed, 0) - 1), range.tx * (2 * unit(seed, 1) - 1),
                                        range.ty * (2 * unit(seed, 2) - 1));
}

SyntheticPair gen_pair(const ImagePlane& src, const WarpRange& range, std::uint64_t seed) {
  if (src.width() < kCropSize || src.height() < kCropSize)
    throw DataError("source image " + std::to_string(src.width()) + "x" + std::to_string(src.height()) +
                    " is smaller than the 300x300 crop");
  const std::uint64_t crop_seed = derive_seed(seed, 2);
  const int x0 = static_cast<int>(unit(crop_seed, 0) * (src.width() - kCropSize + 1));
  const int y0 = static_cast<int>(unit(crop_seed, 1) * (src.height() - kCropSize + 1));
  const ImagePlane region = crop(src, std::min(x0, src.width() - kCropSize), std::min(y0, src.height() - kCropSize),
                                 kCropSize, kCropSize);
  const int off = (kCropSize - kPatchSize) / 2;

  SyntheticPair pair;
  pair.truth = sample_truth(range, derive_seed(seed, 1));
  pair.p1 = crop(region, off, off, kPatchSize, kPatchSize);
  const PixelWarpd w = params_to_pixel_warp(pair.truth, kPatchSize, kPatchSize);
  Eigen::Matrix3d shift = Eigen::Matrix3d::Identity();
  shift(0, 2) = off;
  shift(1, 2) = off;
  pair.p2 = resample(region, shift * w.m.inverse(), kPatchSize, kPatchSize);
  return pair;
}

MetricErrors metric_errors(std::span<const WarpParamsd> preds, std::span<const WarpParamsd> truths, int width,
                           int height) {
  if (preds.size() != truths.size()) throw ShapeError("metric_errors: prediction and truth counts differ");
  if (preds.empty()) throw ShapeError("metric_errors: empty input");
  const double diag = std::sqrt((static_cast<double>(width) * width + static_cast<double>(height) * height) / 2);
  std::vector<double> es(preds.size()), et(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    es[i] = diag * std::abs(preds[i].s - truths[i].s);
    et[i] = std::hypot(width * (preds[i].tx - truths[i].tx), height * (preds[i].ty - truths[i].ty)) / 2;
  }
  return {median(std::move(es)), median(std::move(et))};
}

double accuracy(double e_scale, double e_trans, double id_scale, double id_trans) {
  const double denom = id_scale + id_trans;
  if (!(denom > 0)) throw DomainError("accuracy: identity errors must be positive");
  return (1 - (e_scale + e_trans) / denom) * 100;
}

MetricErrors identity_baseline(const WarpRange& range, int width, int height, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ShapeError("identity_baseline: n must be >= 1");
  std::vector<WarpParamsd> truths(n), zeros(n, WarpParamsd::identity());
  for (std::size_t i = 0; i < n; ++i) truths[i] = sample_truth(range, derive_seed(seed, i, 3));
  return metric_errors(zeros, truths, width, height);
}

EstimatorSpec parse_estimator_spec(const std::string& text, const std::filesystem::path& base_dir) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  EstimatorSpec spec;
  spec.id = text;
  if (name == "identity") {
    spec.kind = EstimatorKind::identity();
    spec.cascade = CascadeConfig::single(WarpModel::PseudoSimilarity);
  } else if (name == "lk" || name == "lk-ssd") {
    LkOptions o;
    o.huber = name == "lk";
    spec.kind = EstimatorKind::lucas_kanade(o);
    spec.cascade = CascadeConfig::parse(arg.empty() ? "T*2,S*2" : arg);
  } else if (name == "fft") {
    spec.kind = EstimatorKind::fft_baseline();
    spec.cascade = CascadeConfig::parse(arg.empty() ? "PS*1" : arg);
  } else if (name == "cnn") {
    if (arg.empty()) throw DataError("estimator 'cnn' needs a weights file: cnn:PATH");
    std::filesystem::path p(arg);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    auto w = std::make_shared<const ModelWeights<float>>(load_model(p));
    spec.cascade = w->cascade;
    spec.kind = EstimatorKind::cnn(std::move(w));
  } else {
    throw DataError("unknown estimator '" + text + "' (expected identity, lk, lk-ssd, fft or cnn:PATH)");
  }
  return spec;
}

std::vector<std::string> split_estimator_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    item = item.substr(b, item.find_last_not_of(" \t") - b + 1);
    const std::string head = item.substr(0, item.find(':'));
    const bool starts = head == "identity" || head == "lk" || head == "lk-ssd" || head == "fft" || head == "cnn";
    if (!starts && !out.empty())
      out.back() += "," + item;
    else
      out.push_back(item);
  }
  return out;
}

SyntheticPair benchmark_pair(const Corpus& corpus, const WarpRange& range, std::uint64_t seed, std::size_t i) {
  if (corpus.size() == 0) throw DataError("empty corpus");
  return gen_pair(corpus.image(i % corpus.size()), range, derive_seed(seed, i, 7));
}

std::vector<BenchRecord> run_benchmark(const Corpus& corpus, const std::vector<EstimatorSpec>& estimators,
                                       const std::vector<WarpRange>& ranges, const BenchOptions& opts) {
  if (corpus.size() == 0) throw DataError("benchmark corpus is empty");
  if (opts.n_pairs == 0) throw DataError("benchmark needs at least one pair");
  std::vector<BenchRecord> out;
  for (const WarpRange& range : ranges) {
    range.validate();
    const std::size_t n = opts.n_pairs;
    std::vector<WarpParamsd> truths(n);
    for (std::size_t i = 0; i < n; ++i) truths[i] = sample_truth(range, derive_seed(derive_seed(opts.seed, i, 7), 1));
    const std::vector<WarpParamsd> zeros(n, WarpParamsd::identity());
    const MetricErrors id = metric_errors(zeros, truths, kPatchSize, kPatchSize);
    auto acc = [&](const MetricErrors& e) {
      try {
        return accuracy(e.e_scale, e.e_trans, id.e_scale, id.e_trans);
      } catch (const DomainError&) {
        return std::numeric_limits<double>::quiet_NaN();
      }
    };
    BenchRecord idrec{"identity", range.id, id.e_scale, id.e_trans, acc(id), n, 0, 0, -1.0, 0};
    if (opts.timing) idrec.ms_per_pair = 0.0;
    out.push_back(idrec);

    for (const EstimatorSpec& spec : estimators) {
      const auto est = make_block_estimator(spec.kind);
      std::vector<WarpParamsd> preds(n);
      std::vector<char> failed(n, 0);
      const auto t0 = std::chrono::steady_clock::now();
      parallel_for(n, [&](std::size_t i) {
        const SyntheticPair pair = benchmark_pair(corpus, range, opts.seed, i);
        try {
          preds[i] = cascade_estimate(pair.p1, pair.p2, spec.cascade, *est, opts.cascade).h;
          if (preds[i].model != WarpModel::PseudoSimilarity) preds[i] = project(preds[i], WarpModel::PseudoSimilarity);
        } catch (const std::exception&) {
          preds[i] = WarpParamsd::identity();
          failed[i] = 1;
        }
      });
      const auto t1 = std::chrono::steady_clock::now();
      const MetricErrors e = metric_errors(preds, truths, kPatchSize, kPatchSize);
      BenchRecord rec{spec.id, range.id, e.e_scale, e.e_trans, acc(e), n, 0, 0, -1.0, 0};
      if (spec.kind.type == EstimatorType::Cnn) {
        const ParamCount pc = count_params_flops(*spec.kind.weights);
        rec.params = pc.params;
        rec.flops = pc.flops;
      }
      if (opts.timing) rec.ms_per_pair = std::chrono::duration<double, std::milli>(t1 - t0).count() / n;
      rec.failures = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
      out.push_back(rec);
    }
  }
  return out;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << "estimator,gamma,e_scale_px,e_trans_px,accuracy_pct,n,params,flops,ms_per_pair,failures\n";
  for (const auto& r : records) {
    os << csv_field(r.estimator) << ',' << csv_field(r.gamma) << ',' << format_double(r.e_scale_px) << ',' << format_double(r.e_trans_px)
       << ',' << format_double(r.accuracy_pct) << ',' << r.n << ',' << r.params << ',' << r.flops << ','
       << (r.ms_per_pair < 0 ? std::string("NA") : format_double(r.ms_per_pair)) << ',' << r.failures << '\n';
  }
}

}  // namespace prgflow
