#include "prgflow/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "prgflow/bench.hpp"
#include "prgflow/config.hpp"
#include "prgflow/corpus.hpp"
#include "prgflow/errors.hpp"
#include "prgflow/fft_align.hpp"
#include "prgflow/fusion.hpp"
#include "prgflow/image_io.hpp"
#include "prgflow/learner.hpp"
#include "prgflow/network.hpp"
#include "prgflow/parallel.hpp"
#include "prgflow/sim.hpp"

namespace fs = std::filesystem;

namespace prgflow {
namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  std::uint64_t seed{0};
  bool seed_given{false};
  int threads{0};
};

std::ofstream open_file(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

fs::path require_out(const Common& c, const std::string& cmd) {
  if (c.out.empty()) throw UsageError(cmd + ": --out DIR is required");
  fs::create_directories(c.out);
  return c.out;
}

void echo_config(const RunConfig& cfg, const Common& c) {
  if (c.out.empty()) return;
  fs::create_directories(c.out);
  auto os = open_file(fs::path(c.out) / "config.resolved.ini");
  cfg.write(os);
}

std::vector<int> parse_widths(const std::string& text) {
  if (text == "small") return small_widths();
  if (text == "large") return large_widths();
  std::vector<int> w;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      w.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw DataError("config key 'train.widths': expected small, large or a comma list, got '" + text + "'");
    }
  }
  if (w.empty()) throw DataError("config key 'train.widths' is empty");
  return w;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.adam.lr = cfg.get_double("train.lr");
  t.adam.beta1 = cfg.get_double("train.beta1");
  t.adam.beta2 = cfg.get_double("train.beta2");
  t.batch = cfg.get_int("train.batch");
  t.epochs = cfg.get_int("train.epochs");
  const std::string obj = cfg.get("loss.objective");
  if (obj == "supervised")
    t.objective = TrainObjective::Supervised;
  else if (obj == "unsupervised")
    t.objective = TrainObjective::Unsupervised;
  else
    throw DataError("config key 'loss.objective': expected supervised or unsupervised, got '" + obj + "'");
  t.loss = LossSpec::parse(cfg.get("loss.photometric"));
  t.gamma = WarpRange::parse(cfg.get("data.gamma"));
  t.patience = cfg.get_int("train.patience");
  t.seed = cfg.get_u64("run.seed");
  t.val_fraction = cfg.get_double("train.val_fraction");
  t.val_pairs = cfg.get_u64("train.val_pairs");
  t.input_channels = cfg.get_int("train.input_channels");
  t.widths = parse_widths(cfg.get("train.widths"));
  t.lambdas.teacher_truth = cfg.get_double("loss.lambda1");
  t.lambdas.student_truth = cfg.get_double("loss.lambda2");
  t.lambdas.teacher_student = cfg.get_double("loss.lambda3");
  t.validate();
  return t;
}

TrajectoryParams trajectory_params(const RunConfig& cfg) {
  TrajectoryParams p;
  p.shape = parse_shape(cfg.get("sim.shape"));
  p.size = cfg.get_double("sim.size");
  p.duration = cfg.get_double("sim.duration");
  p.period = cfg.get_double("sim.period");
  p.mean_speed = cfg.get_double("sim.mean_speed");
  p.max_speed = cfg.get_double("sim.max_speed");
  p.altitude = cfg.get_double("sim.altitude");
  p.altitude_amplitude = cfg.get_double("sim.altitude_amplitude");
  p.yaw = cfg.get_double("sim.yaw");
  p.validate();
  return p;
}

ImuNoise imu_noise(const RunConfig& cfg) {
  const std::string n = cfg.get("sim.noise");
  if (n == "default") return {};
  if (n == "none") return ImuNoise::none();
  throw DataError("config key 'sim.noise': expected default or none, got '" + n + "'");
}

std::unique_ptr<Corpus> corpus_from(const RunConfig& cfg) {
  return open_corpus(cfg.get("data.corpus"), cfg.get_int("data.channels"), cfg.get_u64("run.seed"));
}

EpochCallback progress(std::ostream& err) {
  return [&err](const EpochRecord& r) {
    err << "epoch " << r.epoch << " train " << std::setprecision(6) << r.train_loss << " val " << r.val_loss << '\n';
  };
}

int cmd_gen_data(const RunConfig& cfg, const Common& c, std::size_t n, std::ostream& out) {
  const fs::path dir = require_out(c, "gen-data");
  const auto corpus = corpus_from(cfg);
  const WarpRange range = WarpRange::parse(cfg.get("data.gamma"));
  const std::uint64_t seed = cfg.get_u64("run.seed");
  std::vector<WarpParamsd> truths(n);
  parallel_for(n, [&](std::size_t i) {
    const SyntheticPair p = benchmark_pair(*corpus, range, seed, i);
    char name[32];
    std::snprintf(name, sizeof name, "pair_%05zu", i);
    write_png(dir / (std::string(name) + "_p1.png"), p.p1);
    write_png(dir / (std::string(name) + "_p2.png"), p.p2);
    truths[i] = p.truth;
  });
  auto os = open_file(dir / "pairs.csv");
  os << "index,p1,p2,s,tx,ty\n" << std::setprecision(17);
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "pair_%05zu", i);
    os << i << ',' << name << "_p1.png," << name << "_p2.png," << truths[i].s << ',' << truths[i].tx << ','
       << truths[i].ty << '\n';
  }
  echo_config(cfg, c);
  out << "wrote " << n << " pairs to " << dir.string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, const Common& c, std::ostream& out, std::ostream& err) {
  const fs::path dir = require_out(c, "train");
  const auto corpus = corpus_from(cfg);
  const TrainConfig t = train_config(cfg);
  const CascadeConfig cascade = CascadeConfig::parse(cfg.get("cascade.blocks"));
  const TrainResult r = train(*corpus, t, cascade, progress(err));
  save_model(r.weights, dir / "model.prgw");
  auto os = open_file(dir / "history.csv");
  write_history_csv(os, r.history);
  echo_config(cfg, c);
  const ParamCount pc = count_params_flops(r.weights);
  out << "best epoch " << r.best_epoch << ", " << pc.params << " parameters, model " << (dir / "model.prgw").string()
      << '\n';
  return 0;
}

int cmd_bench(const RunConfig& cfg, const Common& c, std::ostream& out) {
  const auto corpus = corpus_from(cfg);
  std::vector<EstimatorSpec> specs;
  for (const std::string& s : split_estimator_list(cfg.get("bench.estimators")))
    specs.push_back(parse_estimator_spec(s));
  std::vector<WarpRange> ranges;
  std::stringstream rs(cfg.get("bench.ranges"));
  std::string item;
  while (std::getline(rs, item, ';'))
    if (const auto b = item.find_first_not_of(" \t"); b != std::string::npos)
      ranges.push_back(WarpRange::parse(item.substr(b, item.find_last_not_of(" \t") - b + 1)));
  if (ranges.empty()) throw DataError("config key 'bench.ranges' is empty");
  BenchOptions o;
  o.n_pairs = cfg.get_u64("bench.n");
  o.seed = cfg.get_u64("run.seed");
  o.timing = cfg.get_bool("bench.timing");
  const auto records = run_benchmark(*corpus, specs, ranges, o);
  std::ostringstream csv;
  write_bench_csv(csv, records);
  out << csv.str();
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    auto os = open_file(fs::path(c.out) / "bench.csv");
    os << csv.str();
    echo_config(cfg, c);
  }
  return 0;
}

int cmd_fft_align(const Common& c, const std::string& p1_path, const std::string& p2_path, bool scale,
                  std::ostream& out) {
  ImagePlane p1 = read_image(p1_path), p2 = read_image(p2_path);
  if (p1.channel_count() > 1) p1 = to_gray(p1);
  if (p2.channel_count() > 1) p2 = to_gray(p2);
  std::ostringstream csv;
  csv << std::setprecision(10);
  if (scale) {
    const FftScaleResult r = fft_scale_translation(p1, p2);
    csv << "s,tx,ty,tx_px,ty_px,confidence,low_confidence\n"
        << r.h.s << ',' << r.h.tx << ',' << r.h.ty << ',' << r.h.tx * p1.width() / 2.0 << ','
        << r.h.ty * p1.height() / 2.0 << ',' << std::min(r.scale_confidence, r.shift.confidence) << ','
        << (r.low_confidence ? 1 : 0) << '\n';
  } else {
    const FftShift r = fft_translation(p1, p2);
    csv << "dx_px,dy_px,confidence,low_confidence\n"
        << r.dx << ',' << r.dy << ',' << r.confidence << ',' << (r.low_confidence ? 1 : 0) << '\n';
  }
  out << csv.str();
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    auto os = open_file(fs::path(c.out) / "fft_align.csv");
    os << csv.str();
  }
  return 0;
}

int cmd_simflight(const RunConfig& cfg, const Common& c, std::ostream& out) {
  const fs::path dir = require_out(c, "simflight");
  const Flight f = simulate_flight(trajectory_params(cfg), imu_noise(cfg), cfg.get_double("sim.altimeter_sigma"),
                                   cfg.get_u64("run.seed"), cfg.get_double("sim.m_per_px"));
  const CameraIntrinsics k = CameraIntrinsics::defaults();
  write_traj_csv(dir / "gt.csv", f.gt);
  write_imu_csv(dir / "imu.csv", f.log.imu);
  write_alt_csv(dir / "alt.csv", f.log.altimeter);
  write_camera_csv(dir / "camera.csv", k);
  std::size_t written = 0;
  if (cfg.get_bool("sim.frames")) {
    const int stride = cfg.get_int("sim.frame_stride");
    if (stride < 1) throw DataError("config key 'sim.frame_stride' must be >= 1");
    std::vector<double> times;
    for (std::size_t i = 0; i < f.log.camera_times.size(); i += static_cast<std::size_t>(stride))
      times.push_back(f.log.camera_times[i]);
    parallel_for(times.size(), [&](std::size_t i) {
      write_png(dir / frame_file_name(i), render_view(f.ground, f.traj.sample(times[i]), k));
    });
    auto os = open_file(dir / "frames.csv");
    os << "index,t\n" << std::setprecision(17);
    for (std::size_t i = 0; i < times.size(); ++i) os << i << ',' << times[i] << '\n';
    written = times.size();
  }
  echo_config(cfg, c);
  out << "simulated " << shape_name(f.traj.params().shape) << " flight, " << f.gt.size() << " gt samples, "
      << written << " frames, path length " << std::setprecision(6) << path_length(f.gt) << " m\n";
  return 0;
}

VioConfig vio_config(const RunConfig& cfg) {
  VioConfig v;
  v.stride = cfg.get_int("fuse.stride");
  v.patch = cfg.get_int("fuse.patch");
  v.beta = cfg.get_double("fuse.beta");
  const EstimatorSpec spec = parse_estimator_spec(cfg.get("fuse.estimator"));
  v.estimator = spec.kind;
  v.cascade = spec.kind.type == EstimatorType::Cnn ? spec.cascade : CascadeConfig::parse(cfg.get("fuse.cascade"));
  return v;
}

void write_velocities(const fs::path& path, const std::vector<VelocitySample>& v) {
  auto os = open_file(path);
  os << "t,vx,vy,vz\n" << std::setprecision(10);
  for (const auto& s : v) os << s.t << ',' << s.v.x() << ',' << s.v.y() << ',' << s.v.z() << '\n';
}

int cmd_fuse(const RunConfig& cfg, const Common& c, const std::string& data, std::ostream& out) {
  if (data.empty()) throw UsageError("fuse: --data DIR is required");
  const fs::path dir = require_out(c, "fuse");
  const fs::path src(data);
  SensorLog log;
  log.imu = read_imu_csv(src / "imu.csv");
  log.altimeter = read_alt_csv(src / "alt.csv");
  const CameraIntrinsics k = read_camera_csv(src / "camera.csv");
  const DirectoryFrames frames(src);
  const VioResult r = run_vio(frames, log, k, vio_config(cfg));
  write_traj_csv(dir / "est.csv", r.trajectory);
  write_velocities(dir / "velocities.csv", r.velocities);
  if (fs::exists(src / "gt.csv")) {
    const TrajectoryErrors e = align_and_rmse(r.trajectory, read_traj_csv(src / "gt.csv"));
    std::ostringstream csv;
    write_eval_csv(csv, {{"est", e}});
    auto os = open_file(dir / "eval.csv");
    os << csv.str();
    out << csv.str();
  }
  echo_config(cfg, c);
  out << r.trajectory.size() << " poses, " << r.degenerate_steps << " held steps\n";
  return 0;
}

int cmd_eval_traj(const Common& c, const std::string& est, const std::string& gt, const std::string& name,
                  std::ostream& out) {
  if (est.empty() || gt.empty()) throw UsageError("eval-traj: --est FILE and --gt FILE are required");
  const TrajectoryErrors e = align_and_rmse(read_traj_csv(est), read_traj_csv(gt));
  std::ostringstream csv;
  write_eval_csv(csv, {{name, e}});
  out << csv.str();
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    auto os = open_file(fs::path(c.out) / "eval.csv");
    os << csv.str();
  }
  return 0;
}

int cmd_compress(const RunConfig& cfg, const Common& c, std::ostream& out, std::ostream& err) {
  const fs::path dir = require_out(c, "compress");
  const auto corpus = corpus_from(cfg);
  const TrainConfig t = train_config(cfg);
  const CompressionMode mode = parse_compression_mode(cfg.get("train.mode"));
  const CascadeConfig cascade = CascadeConfig::parse(cfg.get("cascade.blocks"));
  const std::string sb = cfg.get("train.student_blocks");
  const CascadeConfig student_cascade = sb.empty() ? cascade : CascadeConfig::parse(sb);

  ModelWeights<float> teacher;
  if (!cfg.get("train.teacher").empty()) {
    teacher = load_model(cfg.get("train.teacher"));
  } else {
    err << "training teacher (large widths)\n";
    TrainConfig tt = t;
    tt.widths = large_widths();
    teacher = train(*corpus, tt, cascade, progress(err)).weights;
    save_model(teacher, dir / "teacher.prgw");
  }
  const TrainResult r = train_student(teacher, mode, *corpus, t, student_cascade, progress(err));
  save_model(r.weights, dir / "student.prgw");
  auto hs = open_file(dir / "history.csv");
  write_history_csv(hs, r.history);

  const ParamCount pt = count_params_flops(teacher), ps = count_params_flops(r.weights);
  std::ostringstream csv;
  csv << "model,params,flops\nteacher," << pt.params << ',' << pt.flops << "\nstudent," << ps.params << ','
      << ps.flops << '\n';
  auto os = open_file(dir / "params.csv");
  os << csv.str();
  echo_config(cfg, c);
  out << csv.str() << "compression " << std::setprecision(4)
      << static_cast<double>(pt.params) / static_cast<double>(ps.params) << "x\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"prgflow: warp estimation, synthetic benchmarks and visual-inertial odometry"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  app.add_option("--config", c.config, "config file (key = value, [section] headers)");
  app.add_option("--out", c.out, "output directory");
  app.add_option("--set", c.sets, "override a config key: section.key=value");
  auto* seed_opt = app.add_option("--seed", c.seed, "master seed");
  app.add_option("--threads", c.threads, "worker threads (default: PRGFLOW_THREADS or 1)")->check(CLI::PositiveNumber);

  std::string corpus, estimators, ranges, data, est, gt, name = "est", p1, p2, teacher, mode, shape;
  std::size_t n = 0, n_pairs = 16;
  int epochs = 0;
  bool fft_scale = false;

  auto* gen = app.add_subcommand("gen-data", "export synthetic image pairs");
  gen->add_option("--n", n_pairs, "number of pairs")->capture_default_str();
  gen->add_option("--corpus", corpus, "image directory or procedural:N[:SIZE]");

  auto* tr = app.add_subcommand("train", "train a cascade of regression blocks");
  tr->add_option("--corpus", corpus, "image directory or procedural:N[:SIZE]");
  tr->add_option("--epochs", epochs, "training epochs");

  auto* be = app.add_subcommand("bench", "synthetic warp benchmark report");
  be->add_option("--n", n, "pairs per warp range");
  be->add_option("--estimators", estimators, "identity, lk[:CASCADE], lk-ssd, fft[:CASCADE], cnn:WEIGHTS");
  be->add_option("--ranges", ranges, "gamma1, gamma2 or S,TX,TY ranges, ';' separated");
  be->add_option("--corpus", corpus, "image directory or procedural:N[:SIZE]");

  auto* fa = app.add_subcommand("fft-align", "phase-correlation alignment of two images");
  fa->add_option("p1", p1, "first image")->required();
  fa->add_option("p2", p2, "second image")->required();
  fa->add_flag("--scale", fft_scale, "also recover isotropic scale (log-polar)");

  auto* sf = app.add_subcommand("simflight", "simulate a flight: gt, imu, altimeter, camera frames");
  sf->add_option("--shape", shape, "circle, moon, line, figure8 or square");

  auto* fu = app.add_subcommand("fuse", "visual-inertial odometry on a recorded or simulated flight");
  fu->add_option("--data", data, "directory with imu.csv, alt.csv, camera.csv, frames.csv and frames");

  auto* ev = app.add_subcommand("eval-traj", "align an estimated trajectory to ground truth and report errors");
  ev->add_option("--est", est, "estimated trajectory CSV");
  ev->add_option("--gt", gt, "ground-truth trajectory CSV");
  ev->add_option("--name", name, "row label");

  auto* co = app.add_subcommand("compress", "train a compressed student from a teacher");
  co->add_option("--teacher", teacher, "teacher weights (trained first when omitted)");
  co->add_option("--mode", mode, "scratch, projection or distill");
  co->add_option("--corpus", corpus, "image directory or procedural:N[:SIZE]");
  co->add_option("--epochs", epochs, "training epochs");

  std::vector<std::string> storage = args;
  storage.insert(storage.begin(), "prgflow");
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nrun 'prgflow --help' for usage\n";
    return 1;
  }
  c.seed_given = seed_opt->count() > 0;

  try {
    if (c.threads > 0) set_thread_count(c.threads);
    RunConfig cfg;
    if (!c.config.empty()) cfg.merge_file(c.config);
    const fs::path cwd = fs::current_path();
    if (!corpus.empty()) cfg.set("data.corpus", corpus, cwd);
    if (epochs > 0) cfg.set("train.epochs", std::to_string(epochs));
    if (n > 0) cfg.set("bench.n", std::to_string(n));
    if (!estimators.empty()) cfg.set("bench.estimators", estimators, cwd);
    if (!ranges.empty()) cfg.set("bench.ranges", ranges);
    if (!shape.empty()) cfg.set("sim.shape", shape);
    if (!teacher.empty()) cfg.set("train.teacher", teacher, cwd);
    if (!mode.empty()) cfg.set("train.mode", mode);
    for (const std::string& s : c.sets) cfg.set_assignment(s, cwd);
    if (c.seed_given) cfg.set("run.seed", std::to_string(c.seed));

    if (gen->parsed()) return cmd_gen_data(cfg, c, n_pairs, out);
    if (tr->parsed()) return cmd_train(cfg, c, out, err);
    if (be->parsed()) return cmd_bench(cfg, c, out);
    if (fa->parsed()) return cmd_fft_align(c, p1, p2, fft_scale, out);
    if (sf->parsed()) return cmd_simflight(cfg, c, out);
    if (fu->parsed()) return cmd_fuse(cfg, c, data, out);
    if (ev->parsed()) return cmd_eval_traj(c, est, gt, name, out);
    if (co->parsed()) return cmd_compress(cfg, c, out, err);
    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\nrun 'prgflow --help' for usage\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace prgflow
