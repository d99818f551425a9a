#include "prgflow/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "prgflow/corpus.hpp"
#include "prgflow/errors.hpp"
#include "prgflow/parallel.hpp"

namespace prgflow {
namespace {

constexpr double kPi = std::numbers::pi;

// Stateless standard normal draw (Box-Muller on two hashed uniforms).
double gaussian(std::uint64_t seed, std::uint64_t k) {
  const double u1 = (static_cast<double>(derive_seed(seed, k, 1) >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(derive_seed(seed, k, 2) >> 11) * 0x1.0p-53;
  return std::sqrt(-2 * std::log(u1)) * std::cos(2 * kPi * u2);
}

Eigen::Vector3d gaussian3(std::uint64_t seed, std::uint64_t k) {
  return {gaussian(seed, 3 * k), gaussian(seed, 3 * k + 1), gaussian(seed, 3 * k + 2)};
}

double smootherstep(double x) { return x * x * x * (10 + x * (-15 + 6 * x)); }

std::vector<double> sample_times(double duration, double rate) {
  if (!(duration > 0) || !(rate > 0)) throw DomainError("sampling needs positive duration and rate");
  std::vector<double> t;
  const auto n = static_cast<std::size_t>(std::floor(duration * rate + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) t.push_back(static_cast<double>(i) / rate);
  return t;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

}  // namespace

CameraIntrinsics CameraIntrinsics::defaults() {
  CameraIntrinsics k;
  k.width = 640;
  k.height = 480;
  const double half_diag = std::hypot(k.width, k.height) / 2;
  k.fx = k.fy = half_diag / std::tan(11.0 * kPi / 180.0);
  k.cx = k.width / 2.0;
  k.cy = k.height / 2.0;
  return k;
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d m;
  m << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return m;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw DomainError("camera focal lengths must be positive");
  if (width < 1 || height < 1) throw DomainError("camera image size must be positive");
  if (!(cx >= 0 && cx <= width && cy >= 0 && cy <= height)) throw DomainError("principal point outside the image");
}

Eigen::Matrix3d body_to_camera() { return Eigen::Vector3d(1, -1, -1).asDiagonal(); }

TrajectoryShape parse_shape(const std::string& name) {
  if (name == "circle") return TrajectoryShape::Circle;
  if (name == "moon") return TrajectoryShape::Moon;
  if (name == "line") return TrajectoryShape::Line;
  if (name == "figure8") return TrajectoryShape::Figure8;
  if (name == "square") return TrajectoryShape::Square;
  throw DataError("unknown trajectory shape '" + name + "' (expected circle, moon, line, figure8 or square)");
}

std::string shape_name(TrajectoryShape s) {
  switch (s) {
    case TrajectoryShape::Circle: return "circle";
    case TrajectoryShape::Moon: return "moon";
    case TrajectoryShape::Line: return "line";
    case TrajectoryShape::Figure8: return "figure8";
    case TrajectoryShape::Square: return "square";
  }
  return "?";
}

void TrajectoryParams::validate() const {
  if (!(duration > 0)) throw DomainError("trajectory duration must be positive");
  if (!(size >= 0)) throw DomainError("trajectory size must be nonnegative");
  if (!(rate > 0)) throw DomainError("trajectory rate must be positive");
  if (!(altitude - std::abs(altitude_amplitude) > 0)) throw DomainError("trajectory altitude must stay above zero");
  if (period <= 0 && !(mean_speed > 0)) throw DomainError("trajectory mean speed must be positive");
  if (!(max_speed > 0)) throw DomainError("trajectory speed cap must be positive");
}

Trajectory::Trajectory(const TrajectoryParams& p) : p_(p) {
  p_.validate();
  if (p_.period > 0) {
    period_ = p_.period;
  } else {
    // Length of one lap at unit period.
    period_ = 1.0;
    double len = 0;
    const int n = 20000;
    Eigen::Vector3d prev = horizontal(0);
    for (int i = 1; i <= n; ++i) {
      const Eigen::Vector3d cur = horizontal(static_cast<double>(i) / n);
      len += (cur.head<2>() - prev.head<2>()).norm();
      prev = cur;
    }
    period_ = len > 1e-12 ? len / p_.mean_speed : p_.duration;
  }
  const double peak = peak_speed();
  if (peak > p_.max_speed)
    throw DomainError("trajectory peak speed " + fmt(peak) + " m/s exceeds the cap of " + fmt(p_.max_speed) + " m/s");
}

Eigen::Vector3d Trajectory::horizontal(double t) const {
  const double u = t / period_;
  const double r = p_.size;
  const double c = std::cos(p_.yaw), s = std::sin(p_.yaw);
  auto rotated = [&](double x, double y) { return Eigen::Vector3d(c * x - s * y, s * x + c * y, p_.yaw); };
  switch (p_.shape) {
    case TrajectoryShape::Circle: {
      const double phi = 2 * kPi * u;
      return {r * std::sin(phi), r * (1 - std::cos(phi)), phi};
    }
    case TrajectoryShape::Moon: {
      const double phi = 0.75 * kPi * (1 - std::cos(2 * kPi * u));
      return {r * std::sin(phi), r * (1 - std::cos(phi)), phi};
    }
    case TrajectoryShape::Line: return rotated(0.5 * r * (1 - std::cos(2 * kPi * u)), 0.0);
    case TrajectoryShape::Figure8: {
      const double a = 2 * kPi * u;
      return {r * std::sin(a), 0.5 * r * std::sin(2 * a), std::atan2(std::cos(2 * a), std::cos(a))};
    }
    case TrajectoryShape::Square: {
      const double w = 4 * (u - std::floor(u));
      const int k = std::min(3, static_cast<int>(std::floor(w)));
      const double e = smootherstep(w - k);
      static constexpr double corners[5][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}};
      return rotated(r * (corners[k][0] + e * (corners[k + 1][0] - corners[k][0])),
                     r * (corners[k][1] + e * (corners[k + 1][1] - corners[k][1])));
    }
  }
  return Eigen::Vector3d::Zero();
}

Eigen::Vector3d Trajectory::position(double t) const {
  const Eigen::Vector3d h = horizontal(t);
  return {h(0), h(1), p_.altitude + p_.altitude_amplitude * std::sin(2 * kPi * t / period_)};
}

Eigen::Vector3d Trajectory::velocity(double t) const {
  auto d = [&](double h) -> Eigen::Vector3d { return (position(t + h) - position(t - h)) / (2 * h); };
  const double h = 1e-3;
  return (4 * d(h / 2) - d(h)) / 3;
}

Eigen::Vector3d Trajectory::acceleration(double t) const {
  auto d2 = [&](double h) -> Eigen::Vector3d { return (position(t + h) - 2 * position(t) + position(t - h)) / (h * h); };
  const double h = 1e-2;
  return (4 * d2(h / 2) - d2(h)) / 3;
}

Eigen::Quaterniond Trajectory::attitude(double t) const {
  const Eigen::Vector3d f = acceleration(t) + Eigen::Vector3d(0, 0, kGravity);
  const Eigen::Vector3d zb = f.normalized();
  double yaw = p_.yaw;
  const bool curved =
      p_.shape == TrajectoryShape::Circle || p_.shape == TrajectoryShape::Moon || p_.shape == TrajectoryShape::Figure8;
  // a zero-size path is a hover and keeps the fixed heading
  if (curved && p_.size > 0) yaw = horizontal(t)(2);
  const Eigen::Vector3d xc(std::cos(yaw), std::sin(yaw), 0);
  const Eigen::Vector3d yb = zb.cross(xc).normalized();
  Eigen::Matrix3d r;
  r.col(0) = yb.cross(zb);
  r.col(1) = yb;
  r.col(2) = zb;
  return Eigen::Quaterniond(r).normalized();
}

Eigen::Vector3d Trajectory::body_rate(double t) const {
  const double h = 5e-3;
  Eigen::Quaterniond dq = attitude(t - h).conjugate() * attitude(t + h);
  if (dq.w() < 0) dq.coeffs() = -dq.coeffs();
  const Eigen::AngleAxisd aa(dq);
  return aa.axis() * (aa.angle() / (2 * h));
}

TrajectorySample Trajectory::sample(double t) const { return {t, position(t), attitude(t)}; }

double Trajectory::peak_speed() const {
  double peak = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) peak = std::max(peak, velocity(period_ * i / n).norm());
  return peak;
}

std::vector<TrajectorySample> gen_trajectory(const TrajectoryParams& p) {
  const Trajectory traj(p);
  std::vector<TrajectorySample> out;
  for (double t : sample_times(p.duration, p.rate)) out.push_back(traj.sample(t));
  return out;
}

double path_length(const std::vector<TrajectorySample>& traj) {
  double len = 0;
  for (std::size_t i = 1; i < traj.size(); ++i) len += (traj[i].position - traj[i - 1].position).norm();
  return len;
}

GroundPlane make_ground(double x_min, double x_max, double y_min, double y_max, std::uint64_t seed,
                        double m_per_px) {
  if (!(m_per_px > 0) || !(x_max >= x_min) || !(y_max >= y_min)) throw DomainError("invalid ground extent");
  const double margin = 1.0;
  GroundPlane g;
  g.m_per_px = m_per_px;
  const int w = static_cast<int>(std::ceil((x_max - x_min + 2 * margin) / m_per_px));
  const int h = static_cast<int>(std::ceil((y_max - y_min + 2 * margin) / m_per_px));
  g.texture = procedural_texture(w, h, seed, 1, 24.0);
  g.origin_u = -(x_min - margin) / m_per_px;
  g.origin_v = -(y_min - margin) / m_per_px;
  return g;
}

Eigen::Matrix3d ground_to_image(const GroundPlane& g, const TrajectorySample& pose, const CameraIntrinsics& k) {
  const Eigen::Matrix3d r_cw = body_to_camera() * pose.attitude.toRotationMatrix().transpose();
  Eigen::Matrix3d plane;
  plane.col(0) = r_cw.col(0);
  plane.col(1) = r_cw.col(1);
  plane.col(2) = -r_cw * pose.position;
  Eigen::Matrix3d tex;
  tex << g.m_per_px, 0, -g.origin_u * g.m_per_px, 0, g.m_per_px, -g.origin_v * g.m_per_px, 0, 0, 1;
  return k.matrix() * plane * tex;
}

ImagePlane render_view(const GroundPlane& g, const TrajectorySample& pose, const CameraIntrinsics& k) {
  k.validate();
  if (!(pose.position.z() > 0)) throw DataError("render_view: camera must be above the ground plane");
  const Eigen::Matrix3d inv = ground_to_image(g, pose, k).inverse();
  const char* names[4] = {"top-left", "top-right", "bottom-left", "bottom-right"};
  const double xs[4] = {0, k.width - 1.0, 0, k.width - 1.0}, ys[4] = {0, 0, k.height - 1.0, k.height - 1.0};
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d q = inv * Eigen::Vector3d(xs[i], ys[i], 1);
    const double u = q(0) / q(2), v = q(1) / q(2);
    if (!(q(2) > 0) || u < 0 || v < 0 || u > g.texture.width() - 1 || v > g.texture.height() - 1)
      throw DataError(std::string("render_view: ") + names[i] + " image corner falls outside the ground texture");
  }
  return resample(g.texture, inv, k.width, k.height);
}

Eigen::Vector3d magnetic_north() { return {0, 1, 0}; }

std::vector<ImuRow> synth_imu(const Trajectory& traj, const ImuNoise& noise, std::uint64_t seed, double rate) {
  const std::vector<double> times = sample_times(traj.params().duration, rate);
  std::vector<ImuRow> rows(times.size());
  parallel_for(times.size(), [&](std::size_t i) {
    const double t = times[i];
    const Eigen::Matrix3d r_bw = traj.attitude(t).toRotationMatrix().transpose();
    ImuRow& row = rows[i];
    row.t = t;
    row.gyro = traj.body_rate(t) + noise.gyro_bias + noise.gyro * gaussian3(derive_seed(seed, 1), i);
    row.accel = r_bw * (traj.acceleration(t) - Eigen::Vector3d(0, 0, -kGravity)) + noise.accel_bias +
                noise.accel * gaussian3(derive_seed(seed, 2), i);
    row.mag = r_bw * magnetic_north() + noise.mag * gaussian3(derive_seed(seed, 3), i);
  });
  return rows;
}

std::vector<AltRow> synth_altimeter(const Trajectory& traj, double sigma, std::uint64_t seed, double rate) {
  if (!(sigma >= 0)) throw DomainError("altimeter noise must be nonnegative");
  std::vector<AltRow> rows;
  std::size_t i = 0;
  for (double t : sample_times(traj.params().duration, rate))
    rows.push_back({t, traj.position(t).z() + sigma * gaussian(derive_seed(seed, 4), i++)});
  return rows;
}

std::vector<double> camera_times(double duration, double rate) { return sample_times(duration, rate); }

Flight simulate_flight(const TrajectoryParams& p, const ImuNoise& noise, double altimeter_sigma, std::uint64_t seed,
                       double m_per_px) {
  Flight f{Trajectory(p), {}, {}, {}};
  f.gt = gen_trajectory(p);
  Eigen::Vector3d lo = f.gt.front().position, hi = lo;
  for (const auto& s : f.gt) {
    lo = lo.cwiseMin(s.position);
    hi = hi.cwiseMax(s.position);
  }
  const CameraIntrinsics k = CameraIntrinsics::defaults();
  const double half_diag = std::hypot(k.width, k.height) / 2.0 / k.fx;
  const double reach = hi.z() * half_diag * 1.5;
  f.ground = make_ground(lo.x() - reach, hi.x() + reach, lo.y() - reach, hi.y() + reach, derive_seed(seed, 11), m_per_px);
  f.log.imu = synth_imu(f.traj, noise, derive_seed(seed, 12));
  f.log.altimeter = synth_altimeter(f.traj, altimeter_sigma, derive_seed(seed, 13));
  f.log.camera_times = camera_times(p.duration);
  return f;
}

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, const std::string& header) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw DataError(path.string() + ": expected header '" + header + "'");
  const std::size_t cols = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() != cols)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) + " columns");
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_imu_csv(const std::filesystem::path& path, const std::vector<ImuRow>& rows) {
  auto os = open_out(path);
  os << "t,gx,gy,gz,ax,ay,az,mx,my,mz\n";
  for (const auto& r : rows) {
    os << fmt(r.t);
    for (const auto* v : {&r.gyro, &r.accel, &r.mag})
      for (int i = 0; i < 3; ++i) os << ',' << fmt((*v)(i));
    os << '\n';
  }
}

std::vector<ImuRow> read_imu_csv(const std::filesystem::path& path) {
  std::vector<ImuRow> out;
  for (const auto& r : read_numeric_csv(path, "t,gx,gy,gz,ax,ay,az,mx,my,mz"))
    out.push_back({r[0], {r[1], r[2], r[3]}, {r[4], r[5], r[6]}, {r[7], r[8], r[9]}});
  return out;
}

void write_alt_csv(const std::filesystem::path& path, const std::vector<AltRow>& rows) {
  auto os = open_out(path);
  os << "t,z\n";
  for (const auto& r : rows) os << fmt(r.t) << ',' << fmt(r.z) << '\n';
}

std::vector<AltRow> read_alt_csv(const std::filesystem::path& path) {
  std::vector<AltRow> out;
  for (const auto& r : read_numeric_csv(path, "t,z")) out.push_back({r[0], r[1]});
  return out;
}

void write_traj_csv(const std::filesystem::path& path, const std::vector<TrajectorySample>& traj) {
  auto os = open_out(path);
  os << "t,x,y,z,qw,qx,qy,qz\n";
  for (const auto& s : traj)
    os << fmt(s.t) << ',' << fmt(s.position.x()) << ',' << fmt(s.position.y()) << ',' << fmt(s.position.z()) << ','
       << fmt(s.attitude.w()) << ',' << fmt(s.attitude.x()) << ',' << fmt(s.attitude.y()) << ','
       << fmt(s.attitude.z()) << '\n';
}

std::vector<TrajectorySample> read_traj_csv(const std::filesystem::path& path) {
  std::vector<TrajectorySample> out;
  for (const auto& r : read_numeric_csv(path, "t,x,y,z,qw,qx,qy,qz"))
    out.push_back({r[0], {r[1], r[2], r[3]}, Eigen::Quaterniond(r[4], r[5], r[6], r[7]).normalized()});
  return out;
}

void write_camera_csv(const std::filesystem::path& path, const CameraIntrinsics& k) {
  auto os = open_out(path);
  os << "fx,fy,cx,cy,width,height\n"
     << fmt(k.fx) << ',' << fmt(k.fy) << ',' << fmt(k.cx) << ',' << fmt(k.cy) << ',' << k.width << ',' << k.height
     << '\n';
}

CameraIntrinsics read_camera_csv(const std::filesystem::path& path) {
  const auto rows = read_numeric_csv(path, "fx,fy,cx,cy,width,height");
  if (rows.size() != 1) throw DataError(path.string() + ": expected exactly one row");
  CameraIntrinsics k{rows[0][0], rows[0][1], rows[0][2], rows[0][3], static_cast<int>(rows[0][4]),
                     static_cast<int>(rows[0][5])};
  k.validate();
  return k;
}

}  // namespace prgflow
