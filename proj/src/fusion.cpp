#include "prgflow/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <Eigen/Geometry>

#include "prgflow/errors.hpp"
#include "prgflow/image_io.hpp"
#include "prgflow/lk.hpp"

namespace prgflow {
namespace {

Eigen::Vector4d as_vec(const Eigen::Quaterniond& q) { return {q.w(), q.x(), q.y(), q.z()}; }
Eigen::Quaterniond as_quat(const Eigen::Vector4d& v) { return Eigen::Quaterniond(v(0), v(1), v(2), v(3)); }

// Quaternion attitude at time t by slerp between filtered IMU samples.
Eigen::Quaterniond attitude_at(const std::vector<ImuRow>& imu, const std::vector<AttitudeState>& att, double t) {
  if (t <= imu.front().t) return att.front().q;
  if (t >= imu.back().t) return att.back().q;
  const auto it = std::upper_bound(imu.begin(), imu.end(), t, [](double v, const ImuRow& r) { return v < r.t; });
  const std::size_t j = static_cast<std::size_t>(it - imu.begin()), i = j - 1;
  const double span = imu[j].t - imu[i].t;
  const double a = span > 0 ? (t - imu[i].t) / span : 0.0;
  return att[i].q.slerp(a, att[j].q).normalized();
}

double altitude_at(const std::vector<AltRow>& alt, double t) {
  if (alt.empty() || t < alt.front().t - 1e-9 || t > alt.back().t + 1e-9) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "altimeter log does not cover t = %.4f s", t);
    throw DataError(buf);
  }
  if (t <= alt.front().t) return alt.front().z;
  if (t >= alt.back().t) return alt.back().z;
  const auto it = std::upper_bound(alt.begin(), alt.end(), t, [](double v, const AltRow& r) { return v < r.t; });
  const std::size_t j = static_cast<std::size_t>(it - alt.begin()), i = j - 1;
  const double a = (t - alt[i].t) / (alt[j].t - alt[i].t);
  return (1 - a) * alt[i].z + a * alt[j].z;
}

}  // namespace

Eigen::Vector3d rotate_to_body(const Eigen::Vector4d& q, const Eigen::Vector3d& d) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  return {(1 - 2 * (y * y + z * z)) * d(0) + 2 * (x * y + w * z) * d(1) + 2 * (x * z - w * y) * d(2),
          2 * (x * y - w * z) * d(0) + (1 - 2 * (x * x + z * z)) * d(1) + 2 * (y * z + w * x) * d(2),
          2 * (x * z + w * y) * d(0) + 2 * (y * z - w * x) * d(1) + (1 - 2 * (x * x + y * y)) * d(2)};
}

Eigen::Matrix<double, 3, 4> rotate_to_body_jacobian(const Eigen::Vector4d& q, const Eigen::Vector3d& d) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  const double dx = d(0), dy = d(1), dz = d(2);
  Eigen::Matrix<double, 3, 4> j;
  j << 2 * (z * dy - y * dz), 2 * (y * dy + z * dz), -4 * y * dx + 2 * x * dy - 2 * w * dz,
      -4 * z * dx + 2 * w * dy + 2 * x * dz,
      2 * (x * dz - z * dx), 2 * y * dx - 4 * x * dy + 2 * w * dz, 2 * x * dx + 2 * z * dz,
      -2 * w * dx - 4 * z * dy + 2 * y * dz,
      2 * (y * dx - x * dy), 2 * z * dx - 2 * w * dy - 4 * x * dz, 2 * w * dx + 2 * z * dy - 4 * y * dz,
      2 * x * dx + 2 * y * dy;
  return j;
}

AttitudeState madgwick_update(const AttitudeState& s, const Eigen::Vector3d& gyro, const Eigen::Vector3d& accel,
                              const Eigen::Vector3d& mag, double dt) {
  if (!(dt > 0)) throw DomainError("madgwick_update: dt must be positive");
  const Eigen::Vector4d q = as_vec(s.q);
  Eigen::Vector4d qdot = 0.5 * as_vec(s.q * Eigen::Quaterniond(0, gyro.x(), gyro.y(), gyro.z()));
  const double an = accel.norm();
  if (an > 0) {
    const Eigen::Vector3d a = accel / an;
    const Eigen::Vector3d up(0, 0, 1);
    Eigen::Vector4d grad = rotate_to_body_jacobian(q, up).transpose() * (rotate_to_body(q, up) - a);
    const double mn = mag.norm();
    if (mn > 0) {
      const Eigen::Vector3d m = mag / mn;
      const Eigen::Vector3d h = s.q * m;  // measured field in the world frame
      const Eigen::Vector3d b(0, std::hypot(h.x(), h.y()), h.z());
      grad += rotate_to_body_jacobian(q, b).transpose() * (rotate_to_body(q, b) - m);
    }
    const double gn = grad.norm();
    if (gn > 0) qdot -= s.beta * grad / gn;
  }
  AttitudeState out = s;
  out.q = as_quat(q + qdot * dt).normalized();
  out.t_last = s.t_last + dt;
  return out;
}

Eigen::Quaterniond triad_attitude(const Eigen::Vector3d& accel, const Eigen::Vector3d& mag) {
  if (!(accel.norm() > 0) || !(mag.norm() > 0)) throw DegenerateError("triad: zero accelerometer or magnetometer");
  const Eigen::Vector3d up = accel.normalized();
  const Eigen::Vector3d east = mag.cross(up);
  if (!(east.norm() > 1e-9)) throw DegenerateError("triad: magnetic field parallel to gravity");
  const Eigen::Vector3d e = east.normalized();
  const Eigen::Vector3d n = up.cross(e);
  Eigen::Matrix3d r_wb;
  r_wb.row(0) = e.transpose();
  r_wb.row(1) = n.transpose();
  r_wb.row(2) = up.transpose();
  return Eigen::Quaterniond(r_wb).normalized();
}

std::vector<AttitudeState> filter_attitude(const std::vector<ImuRow>& imu, double beta) {
  if (imu.empty()) throw DataError("IMU log is empty");
  std::vector<AttitudeState> out;
  out.reserve(imu.size());
  out.push_back({triad_attitude(imu[0].accel, imu[0].mag), beta, imu[0].t});
  for (std::size_t k = 1; k < imu.size(); ++k) {
    const double dt = imu[k].t - imu[k - 1].t;
    if (!(dt > 0)) throw DataError("IMU timestamps must be strictly increasing");
    out.push_back(madgwick_update(out.back(), imu[k].gyro, imu[k].accel, imu[k].mag, dt));
  }
  return out;
}

PixelWarpd derotate(const Eigen::Quaterniond& q_t, const Eigen::Quaterniond& q_t1, const CameraIntrinsics& k) {
  PixelWarpd w;
  w.width = k.width;
  w.height = k.height;
  w.m.setIdentity();
  if (q_t.coeffs() == q_t1.coeffs()) return w;
  const Eigen::Matrix3d rcb = body_to_camera();
  const Eigen::Matrix3d r = rcb * q_t.toRotationMatrix().transpose() * q_t1.toRotationMatrix() * rcb.transpose();
  const Eigen::Matrix3d km = k.matrix();
  w.m = km * r * km.inverse();
  w.m /= w.m(2, 2);
  return w;
}

Eigen::Vector3d pixel_to_metric_velocity(const WarpParamsd& h, double z, const CameraIntrinsics& k, double dt,
                                         int patch_width, int patch_height) {
  if (!(z > 0)) throw DomainError("pixel_to_metric_velocity: altitude must be positive");
  if (!(dt > 0)) throw DomainError("pixel_to_metric_velocity: dt must be positive");
  if (!h.invertible()) throw DomainError("pixel_to_metric_velocity: 1 + s must be positive");
  const double tx_px = h.tx * patch_width / 2.0, ty_px = h.ty * patch_height / 2.0;
  return {tx_px * z / (k.fx * dt), ty_px * z / (k.fy * dt), -z * h.s / ((1 + h.s) * dt)};
}

std::vector<OdometryState> dead_reckon(const std::vector<VelocitySample>& stream, const Eigen::Vector3d& origin) {
  std::vector<OdometryState> out;
  if (stream.empty()) return out;
  out.push_back({stream[0].t, origin});
  for (std::size_t k = 1; k < stream.size(); ++k) {
    const double dt = stream[k].t - stream[k - 1].t;
    if (!(dt >= 0)) throw DataError("dead_reckon: timestamps must be monotone");
    out.push_back({stream[k].t, out.back().position + 0.5 * (stream[k - 1].v + stream[k].v) * dt});
  }
  return out;
}

TrajectoryErrors align_and_rmse(const std::vector<TrajectorySample>& est, const std::vector<TrajectorySample>& gt) {
  if (gt.size() < 2) throw DataError("align_and_rmse: ground truth needs at least two samples");
  std::vector<Eigen::Vector3d> e, g;
  std::vector<double> used_t;
  for (const auto& s : est) {
    if (s.t < gt.front().t - 1e-9 || s.t > gt.back().t + 1e-9) continue;
    const auto it = std::lower_bound(gt.begin(), gt.end(), s.t, [](const TrajectorySample& r, double v) { return r.t < v; });
    Eigen::Vector3d p;
    if (it == gt.begin()) {
      p = gt.front().position;
    } else if (it == gt.end()) {
      p = gt.back().position;
    } else {
      const auto& b = *it;
      const auto& a = *(it - 1);
      const double span = b.t - a.t;
      const double w = span > 0 ? (s.t - a.t) / span : 0.0;
      p = (1 - w) * a.position + w * b.position;
    }
    e.push_back(s.position);
    g.push_back(p);
    used_t.push_back(s.t);
  }
  if (e.size() < 3) throw DataError("align_and_rmse: fewer than 3 overlapping samples");
  const Eigen::Index n = static_cast<Eigen::Index>(e.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = e[i];
    dst.col(i) = g[i];
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
  const Eigen::Matrix3Xd aligned = (t.topLeftCorner<3, 3>() * src).colwise() + t.topRightCorner<3, 1>();
  const Eigen::Matrix3Xd err = aligned - dst;

  TrajectoryErrors out;
  out.n = static_cast<std::size_t>(n);
  out.axis_mean_abs = err.cwiseAbs().rowwise().mean();
  out.rmse = std::sqrt(err.colwise().squaredNorm().mean());
  const double t0 = used_t.front(), t1 = used_t.back();
  for (std::size_t i = 1; i < gt.size(); ++i)
    if (gt[i - 1].t >= t0 - 1e-9 && gt[i].t <= t1 + 1e-9) out.length += (gt[i].position - gt[i - 1].position).norm();
  return out;
}

std::string frame_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.png", index);
  return buf;
}

DirectoryFrames::DirectoryFrames(const std::filesystem::path& dir) : dir_(dir) {
  const auto rows = read_numeric_csv(dir / "frames.csv", "index,t");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i][0] != static_cast<double>(i)) throw DataError((dir / "frames.csv").string() + ": indices must be 0..N-1");
    if (i && !(rows[i][1] > rows[i - 1][1])) throw DataError((dir / "frames.csv").string() + ": times must increase");
    times_.push_back(rows[i][1]);
  }
}

ImagePlane DirectoryFrames::frame(std::size_t i) const { return read_image(dir_ / frame_file_name(i)); }

RenderedFrames::RenderedFrames(const GroundPlane& ground, const Trajectory& traj, const CameraIntrinsics& k,
                               std::vector<double> times)
    : ground_(ground), traj_(traj), k_(k), times_(std::move(times)) {}

ImagePlane RenderedFrames::frame(std::size_t i) const { return render_view(ground_, traj_.sample(times_.at(i)), k_); }

VioResult run_vio(const FrameSource& frames, const SensorLog& log, const CameraIntrinsics& k, const VioConfig& cfg) {
  k.validate();
  if (cfg.stride < 1) throw DomainError("run_vio: stride must be >= 1");
  if (cfg.patch < 16) throw DomainError("run_vio: patch must be at least 16 px");
  if (frames.size() < static_cast<std::size_t>(cfg.stride) + 1) throw DataError("run_vio: not enough frames");
  if (log.imu.empty()) throw DataError("run_vio: IMU log is empty");
  if (log.altimeter.empty()) throw DataError("run_vio: altimeter log is empty");
  const int ox = static_cast<int>(std::lround(k.cx - cfg.patch / 2.0));
  const int oy = static_cast<int>(std::lround(k.cy - cfg.patch / 2.0));
  if (ox < 0 || oy < 0 || ox + cfg.patch > k.width || oy + cfg.patch > k.height)
    throw DomainError("run_vio: patch does not fit around the principal point");

  const std::vector<AttitudeState> att = filter_attitude(log.imu, cfg.beta);
  const bool plain_lk = cfg.estimator.type == EstimatorType::LucasKanade && cfg.cascade.size() == 1 &&
                        cfg.cascade.blocks[0] == WarpModel::PseudoSimilarity;
  const auto block_est = plain_lk ? nullptr : make_block_estimator(cfg.estimator);
  Eigen::Matrix3d shift = Eigen::Matrix3d::Identity();
  shift(0, 2) = ox;
  shift(1, 2) = oy;

  VioResult res;
  WarpParamsd h_prev = WarpParamsd::identity();
  Eigen::Vector3d v_prev = Eigen::Vector3d::Zero();
  bool have_v = false;
  std::vector<VelocitySample> stream;
  auto gray = [](ImagePlane img) { return img.channel_count() == 1 ? img : to_gray(img); };
  ImagePlane f_i = gray(frames.frame(0));
  const std::size_t step = static_cast<std::size_t>(cfg.stride);
  for (std::size_t i = 0; i + step < frames.size(); i += step) {
    const std::size_t j = i + step;
    const double ti = frames.time(i), tj = frames.time(j);
    ImagePlane f_j = gray(frames.frame(j));
    const Eigen::Quaterniond qi = attitude_at(log.imu, att, ti), qj = attitude_at(log.imu, att, tj);
    const PixelWarpd d = derotate(qi, qj, k);
    const ImagePlane p1 = crop(f_i, ox, oy, cfg.patch, cfg.patch);
    const ImagePlane p2 = resample(f_j, d.m.inverse() * shift, cfg.patch, cfg.patch);

    bool degenerate = false;
    WarpParamsd h;
    try {
      if (plain_lk) {
        const LkResult r = lk_refine(p1, p2, h_prev, cfg.estimator.lk);
        h = r.h;
        degenerate = r.degenerate;
      } else {
        const CascadeResult r = cascade_estimate(p1, p2, cfg.cascade, *block_est);
        h = project(r.h, WarpModel::PseudoSimilarity);
        degenerate = r.degenerate_blocks == static_cast<int>(cfg.cascade.size());
      }
    } catch (const DegenerateError&) {
      degenerate = true;
    } catch (const DomainError&) {
      degenerate = true;
    }

    const double t_mid = 0.5 * (ti + tj);
    Eigen::Vector3d v_world;
    if (degenerate) {
      ++res.degenerate_steps;
      v_world = v_prev;
    } else {
      const Eigen::Matrix3d r_wb = qi.toRotationMatrix();
      const double tilt = std::max(r_wb(2, 2), 0.1);  // cos(roll) cos(pitch)
      const double z_eff = altitude_at(log.altimeter, t_mid) / tilt;
      const Eigen::Vector3d v_app = pixel_to_metric_velocity(h, z_eff, k, tj - ti, cfg.patch, cfg.patch);
      const Eigen::Vector3d v_cam(-v_app.x(), -v_app.y(), -v_app.z());
      v_world = r_wb * body_to_camera().transpose() * v_cam;
      h_prev = h;
    }
    if (!have_v) {
      stream.push_back({ti, v_world});
      have_v = true;
    }
    stream.push_back({t_mid, v_world});
    res.velocities.push_back({t_mid, v_world});
    v_prev = v_world;
    f_i = std::move(f_j);
  }

  const Eigen::Vector3d origin(0, 0, altitude_at(log.altimeter, stream.front().t));
  for (const OdometryState& s : dead_reckon(stream, origin))
    res.trajectory.push_back({s.t, s.position, attitude_at(log.imu, att, s.t)});
  return res;
}

void write_eval_csv(std::ostream& os, const std::vector<std::pair<std::string, TrajectoryErrors>>& rows) {
  os << "trajectory,err_x,err_y,err_z,rmse,length_m,rmse_pct\n";
  os << std::setprecision(10);
  for (const auto& [name, e] : rows)
    os << name << ',' << e.axis_mean_abs.x() << ',' << e.axis_mean_abs.y() << ',' << e.axis_mean_abs.z() << ','
       << e.rmse << ',' << e.length << ',' << (e.length > 0 ? 100 * e.rmse / e.length : 0.0) << '\n';
}

}  // namespace prgflow
