#pragma once

#include <Eigen/Geometry>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "prgflow/cascade.hpp"
#include "prgflow/estimator.hpp"
#include "prgflow/image.hpp"
#include "prgflow/sim.hpp"
#include "prgflow/warp.hpp"

namespace prgflow {

struct AttitudeState {
  Eigen::Quaterniond q{Eigen::Quaterniond::Identity()};  // world <- body
  double beta{0.1};
  double t_last{0.0};
};

// Body-frame image of a world reference direction d under q, written as a
// quadratic polynomial in the quaternion components (w, x, y, z).
Eigen::Vector3d rotate_to_body(const Eigen::Vector4d& q, const Eigen::Vector3d& d);
// d rotate_to_body / d (w, x, y, z); exact for the quadratic form.
Eigen::Matrix<double, 3, 4> rotate_to_body_jacobian(const Eigen::Vector4d& q, const Eigen::Vector3d& d);

// Gyro integration plus a normalized gradient step of size beta toward the
// attitude that maps gravity (world +z specific force) onto the accelerometer
// and the horizontal-north earth field onto the magnetometer.
AttitudeState madgwick_update(const AttitudeState& s, const Eigen::Vector3d& gyro, const Eigen::Vector3d& accel,
                              const Eigen::Vector3d& mag, double dt);

// Attitude from one accelerometer and magnetometer reading (world ENU, north +y).
Eigen::Quaterniond triad_attitude(const Eigen::Vector3d& accel, const Eigen::Vector3d& mag);

// Filters a whole IMU log; the first sample initializes by TRIAD.
std::vector<AttitudeState> filter_attitude(const std::vector<ImuRow>& imu, double beta = 0.1);

// K R_cb R(q_t)^T R(q_t1) R_bc K^-1: maps frame t+1 pixels to where they
// appear under frame t's orientation.
PixelWarpd derotate(const Eigen::Quaterniond& q_t, const Eigen::Quaterniond& q_t1, const CameraIntrinsics& k);

// Apparent ground velocity in the camera frame from a pseudo-similarity
// estimate: (tx_px Z / (fx dt), ty_px Z / (fy dt), -Z s / ((1 + s) dt)).
Eigen::Vector3d pixel_to_metric_velocity(const WarpParamsd& h, double z, const CameraIntrinsics& k, double dt,
                                         int patch_width, int patch_height);

struct OdometryState {
  double t{0};
  Eigen::Vector3d position{Eigen::Vector3d::Zero()};
};

struct VelocitySample {
  double t{0};
  Eigen::Vector3d v{Eigen::Vector3d::Zero()};
};

// Trapezoidal integration starting at `origin` at the first sample's time.
std::vector<OdometryState> dead_reckon(const std::vector<VelocitySample>& stream,
                                       const Eigen::Vector3d& origin = Eigen::Vector3d::Zero());

struct TrajectoryErrors {
  Eigen::Vector3d axis_mean_abs{Eigen::Vector3d::Zero()};
  double rmse{0};
  double length{0};
  std::size_t n{0};
};

// Rigid (no scale) alignment of est onto gt resampled at est times, then
// per-axis mean |error|, RMSE and gt path length over the overlap.
TrajectoryErrors align_and_rmse(const std::vector<TrajectorySample>& est, const std::vector<TrajectorySample>& gt);

// Random access to recorded or rendered frames.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t size() const = 0;
  virtual double time(std::size_t i) const = 0;
  virtual ImagePlane frame(std::size_t i) const = 0;
};

// frames.csv (index,t) plus frame_NNNNNN.png in one directory.
class DirectoryFrames final : public FrameSource {
 public:
  explicit DirectoryFrames(const std::filesystem::path& dir);
  std::size_t size() const override { return times_.size(); }
  double time(std::size_t i) const override { return times_.at(i); }
  ImagePlane frame(std::size_t i) const override;

 private:
  std::filesystem::path dir_;
  std::vector<double> times_;
};

// Frames rendered on demand from a simulated flight.
class RenderedFrames final : public FrameSource {
 public:
  RenderedFrames(const GroundPlane& ground, const Trajectory& traj, const CameraIntrinsics& k,
                 std::vector<double> times);
  std::size_t size() const override { return times_.size(); }
  double time(std::size_t i) const override { return times_.at(i); }
  ImagePlane frame(std::size_t i) const override;

 private:
  const GroundPlane& ground_;
  const Trajectory& traj_;
  CameraIntrinsics k_;
  std::vector<double> times_;
};

std::string frame_file_name(std::size_t index);

struct VioConfig {
  int stride{4};
  int patch{128};
  double beta{0.1};
  EstimatorKind estimator{EstimatorKind::lucas_kanade()};
  CascadeConfig cascade{CascadeConfig::single(WarpModel::PseudoSimilarity)};
};

struct VioResult {
  std::vector<TrajectorySample> trajectory;  // at frame-pair midpoints, plus the start
  std::vector<VelocitySample> velocities;
  std::size_t degenerate_steps{0};
};

// Per step: attitude from the filtered IMU, derotated center patches of frames
// i and i + stride, warp estimate, metric velocity from the altimeter, world
// velocity, dead-reckoning.
VioResult run_vio(const FrameSource& frames, const SensorLog& log, const CameraIntrinsics& k, const VioConfig& cfg);

void write_eval_csv(std::ostream& os, const std::vector<std::pair<std::string, TrajectoryErrors>>& rows);

}  // namespace prgflow
