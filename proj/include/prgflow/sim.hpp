#pragma once

// World frame is ENU with gravity along -z; body x forward, y left, z up. The
// camera looks along body -z (camera x = body x, camera y = -body y).

#include <Eigen/Geometry>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "prgflow/image.hpp"

namespace prgflow {

inline constexpr double kGravity = 9.81;

struct CameraIntrinsics {
  double fx{0}, fy{0}, cx{0}, cy{0};
  int width{0}, height{0};

  // 640x480 with a 22 degree diagonal field of view.
  static CameraIntrinsics defaults();
  Eigen::Matrix3d matrix() const;
  void validate() const;
};

// Body-to-camera rotation (and its transpose, camera-to-body).
Eigen::Matrix3d body_to_camera();

struct TrajectorySample {
  double t{0};
  Eigen::Vector3d position{Eigen::Vector3d::Zero()};
  Eigen::Quaterniond attitude{Eigen::Quaterniond::Identity()};  // world <- body
};

enum class TrajectoryShape { Circle, Moon, Line, Figure8, Square };
TrajectoryShape parse_shape(const std::string& name);
std::string shape_name(TrajectoryShape s);

struct TrajectoryParams {
  TrajectoryShape shape{TrajectoryShape::Circle};
  double size{1.5};         // radius (circle, moon), length (line), side (square), half-width (figure8)
  double period{0.0};       // one lap; <= 0 picks the period giving mean_speed
  double mean_speed{0.5};   // m/s, used when period <= 0
  double max_speed{1.5};    // speed cap, m/s
  double altitude{3.0};
  double altitude_amplitude{0.3};  // sinusoid over one period
  double duration{60.0};
  double rate{100.0};       // samples per second for gen_trajectory
  double yaw{0.0};          // heading for line and square

  void validate() const;
};

// Smooth analytic flight path. Attitude tilts the body z axis along the
// specific force a + g and turns the nose along the path (circle, moon,
// figure8) or keeps the fixed yaw (line, square).
class Trajectory {
 public:
  explicit Trajectory(const TrajectoryParams& p);

  const TrajectoryParams& params() const { return p_; }
  double period() const { return period_; }

  Eigen::Vector3d position(double t) const;
  Eigen::Vector3d velocity(double t) const;
  Eigen::Vector3d acceleration(double t) const;
  Eigen::Quaterniond attitude(double t) const;
  Eigen::Vector3d body_rate(double t) const;  // angular velocity in the body frame
  TrajectorySample sample(double t) const;
  double peak_speed() const;

 private:
  Eigen::Vector3d horizontal(double t) const;  // x, y, heading
  TrajectoryParams p_;
  double period_{1.0};
};

// Samples at params.rate over [0, duration].
std::vector<TrajectorySample> gen_trajectory(const TrajectoryParams& p);

double path_length(const std::vector<TrajectorySample>& traj);

// Ground texture placed on z = 0: world (x, y) = (u - origin_u, v - origin_v) * m_per_px.
struct GroundPlane {
  ImagePlane texture;
  double m_per_px{0.002};
  double origin_u{0.0};
  double origin_v{0.0};
};

// Procedural ground covering the given world rectangle plus margin.
GroundPlane make_ground(double x_min, double x_max, double y_min, double y_max, std::uint64_t seed,
                        double m_per_px = 0.002);

// Plane-induced homography from ground texture pixels to image pixels.
Eigen::Matrix3d ground_to_image(const GroundPlane& g, const TrajectorySample& pose, const CameraIntrinsics& k);

// Throws DataError naming the corner whose ray leaves the texture.
ImagePlane render_view(const GroundPlane& g, const TrajectorySample& pose, const CameraIntrinsics& k);

struct ImuNoise {
  double gyro{0.005};
  double accel{0.05};
  double mag{0.01};
  Eigen::Vector3d gyro_bias{Eigen::Vector3d::Zero()};
  Eigen::Vector3d accel_bias{Eigen::Vector3d::Zero()};

  static ImuNoise none() { return {0, 0, 0, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()}; }
};

struct ImuRow {
  double t{0};
  Eigen::Vector3d gyro, accel, mag;
};

struct AltRow {
  double t{0};
  double z{0};
};

struct SensorLog {
  std::vector<ImuRow> imu;
  std::vector<AltRow> altimeter;
  std::vector<double> camera_times;
};

inline constexpr double kImuRate = 100.0;
inline constexpr double kAltimeterRate = 20.0;
inline constexpr double kCameraRate = 90.0;

// World magnetic reference: unit north (+y).
Eigen::Vector3d magnetic_north();

std::vector<ImuRow> synth_imu(const Trajectory& traj, const ImuNoise& noise, std::uint64_t seed,
                              double rate = kImuRate);
std::vector<AltRow> synth_altimeter(const Trajectory& traj, double sigma, std::uint64_t seed,
                                    double rate = kAltimeterRate);
std::vector<double> camera_times(double duration, double rate = kCameraRate);

// A complete simulated flight: trajectory, gt samples at the IMU rate, ground
// covering the path, and noisy sensor logs.
struct Flight {
  Trajectory traj;
  std::vector<TrajectorySample> gt;
  GroundPlane ground;
  SensorLog log;
};

Flight simulate_flight(const TrajectoryParams& p, const ImuNoise& noise, double altimeter_sigma, std::uint64_t seed,
                       double m_per_px = 0.002);

// --- CSV I/O -----------------------------------------------------------------

void write_imu_csv(const std::filesystem::path& path, const std::vector<ImuRow>& rows);
std::vector<ImuRow> read_imu_csv(const std::filesystem::path& path);
void write_alt_csv(const std::filesystem::path& path, const std::vector<AltRow>& rows);
std::vector<AltRow> read_alt_csv(const std::filesystem::path& path);
// gt.csv schema: t,x,y,z,qw,qx,qy,qz.
void write_traj_csv(const std::filesystem::path& path, const std::vector<TrajectorySample>& traj);
std::vector<TrajectorySample> read_traj_csv(const std::filesystem::path& path);
void write_camera_csv(const std::filesystem::path& path, const CameraIntrinsics& k);
CameraIntrinsics read_camera_csv(const std::filesystem::path& path);

// Splits a CSV file into numeric rows, checking the header.
std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, const std::string& header);

}  // namespace prgflow
