#include <doctest.h>

#include <random>
#include <sstream>

#include "prgflow/errors.hpp"
#include "prgflow/fusion.hpp"
#include "support.hpp"

using namespace prgflow;

namespace {

double yaw_of(const Eigen::Quaterniond& q) {
  const Eigen::Vector3d x = q * Eigen::Vector3d::UnitX();
  return std::atan2(x.y(), x.x());
}

double roll_of(const Eigen::Quaterniond& q) {
  const Eigen::Matrix3d r = q.toRotationMatrix();
  return std::atan2(r(2, 1), r(2, 2));
}

std::vector<TrajectorySample> wiggle(std::size_t n, double dt) {
  std::vector<TrajectorySample> v;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i * dt;
    TrajectorySample s;
    s.t = t;
    s.position = Eigen::Vector3d(std::sin(t), 0.5 * std::sin(2 * t), 3 + 0.2 * std::cos(t));
    v.push_back(s);
  }
  return v;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("madgwick equilibrium") {
  AttitudeState s;
  for (int i = 0; i < 100; ++i) {
    s = madgwick_update(s, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 0, kGravity), magnetic_north(), 0.01);
    REQUIRE(std::abs(s.q.norm() - 1) < 1e-9);
  }
  CHECK(s.q.angularDistance(Eigen::Quaterniond::Identity()) < 1e-6);
  CHECK_THROWS_AS(madgwick_update(s, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 0, 1), magnetic_north(), 0.0),
                  DomainError);
}

TEST_CASE("gyro-only yaw integration") {
  AttitudeState s;
  s.beta = 0;
  for (int i = 0; i < 1000; ++i)
    s = madgwick_update(s, Eigen::Vector3d(0, 0, 0.1), Eigen::Vector3d(0, 0, kGravity), magnetic_north(), 0.01);
  CHECK(std::abs(yaw_of(s.q) - 1.0) < 1e-3);

  AttitudeState z;
  z = madgwick_update(z, Eigen::Vector3d(0.2, 0, 0), Eigen::Vector3d::Zero(), magnetic_north(), 0.5);
  CHECK(std::abs(roll_of(z.q) - 0.1) < 1e-3);
}

TEST_CASE("static tilt converges from any start") {
  const Eigen::Quaterniond truth(Eigen::AngleAxisd(10 * M_PI / 180, Eigen::Vector3d::UnitX()));
  const Eigen::Matrix3d r_bw = truth.toRotationMatrix().transpose();
  const Eigen::Vector3d accel = r_bw * Eigen::Vector3d(0, 0, kGravity), mag = r_bw * magnetic_north();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 6; ++trial) {
    AttitudeState s;
    if (trial) {
      const Eigen::Vector3d axis(n(rng), n(rng), n(rng));
      s.q = truth * Eigen::Quaterniond(Eigen::AngleAxisd(40 * M_PI / 180, axis.normalized()));
    }
    for (int i = 0; i < 500; ++i) s = madgwick_update(s, Eigen::Vector3d::Zero(), accel, mag, 0.01);
    CHECK(std::abs(roll_of(s.q) - 10 * M_PI / 180) < M_PI / 180);
  }
  std::vector<ImuRow> log;
  for (int i = 0; i <= 500; ++i) log.push_back({i * 0.01, Eigen::Vector3d::Zero(), accel, mag});
  CHECK(std::abs(roll_of(filter_attitude(log).back().q) - 10 * M_PI / 180) < M_PI / 180);
}

TEST_CASE("madgwick objective jacobian matches finite differences") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
    const Eigen::Vector3d d(n(rng), n(rng), n(rng));
    const auto j = rotate_to_body_jacobian(q, d);
    for (int k = 0; k < 4; ++k) {
      Eigen::Vector4d a = q, b = q;
      a(k) += 1e-6;
      b(k) -= 1e-6;
      const Eigen::Vector3d fd = (rotate_to_body(a, d) - rotate_to_body(b, d)) / 2e-6;
      REQUIRE((fd - j.col(k)).norm() < 1e-6 * (1 + fd.norm()));
    }
    const Eigen::Vector4d u = q.normalized();
    const Eigen::Quaterniond uq(u(0), u(1), u(2), u(3));
    CHECK((rotate_to_body(u, d) - uq.conjugate() * d).norm() < 1e-12);
  }
}

TEST_CASE("triad recovers a known attitude") {
  const Eigen::Quaterniond q = Eigen::AngleAxisd(0.7, Eigen::Vector3d::UnitZ()) *
                               Eigen::AngleAxisd(-0.1, Eigen::Vector3d::UnitY()) *
                               Eigen::AngleAxisd(0.15, Eigen::Vector3d::UnitX());
  const Eigen::Matrix3d r_bw = q.toRotationMatrix().transpose();
  const Eigen::Quaterniond est = triad_attitude(r_bw * Eigen::Vector3d(0, 0, 3), r_bw * magnetic_north());
  CHECK(est.angularDistance(q) < 1e-9);
  CHECK_THROWS_AS(triad_attitude(Eigen::Vector3d::Zero(), magnetic_north()), DegenerateError);
}

TEST_CASE("derotate examples") {
  const CameraIntrinsics k = CameraIntrinsics::defaults();
  const Eigen::Quaterniond q(Eigen::AngleAxisd(0.3, Eigen::Vector3d(1, 2, 3).normalized()));
  const PixelWarpd id = derotate(q, q, k);
  CHECK((id.m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() == 0.0);

  const double d = 0.05;
  const PixelWarpd yaw = derotate(Eigen::Quaterniond::Identity(),
                                  Eigen::Quaterniond(Eigen::AngleAxisd(d, Eigen::Vector3d::UnitZ())), k);
  Eigen::Matrix3d expect = Eigen::Matrix3d::Identity();
  expect.topLeftCorner<2, 2>() << std::cos(d), std::sin(d), -std::sin(d), std::cos(d);
  const Eigen::Vector2d c(k.cx, k.cy);
  expect.topRightCorner<2, 1>() = c - expect.topLeftCorner<2, 2>() * c;
  CHECK((yaw.m - expect).cwiseAbs().maxCoeff() < 1e-9);

  const double p = 0.01;
  const PixelWarpd pitch = derotate(Eigen::Quaterniond::Identity(),
                                    Eigen::Quaterniond(Eigen::AngleAxisd(p, Eigen::Vector3d::UnitY())), k);
  const Eigen::Vector2d moved = warp_point(pitch, c) - c;
  CHECK(moved.norm() == doctest::Approx(k.fx * p).epsilon(0.02));
  CHECK(std::abs(moved.y()) < 1e-9 * k.fx);
}

TEST_CASE("pixel to metric velocity examples") {
  CameraIntrinsics k = CameraIntrinsics::defaults();
  k.fx = k.fy = 400;
  CHECK(pixel_to_metric_velocity(WarpParamsd::identity(), 2.0, k, 0.1, 128, 128).norm() == 0.0);
  const Eigen::Vector3d v = pixel_to_metric_velocity(WarpParamsd::pseudo_similarity(0, 10.0 / 64, 0), 2.0, k, 0.1, 128, 128);
  CHECK(v.x() == doctest::Approx(0.5));
  const Eigen::Vector3d w = pixel_to_metric_velocity(WarpParamsd::pseudo_similarity(0.01, 0, 0), 2.0, k, 0.1, 128, 128);
  CHECK(w.z() == doctest::Approx(-0.198).epsilon(0.01));

  const WarpParamsd h = WarpParamsd::pseudo_similarity(0, 0.07, -0.03);
  const Eigen::Vector3d a = pixel_to_metric_velocity(h, 1.5, k, 0.05, 128, 128);
  CHECK((pixel_to_metric_velocity(h, 3.0, k, 0.05, 128, 128) - 2 * a).norm() < 1e-12);
  CHECK((pixel_to_metric_velocity(WarpParamsd::pseudo_similarity(0, 0.14, -0.06), 1.5, k, 0.05, 128, 128) - 2 * a)
            .norm() < 1e-12);
  CHECK_THROWS_AS(pixel_to_metric_velocity(h, 0.0, k, 0.1, 128, 128), DomainError);
  CHECK_THROWS_AS(pixel_to_metric_velocity(h, 1.0, k, -0.1, 128, 128), DomainError);
}

TEST_CASE("dead reckoning examples") {
  std::vector<VelocitySample> c;
  for (int i = 0; i <= 10; ++i) c.push_back({i * 0.1, Eigen::Vector3d(1, 0, 0)});
  CHECK(dead_reckon(c).back().position.x() == doctest::Approx(1.0));

  std::vector<VelocitySample> z;
  for (int i = 0; i <= 10; ++i) z.push_back({i * 0.1, Eigen::Vector3d::Zero()});
  for (const auto& s : dead_reckon(z, Eigen::Vector3d(1, 2, 3))) CHECK(s.position == Eigen::Vector3d(1, 2, 3));

  std::vector<VelocitySample> arc;
  const int n = static_cast<int>(std::round(M_PI / 1e-3));
  for (int i = 0; i <= n; ++i) {
    const double t = M_PI * i / n;
    arc.push_back({t, Eigen::Vector3d(std::cos(t), std::sin(t), 0)});
  }
  const Eigen::Vector3d end = dead_reckon(arc).back().position;
  CHECK(std::abs(end.x()) < 1e-3);
  CHECK(std::abs(end.y() - 2) < 1e-3);

  std::vector<VelocitySample> bad{{0.0, {}}, {0.2, {}}, {0.1, {}}};
  CHECK_THROWS_AS(dead_reckon(bad), DataError);
}

TEST_CASE("alignment examples") {
  const auto gt = wiggle(1000, 0.01);
  const TrajectoryErrors same = align_and_rmse(gt, gt);
  CHECK(same.rmse < 1e-9);
  CHECK(same.length == doctest::Approx(path_length(gt)));

  auto shifted = gt;
  for (auto& s : shifted) s.position += Eigen::Vector3d(0.4, -1, 2);
  CHECK(align_and_rmse(shifted, gt).rmse < 1e-9);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 0.05);
  auto noisy = gt;
  for (auto& s : noisy) s.position += Eigen::Vector3d(g(rng), g(rng), g(rng));
  const TrajectoryErrors e = align_and_rmse(noisy, gt);
  CHECK(e.rmse >= 0.07);
  CHECK(e.rmse <= 0.11);

  const Eigen::Matrix3d r = Eigen::AngleAxisd(0.8, Eigen::Vector3d(0.2, -1, 0.5).normalized()).toRotationMatrix();
  auto moved = noisy;
  for (auto& s : moved) s.position = r * s.position + Eigen::Vector3d(3, 1, -2);
  CHECK(std::abs(align_and_rmse(moved, gt).rmse - e.rmse) < 1e-9);

  const std::vector<TrajectorySample> two(gt.begin(), gt.begin() + 2);
  CHECK_THROWS_AS(align_and_rmse(two, gt), DataError);

  std::ostringstream os;
  write_eval_csv(os, {{"wiggle", e}});
  CHECK(os.str().rfind("trajectory,err_x,err_y,err_z,rmse,length_m,rmse_pct\n", 0) == 0);
}

TEST_CASE("hover flight stays at the origin") {
  TrajectoryParams p;
  p.size = 0;
  p.altitude_amplitude = 0;
  p.duration = 10;
  const Flight f = simulate_flight(p, ImuNoise::none(), 0, 2);
  const CameraIntrinsics k = CameraIntrinsics::defaults();
  const RenderedFrames frames(f.ground, f.traj, k, f.log.camera_times);
  const VioResult r = run_vio(frames, f.log, k, VioConfig{});
  CHECK(r.degenerate_steps == 0);
  double worst = 0;
  for (const auto& s : r.trajectory)
    worst = std::max(worst, (s.position - Eigen::Vector3d(0, 0, p.altitude)).norm());
  CHECK(worst < 0.01);

  REQUIRE(r.velocities.size() > 3);
  for (std::size_t i = 2; i < r.velocities.size(); ++i)
    CHECK(1.0 / (r.velocities[i].t - r.velocities[i - 1].t) == doctest::Approx(22.5));
}

TEST_CASE("short circle flight tracks the ground truth") {
  TrajectoryParams p;
  p.duration = 12;
  const Flight f = simulate_flight(p, ImuNoise::none(), 0, 4);
  const CameraIntrinsics k = CameraIntrinsics::defaults();
  const RenderedFrames frames(f.ground, f.traj, k, f.log.camera_times);
  const VioResult r = run_vio(frames, f.log, k, VioConfig{});
  const TrajectoryErrors e = align_and_rmse(r.trajectory, f.gt);
  CHECK(e.rmse <= 0.03 * e.length);
}

}
