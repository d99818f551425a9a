#include <doctest.h>

#include <filesystem>

#include "prgflow/errors.hpp"
#include "prgflow/fft_align.hpp"
#include "prgflow/sim.hpp"
#include "support.hpp"

using namespace prgflow;

namespace {

TrajectoryParams hover(double duration, double altitude = 3.0) {
  TrajectoryParams p;
  p.size = 0;
  p.altitude = altitude;
  p.altitude_amplitude = 0;
  p.duration = duration;
  return p;
}

// Smooth periodic pattern so that two interpolations agree closely.
GroundPlane smooth_ground(double half_extent, double m_per_px) {
  GroundPlane g;
  g.m_per_px = m_per_px;
  const int n = static_cast<int>(std::ceil(2 * half_extent / m_per_px));
  g.texture = ImagePlane(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      g.texture.at(0, y, x) = 0.5 + 0.2 * std::sin(x * 0.11) * std::cos(y * 0.07) + 0.15 * std::sin(0.05 * (x + 2 * y));
  g.origin_u = g.origin_v = n / 2.0;
  return g;
}

Eigen::Vector2d bright_centroid(const ImagePlane& img, int x0, int x1) {
  double sx = 0, sy = 0, sw = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = x0; x < x1; ++x) {
      const double w = std::max(0.0, img.at(0, y, x) - 0.5);
      sx += w * x;
      sy += w * y;
      sw += w;
    }
  return {sx / sw, sy / sw};
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("default intrinsics") {
  const CameraIntrinsics k = CameraIntrinsics::defaults();
  CHECK(k.width == 640);
  CHECK(k.height == 480);
  CHECK(2 * std::atan(400.0 / k.fx) * 180 / M_PI == doctest::Approx(22.0));
  CHECK(k.cx == 320.0);
  CHECK(k.cy == 240.0);
  CameraIntrinsics bad = k;
  bad.cx = 700;
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("circle of radius one has length two pi") {
  TrajectoryParams p;
  p.size = 1.0;
  p.period = 20.0;
  p.duration = 20.0;
  p.altitude_amplitude = 0;
  p.rate = 1000;
  CHECK(path_length(gen_trajectory(p)) == doctest::Approx(2 * M_PI).epsilon(1e-4));
}

TEST_CASE("line has no lateral acceleration and a fixed heading") {
  TrajectoryParams p;
  p.shape = TrajectoryShape::Line;
  p.size = 2.0;
  p.yaw = 0.3;
  p.altitude_amplitude = 0;
  const Trajectory traj(p);
  const Eigen::Vector3d lateral(-std::sin(0.3), std::cos(0.3), 0);
  for (double t = 0; t < p.duration; t += 0.37) {
    CHECK(std::abs(traj.acceleration(t).dot(lateral)) < 1e-6);
    const Eigen::Vector3d nose = traj.attitude(t) * Eigen::Vector3d::UnitX();
    CHECK(std::atan2(nose.y(), nose.x()) == doctest::Approx(0.3).epsilon(1e-9));
  }
}

TEST_CASE("closed shapes return to the start") {
  for (TrajectoryShape s : {TrajectoryShape::Figure8, TrajectoryShape::Circle, TrajectoryShape::Square}) {
    TrajectoryParams p;
    p.shape = s;
    const Trajectory traj(p);
    CHECK((traj.position(traj.period()) - traj.position(0)).norm() < 1e-6);
  }
}

TEST_CASE("trajectories respect the speed cap and default mean speed") {
  for (const char* name : {"circle", "moon", "line", "figure8", "square"}) {
    TrajectoryParams p;
    p.shape = parse_shape(name);
    const Trajectory traj(p);
    CHECK(traj.peak_speed() <= 1.5);
    const auto samples = gen_trajectory(p);
    CHECK(path_length(samples) / p.duration == doctest::Approx(0.5).epsilon(0.05));
    for (const auto& s : samples) REQUIRE(std::abs(s.attitude.norm() - 1) < 1e-9);
  }
  TrajectoryParams fast;
  fast.size = 5;
  fast.period = 5;
  CHECK_THROWS_AS(Trajectory{fast}, DomainError);
  CHECK_THROWS_AS(parse_shape("spiral"), DataError);
}

TEST_CASE("rendering is deterministic") {
  const Flight f = simulate_flight(hover(1.0), ImuNoise::none(), 0, 3);
  const ImagePlane a = render_view(f.ground, f.gt[0], CameraIntrinsics::defaults());
  const ImagePlane b = render_view(f.ground, f.gt[0], CameraIntrinsics::defaults());
  CHECK((a.channel(0) - b.channel(0)).abs().maxCoeff() == 0.0);
  TrajectorySample off = f.gt[0];
  off.position.x() += 50;
  CHECK_THROWS_AS(render_view(f.ground, off, CameraIntrinsics::defaults()), DataError);
}

TEST_CASE("doubling the altitude halves feature spacing") {
  GroundPlane g;
  g.m_per_px = 0.002;
  g.texture = ImagePlane(600, 600, 1, 0.2);
  g.origin_u = g.origin_v = 300;
  for (double cx : {-0.05, 0.05})
    for (int y = 0; y < 600; ++y)
      for (int x = 0; x < 600; ++x) {
        const double wx = (x - 300) * 0.002 - cx, wy = (y - 300) * 0.002;
        if (std::hypot(wx, wy) < 0.012) g.texture.at(0, y, x) = 0.9;
      }
  const CameraIntrinsics k = CameraIntrinsics::defaults();
  auto spacing = [&](double z) {
    TrajectorySample s;
    s.position = Eigen::Vector3d(0, 0, z);
    const ImagePlane img = render_view(g, s, k);
    return (bright_centroid(img, 320, 640) - bright_centroid(img, 0, 320)).norm();
  };
  const double near = spacing(0.6), far = spacing(1.2);
  CHECK(near == doctest::Approx(k.fx * 0.1 / 0.6).epsilon(0.01));
  CHECK(near / far == doctest::Approx(2.0).epsilon(0.005));
}

TEST_CASE("pure yaw rotates the frame about the principal point") {
  const GroundPlane g = smooth_ground(3.0, 0.002);
  const CameraIntrinsics k = CameraIntrinsics::defaults();
  TrajectorySample a;
  a.position = Eigen::Vector3d(0.1, -0.2, 2.0);
  TrajectorySample b = a;
  const double yaw = 0.2;
  b.attitude = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ());
  const ImagePlane fa = render_view(g, a, k), fb = render_view(g, b, k);

  const Eigen::Matrix3d m = ground_to_image(g, a, k) * ground_to_image(g, b, k).inverse();
  const Eigen::Matrix3d mn = m / m(2, 2);
  CHECK(std::abs(mn(0, 0) - std::cos(yaw)) < 1e-9);
  CHECK(std::abs(std::abs(mn(0, 1)) - std::sin(yaw)) < 1e-9);
  CHECK((mn * Eigen::Vector3d(k.cx, k.cy, 1) - Eigen::Vector3d(k.cx, k.cy, 1)).norm() < 1e-9);

  const ImagePlane rotated = resample(fa, mn, k.width, k.height);
  double worst = 0;
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x)
      if (rotated.mask()(y, x)) worst = std::max(worst, std::abs(rotated.at(0, y, x) - fb.at(0, y, x)));
  CHECK(worst < 2.0 / 255.0);
}

TEST_CASE("horizontal motion shifts the frame by f d / Z") {
  TrajectoryParams p = hover(1.0);
  const Flight f = simulate_flight(p, ImuNoise::none(), 0, 8);
  const CameraIntrinsics k = CameraIntrinsics::defaults();
  TrajectorySample a = f.gt[0], b = a;
  const double d = 0.01, z = a.position.z();
  b.position.x() += d;
  const ImagePlane ca = crop(render_view(f.ground, a, k), 192, 112, 256, 256);
  const ImagePlane cb = crop(render_view(f.ground, b, k), 192, 112, 256, 256);
  const FftShift s = fft_translation(ca, cb);
  CHECK(std::abs(s.dx + k.fx * d / z) < 0.2);
  CHECK(std::abs(s.dy) < 0.2);
}

TEST_CASE("static hover readings") {
  const Trajectory traj(hover(2.0));
  const auto imu = synth_imu(traj, ImuNoise::none(), 1);
  REQUIRE(imu.size() == 201);
  for (const auto& r : imu) {
    REQUIRE(r.gyro.norm() < 1e-9);
    REQUIRE((r.accel - Eigen::Vector3d(0, 0, kGravity)).norm() < 1e-6);
    REQUIRE((r.mag - imu.front().mag).norm() < 1e-12);
  }
  for (std::size_t i = 1; i < imu.size(); ++i) CHECK(imu[i].t - imu[i - 1].t == doctest::Approx(0.01));
  const auto cams = camera_times(2.0);
  CHECK(cams.size() == 181);
  CHECK(cams[90] == doctest::Approx(1.0));
}

TEST_CASE("constant-rate circle yaw rate") {
  TrajectoryParams p;
  p.altitude_amplitude = 0;
  p.period = 20;
  const Trajectory traj(p);
  const auto imu = synth_imu(traj, ImuNoise::none(), 1);
  for (std::size_t i = 0; i < imu.size(); i += 37) CHECK(imu[i].gyro.z() == doctest::Approx(2 * M_PI / 20).epsilon(1e-3));
}

TEST_CASE("sensor logs are deterministic in the seed") {
  TrajectoryParams p;
  p.duration = 5;
  const Trajectory traj(p);
  const auto a = synth_imu(traj, ImuNoise{}, 5), b = synth_imu(traj, ImuNoise{}, 5), c = synth_imu(traj, ImuNoise{}, 6);
  CHECK(a.size() == b.size());
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].gyro == b[i].gyro && a[i].accel == b[i].accel && a[i].mag == b[i].mag;
    differs = differs || a[i].gyro != c[i].gyro;
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("altimeter examples") {
  const auto flat = synth_altimeter(Trajectory(hover(5.0, 2.0)), 0.0, 1);
  CHECK(flat.size() == 101);
  for (const auto& r : flat) REQUIRE(r.z == 2.0);

  const auto noisy = synth_altimeter(Trajectory(hover(500.0, 2.0)), 0.02, 2);
  REQUIRE(noisy.size() >= 10000);
  double mean = 0, var = 0;
  for (const auto& r : noisy) mean += r.z;
  mean /= noisy.size();
  for (const auto& r : noisy) var += (r.z - mean) * (r.z - mean);
  const double sd = std::sqrt(var / (noisy.size() - 1));
  CHECK(sd >= 0.015);
  CHECK(sd <= 0.025);

  TrajectoryParams climb = hover(10.0);
  climb.altitude_amplitude = 0.5;
  climb.period = 40;
  const auto up = synth_altimeter(Trajectory(climb), 0.0, 3);
  for (std::size_t i = 1; i < up.size(); ++i) REQUIRE(up[i].z > up[i - 1].z);
}

TEST_CASE("log files round trip") {
  TrajectoryParams p;
  p.duration = 2;
  const Flight f = simulate_flight(p, ImuNoise{}, 0.02, 4);
  const auto dir = std::filesystem::temp_directory_path() / "prgflow_test_sim";
  std::filesystem::create_directories(dir);
  write_imu_csv(dir / "imu.csv", f.log.imu);
  write_alt_csv(dir / "alt.csv", f.log.altimeter);
  write_traj_csv(dir / "gt.csv", f.gt);
  write_camera_csv(dir / "camera.csv", CameraIntrinsics::defaults());
  const auto imu = read_imu_csv(dir / "imu.csv");
  const auto alt = read_alt_csv(dir / "alt.csv");
  const auto gt = read_traj_csv(dir / "gt.csv");
  const auto k = read_camera_csv(dir / "camera.csv");
  REQUIRE(imu.size() == f.log.imu.size());
  REQUIRE(alt.size() == f.log.altimeter.size());
  REQUIRE(gt.size() == f.gt.size());
  CHECK((imu[7].accel - f.log.imu[7].accel).norm() < 1e-9);
  CHECK(std::abs(alt[3].z - f.log.altimeter[3].z) < 1e-9);
  CHECK((gt[50].position - f.gt[50].position).norm() < 1e-9);
  CHECK(k.fx == doctest::Approx(CameraIntrinsics::defaults().fx));
  CHECK_THROWS_AS(read_alt_csv(dir / "imu.csv"), DataError);
  std::filesystem::remove_all(dir);
}

}
