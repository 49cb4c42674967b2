#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "roadtwin/geometry.hpp"

using namespace roadtwin;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

CameraModel gantry_camera(double pitch_deg = 12.0) {
  return {{2730.0, 2730.0, 960.0, 600.0, 1920, 1200},
          camera_pose({0.0, 0.0, 7.5}, 0.0, pitch_deg * kDeg)};
}

}  // namespace

TEST_CASE("transform_point examples") {
  const WorldPoint p(1, 2, 3);
  CHECK((transform_point(RigidTransform::identity(), p) - p).norm() == 0.0);

  RigidTransform shift;
  shift.translation = {10, 0, 0};
  CHECK((transform_point(shift, WorldPoint::Zero()) - WorldPoint(10, 0, 0)).norm() == 0.0);

  RigidTransform yaw;
  yaw.rotation << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((transform_point(yaw, WorldPoint(1, 0, 0)) - WorldPoint(0, 1, 0)).norm() < 1e-15);
  CHECK((rotation_z(std::numbers::pi / 2) - yaw.rotation).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("rigid transforms are valid, invertible and preserve distances") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> a(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    RigidTransform T;
    T.rotation = rotation_z(a(gen)) * rotation_y(a(gen)) * rotation_x(a(gen));
    T.translation = {u(gen), u(gen), u(gen)};
    REQUIRE(T.is_valid());
    const WorldPoint p(u(gen), u(gen), u(gen));
    const WorldPoint q(u(gen), u(gen), u(gen));
    const double d = (p - q).norm();
    const double dt = (transform_point(T, p) - transform_point(T, q)).norm();
    CHECK(std::abs(dt - d) <= 1e-9 * d);
    CHECK((transform_point(T.inverse(), transform_point(T, p)) - p).norm() < 1e-9);
    const RigidTransform I = T.compose(T.inverse());
    CHECK((I.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(I.translation.norm() < 1e-9);
  }
  RigidTransform bad;
  bad.rotation(0, 0) = -1.0;  // reflection
  CHECK_FALSE(bad.is_valid());
}

TEST_CASE("camera poses are proper rotations") {
  for (double yaw : {0.0, 1.0, std::numbers::pi})
    for (double pitch : {0.0, 12.0 * kDeg, 90.0 * kDeg})
      for (double roll : {0.0, 0.3}) CHECK(camera_pose({1, 2, 3}, yaw, pitch, roll).is_valid());
}

TEST_CASE("pinhole projection") {
  CameraModel cam{{1000, 1000, 500, 500, 1000, 1000}, RigidTransform::identity()};
  const Pixel on_axis = project_point(cam, {0, 0, 25});
  CHECK(on_axis.u == 500.0);
  CHECK(on_axis.v == 500.0);
  const Pixel p = project_point(cam, {1, 0, 10});
  CHECK(p.u == doctest::Approx(600.0).epsilon(1e-12));
  CHECK(p.v == doctest::Approx(500.0).epsilon(1e-12));
  CHECK_THROWS_AS(project_point(cam, {0, 0, -1}), BehindCamera);
  CHECK_THROWS_AS(project_point(cam, {0, 0, 0}), BehindCamera);
}

TEST_CASE("camera model validation") {
  CameraModel cam = gantry_camera();
  CHECK_NOTHROW(cam.validate());
  cam.intrinsics.fx = 0.0;
  CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
  cam = gantry_camera();
  cam.intrinsics.cx = 1920.0;
  CHECK_THROWS_AS(cam.validate(), std::invalid_argument);
}

TEST_CASE("cuboid projection") {
  CameraModel cam{{1000, 1000, 500, 500, 1000, 1000}, RigidTransform::identity()};

  SUBCASE("degenerate cuboid collapses to a point") {
    Cuboid c;
    c.fill(WorldPoint(0, 0, 10));
    const BoxProjection b = project_vehicle_to_box(cam, c);
    CHECK(b.box == ImageBox{500, 500, 500, 500});
    CHECK_FALSE(b.out_of_view);
  }

  SUBCASE("cuboid left of the image is out of view") {
    const Cuboid c = vehicle_cuboid(-50, 0, 0, 4.6, 1.8, 1.5);
    Cuboid shifted;
    for (std::size_t i = 0; i < c.size(); ++i) shifted[i] = c[i] + WorldPoint(0, 0, 10);
    const BoxProjection b = project_vehicle_to_box(cam, shifted);
    CHECK(b.out_of_view);
    CHECK(b.box.width() == 0.0);
  }

  SUBCASE("hull equals the corner-wise projections") {
    const CameraModel g = gantry_camera();
    const Cuboid c = vehicle_cuboid(60.0, -3.5, 0.1, 4.6, 1.8, 1.5);
    double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
    for (const auto& p : c) {
      const Eigen::Vector3d q = g.pose.rotation.transpose() * (p - g.pose.translation);
      const double u = 2730.0 * q.x() / q.z() + 960.0;
      const double v = 2730.0 * q.y() / q.z() + 600.0;
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    const BoxProjection b = project_vehicle_to_box(g, c);
    CHECK(b.unclipped.u_min == doctest::Approx(umin).epsilon(1e-12));
    CHECK(b.unclipped.u_max == doctest::Approx(umax).epsilon(1e-12));
    CHECK(b.unclipped.v_min == doctest::Approx(vmin).epsilon(1e-12));
    CHECK(b.unclipped.v_max == doctest::Approx(vmax).epsilon(1e-12));
    CHECK(b.box.u_min >= 0.0);
    CHECK(b.box.u_max <= 1920.0);
    CHECK(b.box.v_min >= 0.0);
    CHECK(b.box.v_max <= 1200.0);
  }

  SUBCASE("cuboid behind the camera") {
    Cuboid c;
    c.fill(WorldPoint(0, 0, -5));
    CHECK_THROWS_AS(project_vehicle_to_box(cam, c), FullyBehind);
  }
}

TEST_CASE("nadir back-projection") {
  CameraModel cam{{1000, 1000, 960, 600, 1920, 1200},
                  camera_pose({0, 0, 7}, 0.0, std::numbers::pi / 2)};
  const ImageBox box{900, 500, 1020, 600};
  const WorldPoint p = backproject_box(cam, box);
  CHECK(p.norm() < 1e-12);
}

TEST_CASE("project then back-project returns the ground point") {
  const CameraModel cam = gantry_camera();
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> ux(5.0, 200.0);
  std::uniform_real_distribution<double> uy(-15.0, 15.0);
  int n = 0;
  double worst = 0.0;
  while (n < 1000) {
    const WorldPoint p(ux(gen), uy(gen), 0.0);
    const Pixel px = project_point(cam, p);
    if (!cam.contains(px)) continue;
    const WorldPoint q = backproject_pixel(cam, px);
    CHECK(q.z() == 0.0);
    worst = std::max(worst, (q - p).norm());
    ++n;
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("rays at or above the horizon do not hit the ground") {
  const CameraModel level{{1000, 1000, 960, 600, 1920, 1200}, camera_pose({0, 0, 7}, 0.0, 0.0)};
  CHECK_THROWS_AS(backproject_pixel(level, {960, 600}), NoIntersection);
  CHECK_THROWS_AS(backproject_pixel(level, {960, 100}), NoIntersection);
  CHECK_NOTHROW(backproject_pixel(level, {960, 700}));
}

TEST_CASE("pitch error displaces distant points more") {
  const CameraModel cam = gantry_camera(2.5);
  CameraModel tilted = cam;
  tilted.pose = camera_pose({0.0, 0.0, 7.5}, 0.0, 2.6 * kDeg);
  double previous = 0.0;
  for (double x : {50.0, 100.0, 150.0, 200.0}) {
    const Pixel px = project_point(cam, {x, 0.0, 0.0});
    const double shift = (backproject_pixel(tilted, px) - WorldPoint(x, 0, 0)).norm();
    CHECK(shift > previous);
    previous = shift;
  }
}

TEST_CASE("ground footprint of a nadir camera") {
  CameraModel cam{{1000, 1000, 960, 600, 1920, 1200},
                  camera_pose({0, 0, 7}, 0.0, std::numbers::pi / 2)};
  // image rectangle scaled by height / focal length
  const double expected = (7.0 * 1920 / 1000) * (7.0 * 1200 / 1000);
  CHECK(ground_footprint_area(cam, 20.0) == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("box helpers") {
  const ImageBox b{10, 20, 30, 60};
  CHECK(b.area() == 800.0);
  CHECK(b.bottom_mid().u == 20.0);
  CHECK(b.bottom_mid().v == 60.0);
  CHECK(b.intersection_area({20, 40, 50, 100}) == 200.0);
  CHECK(b.intersection_area({40, 40, 50, 100}) == 0.0);
  CHECK(ImageBox{-5, -5, 2000, 1300}.clipped(1920, 1200) == ImageBox{0, 0, 1920, 1200});
}
