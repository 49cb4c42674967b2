#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace roadtwin {

/// Point in the global frame: x along the lower roadway's driving
/// direction, y lateral (left), z up. The road surface is z = 0.
using WorldPoint = Eigen::Vector3d;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Depth of the point in the camera frame is not positive.
class BehindCamera : public GeometryError {
 public:
  BehindCamera() : GeometryError("point is behind the camera") {}
};

/// Every corner of a cuboid is behind the camera.
class FullyBehind : public GeometryError {
 public:
  FullyBehind() : GeometryError("all cuboid corners are behind the camera") {}
};

/// Ray does not meet the ground plane in front of the camera.
class NoIntersection : public GeometryError {
 public:
  NoIntersection() : GeometryError("ray does not intersect the ground plane") {}
};

Eigen::Matrix3d rotation_x(double angle);
Eigen::Matrix3d rotation_y(double angle);
Eigen::Matrix3d rotation_z(double angle);

/// Sensor-to-world transform: p_world = rotation * p_sensor + translation.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  RigidTransform inverse() const;
  /// (*this) applied after `inner`.
  RigidTransform compose(const RigidTransform& inner) const;
  /// True when the rotation is orthonormal with determinant +1.
  bool is_valid(double tol = 1e-9) const;
};

WorldPoint transform_point(const RigidTransform& T, const WorldPoint& p);

/// Camera-to-world pose for a camera at `position` looking along heading
/// `yaw` (rad, about +z, 0 = +x) tilted down by `pitch` (rad) and rolled
/// about its optical axis by `roll`. Camera axes: x right, y down, z forward.
RigidTransform camera_pose(const Eigen::Vector3d& position, double yaw,
                           double pitch, double roll = 0.0);

/// Sensor pose for a radar: x forward along `yaw`, y left, z up.
RigidTransform radar_pose(const Eigen::Vector3d& position, double yaw);

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

struct CameraIntrinsics {
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 960.0;
  double cy = 600.0;
  int width = 1920;
  int height = 1200;
};

struct CameraModel {
  CameraIntrinsics intrinsics;
  RigidTransform pose;  // camera-to-world

  /// Throws std::invalid_argument on non-positive focal lengths or a
  /// principal point outside the image.
  void validate() const;
  bool contains(const Pixel& px) const;
};

/// Pixel box: u right, v down, origin at the top-left corner.
struct ImageBox {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;

  double width() const { return u_max - u_min; }
  double height() const { return v_max - v_min; }
  double area() const { return width() * height(); }
  /// Midpoint of the lower edge (maximum v).
  Pixel bottom_mid() const { return {(u_min + u_max) / 2.0, v_max}; }
  ImageBox clipped(double width, double height) const;
  double intersection_area(const ImageBox& other) const;

  friend bool operator==(const ImageBox&, const ImageBox&) = default;
};

/// Point in camera coordinates.
Eigen::Vector3d to_camera_frame(const CameraModel& cam, const WorldPoint& p);

/// Pinhole projection; the pixel may lie outside the image.
/// Throws BehindCamera when the depth is not positive.
Pixel project_point(const CameraModel& cam, const WorldPoint& p);

struct BoxProjection {
  ImageBox box;            // clipped to the image
  ImageBox unclipped;      // hull before clipping
  bool out_of_view = false;
};

using Cuboid = std::array<WorldPoint, 8>;

/// Corners of an upright box standing on z = 0 with its center at (x, y)
/// and its length axis along `heading`.
Cuboid vehicle_cuboid(double x, double y, double heading, double length,
                      double width, double height);

/// Axis-aligned hull of the projected corners that lie in front of the
/// camera. Throws FullyBehind when none do.
BoxProjection project_vehicle_to_box(const CameraModel& cam,
                                     std::span<const WorldPoint> corners);

/// Intersects the ray through `px` with z = 0.
/// Throws NoIntersection at or above the horizon.
WorldPoint backproject_pixel(const CameraModel& cam, const Pixel& px);

/// Ground point under the lower-edge midpoint of the box.
WorldPoint backproject_box(const CameraModel& cam, const ImageBox& box);

/// Area (m²) of the camera's ground footprint up to `max_range` meters
/// from the camera's ground position.
double ground_footprint_area(const CameraModel& cam, double max_range);

}  // namespace roadtwin
