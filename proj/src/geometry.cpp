#include "roadtwin/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace roadtwin {

namespace {
constexpr double kMinDepth = 1e-9;
constexpr double kMinRayDrop = 1e-12;
}  // namespace

Eigen::Matrix3d rotation_x(double a) {
  return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()).toRotationMatrix();
}
Eigen::Matrix3d rotation_y(double a) {
  return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix();
}
Eigen::Matrix3d rotation_z(double a) {
  return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& inner) const {
  RigidTransform out;
  out.rotation = rotation * inner.rotation;
  out.translation = rotation * inner.translation + translation;
  return out;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation -
                        Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

WorldPoint transform_point(const RigidTransform& T, const WorldPoint& p) {
  return T.rotation * p + T.translation;
}

RigidTransform camera_pose(const Eigen::Vector3d& position, double yaw,
                           double pitch, double roll) {
  const Eigen::Vector3d forward(std::cos(pitch) * std::cos(yaw),
                                std::cos(pitch) * std::sin(yaw),
                                -std::sin(pitch));
  const Eigen::Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
  const Eigen::Vector3d down = forward.cross(right);
  RigidTransform T;
  T.rotation.col(0) = right;
  T.rotation.col(1) = down;
  T.rotation.col(2) = forward;
  if (roll != 0.0) T.rotation = T.rotation * rotation_z(roll);
  T.translation = position;
  return T;
}

RigidTransform radar_pose(const Eigen::Vector3d& position, double yaw) {
  RigidTransform T;
  T.rotation = rotation_z(yaw);
  T.translation = position;
  return T;
}

void CameraModel::validate() const {
  const auto& k = intrinsics;
  if (!(k.fx > 0.0) || !(k.fy > 0.0))
    throw std::invalid_argument("camera focal lengths must be positive");
  if (k.width <= 0 || k.height <= 0)
    throw std::invalid_argument("camera image size must be positive");
  if (!(k.cx > 0.0 && k.cx < k.width) || !(k.cy > 0.0 && k.cy < k.height))
    throw std::invalid_argument("principal point must lie inside the image");
  if (!pose.is_valid(1e-9))
    throw std::invalid_argument("camera pose rotation is not orthonormal");
}

bool CameraModel::contains(const Pixel& px) const {
  return px.u >= 0.0 && px.u <= intrinsics.width && px.v >= 0.0 &&
         px.v <= intrinsics.height;
}

ImageBox ImageBox::clipped(double width, double height) const {
  ImageBox b;
  b.u_min = std::clamp(u_min, 0.0, width);
  b.u_max = std::clamp(u_max, 0.0, width);
  b.v_min = std::clamp(v_min, 0.0, height);
  b.v_max = std::clamp(v_max, 0.0, height);
  return b;
}

double ImageBox::intersection_area(const ImageBox& o) const {
  const double w = std::min(u_max, o.u_max) - std::max(u_min, o.u_min);
  const double h = std::min(v_max, o.v_max) - std::max(v_min, o.v_min);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

Eigen::Vector3d to_camera_frame(const CameraModel& cam, const WorldPoint& p) {
  return cam.pose.rotation.transpose() * (p - cam.pose.translation);
}

Pixel project_point(const CameraModel& cam, const WorldPoint& p) {
  const Eigen::Vector3d c = to_camera_frame(cam, p);
  if (c.z() <= kMinDepth) throw BehindCamera();
  const auto& k = cam.intrinsics;
  return {k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy};
}

Cuboid vehicle_cuboid(double x, double y, double heading, double length,
                      double width, double height) {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  Cuboid corners;
  int i = 0;
  for (double dl : {-0.5, 0.5}) {
    for (double dw : {-0.5, 0.5}) {
      const double lx = dl * length;
      const double ly = dw * width;
      const double wx = x + c * lx - s * ly;
      const double wy = y + s * lx + c * ly;
      corners[i++] = WorldPoint(wx, wy, 0.0);
      corners[i++] = WorldPoint(wx, wy, height);
    }
  }
  return corners;
}

BoxProjection project_vehicle_to_box(const CameraModel& cam,
                                     std::span<const WorldPoint> corners) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  ImageBox hull{inf, inf, -inf, -inf};
  bool any = false;
  for (const auto& p : corners) {
    if (to_camera_frame(cam, p).z() <= kMinDepth) continue;
    const Pixel px = project_point(cam, p);
    hull.u_min = std::min(hull.u_min, px.u);
    hull.u_max = std::max(hull.u_max, px.u);
    hull.v_min = std::min(hull.v_min, px.v);
    hull.v_max = std::max(hull.v_max, px.v);
    any = true;
  }
  if (!any) throw FullyBehind();
  const double w = cam.intrinsics.width;
  const double h = cam.intrinsics.height;
  BoxProjection out;
  out.unclipped = hull;
  out.box = hull.clipped(w, h);
  out.out_of_view =
      hull.u_max < 0.0 || hull.u_min > w || hull.v_max < 0.0 || hull.v_min > h;
  return out;
}

WorldPoint backproject_pixel(const CameraModel& cam, const Pixel& px) {
  const auto& k = cam.intrinsics;
  const Eigen::Vector3d ray_cam((px.u - k.cx) / k.fx, (px.v - k.cy) / k.fy,
                                1.0);
  const Eigen::Vector3d ray = cam.pose.rotation * ray_cam;
  const Eigen::Vector3d& origin = cam.pose.translation;
  if (std::abs(ray.z()) < kMinRayDrop) throw NoIntersection();
  const double s = -origin.z() / ray.z();
  if (!(s > 0.0) || !std::isfinite(s)) throw NoIntersection();
  WorldPoint p = origin + s * ray;
  p.z() = 0.0;
  return p;
}

WorldPoint backproject_box(const CameraModel& cam, const ImageBox& box) {
  return backproject_pixel(cam, box.bottom_mid());
}

double ground_footprint_area(const CameraModel& cam, double max_range) {
  // polar midpoint rule around the camera's ground position
  constexpr int kRadial = 300;
  constexpr int kAngular = 720;
  const double dr = max_range / kRadial;
  const double dtheta = 2.0 * std::numbers::pi / kAngular;
  const Eigen::Vector3d& c = cam.pose.translation;
  double area = 0.0;
  for (int i = 0; i < kRadial; ++i) {
    const double r = (i + 0.5) * dr;
    for (int j = 0; j < kAngular; ++j) {
      const double th = (j + 0.5) * dtheta;
      const WorldPoint p(c.x() + r * std::cos(th), c.y() + r * std::sin(th),
                         0.0);
      if (to_camera_frame(cam, p).z() <= kMinDepth) continue;
      if (cam.contains(project_point(cam, p))) area += r * dr * dtheta;
    }
  }
  return area;
}

}  // namespace roadtwin
