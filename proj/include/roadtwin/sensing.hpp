#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "roadtwin/geometry.hpp"
#include "roadtwin/random.hpp"
#include "roadtwin/scenario.hpp"

namespace roadtwin {

enum class SensorKind { camera, radar };

std::string_view to_string(SensorKind kind);
SensorKind sensor_kind_from_string(std::string_view name);

/// Row-stochastic: confusion[true][reported] over car/truck/bus/motorcycle.
using ConfusionMatrix = std::array<std::array<double, 4>, 4>;

ConfusionMatrix identity_confusion();

struct CameraParams {
  CameraIntrinsics intrinsics;
  double pixel_sigma = 1.5;
  /// Vehicles farther than this from the camera are not detected.
  double max_range = 300.0;
  /// A vehicle is dropped when a nearer vehicle covers at least this
  /// fraction of its box.
  double occlusion_fraction = 0.6;
  /// Minimum share of the box that must fall inside the image.
  double min_visible_fraction = 0.5;
  double clutter_min_size = 15.0;
  double clutter_max_size = 120.0;
  ConfusionMatrix confusion = identity_confusion();
};

struct RadarParams {
  /// Sector in the radar frame (rad, counter-clockwise from boresight).
  double azimuth_min = -1.0;
  double azimuth_max = 1.0;
  double max_range = 250.0;
  double sigma_pos = 1.5;
  double sigma_vel = 0.5;
  /// Clutter velocities are drawn uniformly from [-v, v] per axis.
  double clutter_speed = 45.0;
};

struct SensorSpec {
  std::string id;
  SensorKind kind = SensorKind::camera;
  std::string mp_id;
  RigidTransform pose;
  double p_detect = 0.97;
  double clutter_rate = 0.3;
  double frame_rate = 5.4;
  CameraParams camera;
  RadarParams radar;

  CameraModel camera_model() const { return {camera.intrinsics, pose}; }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct Detection {
  std::string sensor_id;
  double t = 0.0;
  SensorKind kind = SensorKind::camera;
  /// Camera: (u_min, v_min, u_max, v_max). Radar: (x, y, vx, vy).
  Eigen::Vector4d z = Eigen::Vector4d::Zero();
  VehicleClass cls = VehicleClass::unknown;
  double confidence = 1.0;
  /// Debug only; never serialized for the tracker.
  bool is_clutter = false;
  int truth_id = 0;

  ImageBox box() const { return {z[0], z[1], z[2], z[3]}; }
};

struct MeasurementFrame {
  std::string sensor_id;
  double t = 0.0;
  /// 2 for position-only (camera), 4 for position and velocity (radar).
  int dim = 2;
  std::vector<Eigen::Vector4d> values;
  std::vector<VehicleClass> classes;
  /// Detections whose ray missed the ground plane.
  std::size_t dropped = 0;

  std::size_t size() const { return values.size(); }
};

/// Box a camera would report for `vehicle`, ignoring noise and occlusion.
BoxProjection vehicle_box(const CameraModel& cam, const VehicleAgent& vehicle);

/// Ground point the camera pipeline reports for an ideal box of `vehicle`.
WorldPoint vehicle_anchor(const CameraModel& cam, const VehicleAgent& vehicle);

std::vector<Detection> camera_observe(const SensorSpec& spec,
                                      const GroundTruthFrame& gt, Rng& rng);

MeasurementFrame camera_frame_to_world(const SensorSpec& spec, double t,
                                       const std::vector<Detection>& detections);

bool radar_covers(const SensorSpec& spec, double x, double y);

std::vector<Detection> radar_detections(const SensorSpec& spec,
                                        const GroundTruthFrame& gt, Rng& rng);

MeasurementFrame radar_frame(const SensorSpec& spec, double t,
                             const std::vector<Detection>& detections);

MeasurementFrame radar_observe(const SensorSpec& spec,
                               const GroundTruthFrame& gt, Rng& rng);

/// Detections of either kind.
std::vector<Detection> observe(const SensorSpec& spec,
                               const GroundTruthFrame& gt, Rng& rng);

/// World-space measurements of either kind.
MeasurementFrame to_measurement_frame(const SensorSpec& spec, double t,
                                      const std::vector<Detection>& detections);

/// Pose error applied in the sensor's own frame (rotation) and in world
/// coordinates (translation).
SensorSpec perturb_pose(const SensorSpec& spec,
                        const Eigen::Matrix3d& delta_rotation,
                        const Eigen::Vector3d& delta_translation);

/// Area (m²) over which clutter lands on the ground.
double surveillance_area(const SensorSpec& spec);

/// Frame instants of a sensor over [0, duration).
std::vector<double> frame_times(double frame_rate, double duration);

}  // namespace roadtwin
