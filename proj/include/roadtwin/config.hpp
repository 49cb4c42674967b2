#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "roadtwin/evaluation.hpp"
#include "roadtwin/fusion.hpp"
#include "roadtwin/scenario.hpp"
#include "roadtwin/sensing.hpp"
#include "roadtwin/tracker.hpp"

namespace roadtwin {

/// Invalid configuration; the message starts with the offending field path
/// or the parse position.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MeasurementPointSpec {
  std::string id;
  /// Longitudinal position of the gantry (informational).
  double x = 0.0;
};

/// Installed sensor position and orientation. Angles in radians.
struct SensorMount {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  RigidTransform pose(SensorKind kind) const;
};

/// Deviation of the real sensor from its calibrated mount: rotation
/// angles (rad) about the sensor's x, y, z axes and a world translation.
struct PoseError {
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  bool is_zero() const { return rotation.isZero(0.0) && translation.isZero(0.0); }
};

struct SensorConfig {
  /// Calibrated sensor; spec.pose is derived from `mount`.
  SensorSpec spec;
  SensorMount mount;
  PoseError pose_error;
  /// Per-sensor overrides of the filter's measurement noise.
  std::optional<double> meas_sigma_x;
  std::optional<double> meas_sigma_y;

  /// The sensor as it really sits; used to simulate observations.
  SensorSpec actual() const;
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  double twin_rate = 5.4;
  ScenarioConfig scenario;
  std::vector<MeasurementPointSpec> measurement_points;
  std::vector<SensorConfig> sensors;
  TrackerConfig camera_tracker;
  TrackerConfig radar_tracker;
  FusionConfig fusion;
  EvalConfig eval;

  /// Throws ConfigError.
  void validate() const;

  const SensorConfig* find_sensor(const std::string& id) const;
  std::vector<const SensorConfig*> sensors_of(const std::string& mp_id) const;
  /// Filter settings for one sensor: kind defaults plus the sensor's p_D,
  /// clutter density and noise overrides.
  TrackerConfig tracker_for(const SensorConfig& sensor) const;
  ObservationModel observation_for(const SensorConfig& sensor) const;
};

/// Two measurement points 440 m apart, each with a near and a far camera
/// and two radars per viewing direction.
PipelineConfig default_config();

/// Throws ConfigError on malformed JSON, unknown keys, wrong types or
/// failed validation.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

std::string dump_config(const PipelineConfig& cfg);

/// Stable hash of the canonical serialization.
std::uint64_t config_hash(const PipelineConfig& cfg);

}  // namespace roadtwin
