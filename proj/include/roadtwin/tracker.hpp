#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "roadtwin/scenario.hpp"
#include "roadtwin/sensing.hpp"

namespace roadtwin {

/// (x, y, vx, vy)
using StateVector = Eigen::Vector4d;
using StateMatrix = Eigen::Matrix4d;

class NonPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GaussianComponent {
  double weight = 0.0;
  StateVector mean = StateVector::Zero();
  StateMatrix cov = StateMatrix::Identity();
  /// Track-tree label: measurement-updated children inherit the parent's.
  std::uint64_t label = 0;
  int age = 0;
  /// Index of the measurement that produced this component in the last
  /// update, -1 for a missed-detection or predicted term.
  int measurement = -1;
};

struct Intensity {
  double t = 0.0;
  std::vector<GaussianComponent> components;

  /// Expected number of targets.
  double total_weight() const;
};

struct TrackerConfig {
  double p_survival = 0.99;
  double p_detect = 0.97;
  /// Clutter intensity per m²; the harness derives it from the sensor's
  /// clutter rate and ground coverage.
  double clutter_density = 0.0;
  double accel_sigma = 2.0;
  double prune_threshold = 1e-5;
  double merge_threshold = 4.0;
  int max_components = 300;
  double extract_threshold = 0.5;
  double birth_weight = 0.25;
  double birth_velocity_variance = 100.0;
  int miss_limit = 3;
  int confirm_length = 2;
  /// Two detections further apart than birth_speed_max * dt never pair.
  double birth_speed_max = 50.0;
  /// Mahalanobis² within which a measurement counts as explained by an
  /// existing component of weight >= explain_min_weight.
  double birth_gate = 16.0;
  double explain_min_weight = 0.01;
  /// Measurement/component pairs beyond this Mahalanobis² are skipped in
  /// the update; their likelihood is negligible.
  double update_gate = 50.0;
  /// Observation noise assumed by the filter.
  double meas_sigma_x = 1.0;
  double meas_sigma_y = 1.0;
  double meas_sigma_vel = 0.5;

  void validate() const;
};

/// Linear-Gaussian observation of the first `dim` state entries.
struct ObservationModel {
  int dim = 2;
  /// Top-left dim x dim block is the measurement covariance.
  Eigen::Matrix4d noise = Eigen::Matrix4d::Identity();

  Eigen::MatrixXd H() const;
  Eigen::MatrixXd R() const;

  static ObservationModel position(double sigma_x, double sigma_y);
  static ObservationModel position_velocity(double sigma_pos, double sigma_vel);
  static ObservationModel from_config(const TrackerConfig& cfg, int dim);
};

StateMatrix cv_transition(double dt);
/// Discrete white-noise-acceleration covariance, independent per axis.
StateMatrix cv_process_noise(double dt, double accel_sigma);

Intensity predict(const Intensity& intensity, double dt,
                  const TrackerConfig& cfg);

Intensity update(const Intensity& intensity, const MeasurementFrame& frame,
                 const ObservationModel& obs, const TrackerConfig& cfg);

std::vector<bool> explained_measurements(const Intensity& predicted,
                                         const MeasurementFrame& frame,
                                         const ObservationModel& obs,
                                         const TrackerConfig& cfg);

struct BirthCandidate {
  Eigen::Vector4d z = Eigen::Vector4d::Zero();
  double t = 0.0;
  VehicleClass cls = VehicleClass::unknown;
};

/// Hands out labels that are never reused within a run.
class LabelSource {
 public:
  std::uint64_t next() { return next_++; }

 private:
  std::uint64_t next_ = 1;
};

struct BirthResult {
  std::vector<GaussianComponent> components;
  std::vector<BirthCandidate> candidates;
};

BirthResult birth_step(const std::vector<BirthCandidate>& candidates,
                       const MeasurementFrame& frame,
                       const std::vector<bool>& explained,
                       const ObservationModel& obs, const TrackerConfig& cfg,
                       LabelSource& labels);

Intensity prune_and_merge(const Intensity& intensity, const TrackerConfig& cfg);

struct Estimate {
  std::uint64_t label = 0;
  double weight = 0.0;
  StateVector mean = StateVector::Zero();
  StateMatrix cov = StateMatrix::Identity();
  int measurement = -1;
};

/// Heaviest component per label with weight >= threshold, ordered by label.
std::vector<Estimate> extract_estimates(const Intensity& intensity,
                                        double threshold);

enum class TrackStatus { tentative, confirmed, dead };

std::string_view to_string(TrackStatus status);
TrackStatus track_status_from_string(std::string_view name);

struct Track {
  std::uint64_t label = 0;
  StateVector state = StateVector::Zero();
  StateMatrix cov = StateMatrix::Identity();
  TrackStatus status = TrackStatus::tentative;
  std::array<int, kVehicleClassCount> class_votes{};
  double last_update = 0.0;
  int hits = 0;
  int misses = 0;

  VehicleClass majority_class() const;
};

/// Confirmation and termination bookkeeping on top of the label tree.
class TrackManager {
 public:
  /// Folds this frame's estimates in and returns every live track with its
  /// state at `t` (coasting tracks are extrapolated).
  std::vector<Track> update(const std::vector<Estimate>& estimates,
                            const TrackerConfig& cfg, double t,
                            const std::vector<VehicleClass>& measurement_classes);

  bool is_dead(std::uint64_t label) const { return dead_.contains(label); }
  /// Labels that died in the last update.
  const std::vector<std::uint64_t>& newly_dead() const { return newly_dead_; }
  const std::map<std::uint64_t, Track>& tracks() const { return tracks_; }

 private:
  std::map<std::uint64_t, Track> tracks_;
  std::set<std::uint64_t> dead_;
  std::vector<std::uint64_t> newly_dead_;
};

std::vector<Track> extract_tracks(const Intensity& intensity,
                                  const TrackerConfig& cfg, double t,
                                  TrackManager& manager,
                                  const std::vector<VehicleClass>& classes);

/// One GM-PHD tracker for one sensor's measurement stream.
class SensorTracker {
 public:
  SensorTracker(TrackerConfig cfg, ObservationModel obs);

  /// Runs predict, birth, update, reduction and extraction for one frame.
  /// Returns the confirmed tracks. Throws std::invalid_argument when the
  /// frame is not later than the previous one.
  std::vector<Track> step(const MeasurementFrame& frame);

  const Intensity& intensity() const { return intensity_; }
  const TrackerConfig& config() const { return cfg_; }
  const ObservationModel& observation() const { return obs_; }
  const std::vector<Track>& live_tracks() const { return live_; }
  /// Sum of weights right after the last update, before reduction.
  double posterior_mass() const { return posterior_mass_; }

 private:
  TrackerConfig cfg_;
  ObservationModel obs_;
  Intensity intensity_;
  std::vector<BirthCandidate> candidates_;
  TrackManager manager_;
  LabelSource labels_;
  std::vector<Track> live_;
  double posterior_mass_ = 0.0;
  bool started_ = false;
};

}  // namespace roadtwin
