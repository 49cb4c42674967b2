#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "roadtwin/config.hpp"
#include "roadtwin/records.hpp"

namespace roadtwin {

inline constexpr const char* kToolVersion = "0.1.0";

/// A configured sensor has no track log.
class MissingStream : public std::runtime_error {
 public:
  explicit MissingStream(const std::string& sensor_id)
      : std::runtime_error("no track stream for sensor '" + sensor_id + "'") {}
};

struct SimulationOutput {
  /// Vehicles on the evaluated stretch at the truth instants.
  std::vector<GroundTruthFrame> truth;
  /// Ordered by time, then by sensor order in the config.
  std::vector<DetectionRecord> detections;
  /// Clutter flags of `detections`, for debugging only.
  std::vector<bool> is_clutter;
  std::vector<int> truth_ids;
};

/// Runs the traffic world and every sensor. `scripted` agents are placed
/// before the warm-up starts. Sensors are simulated on up to `threads`
/// threads; the output does not depend on the thread count.
SimulationOutput simulate(const PipelineConfig& cfg, std::uint64_t seed,
                          const std::vector<VehicleAgent>& scripted = {},
                          int threads = 1);

/// World-space measurement frames of one sensor, one per frame instant,
/// built with the calibrated pose.
std::vector<MeasurementFrame> measurement_frames(const PipelineConfig& cfg,
                                                 const SensorConfig& sensor,
                                                 const std::vector<DetectionRecord>& detections);

using TrackLogs = std::map<std::string, std::vector<LocalTrack>>;

/// One GM-PHD tracker per listed sensor; returns the confirmed tracks of
/// every frame keyed by sensor id.
TrackLogs track_sensors(const PipelineConfig& cfg,
                        const std::vector<DetectionRecord>& detections,
                        const std::vector<std::string>& sensor_ids, int threads = 1);

/// Local fusion per measurement point followed by backend fusion, one
/// frame per twin tick. Every configured sensor must have a log.
std::vector<DigitalTwinFrame> fuse_tracks(const PipelineConfig& cfg, const TrackLogs& logs);

/// Frames at every truth instant, empty where `truth` has none.
std::vector<GroundTruthFrame> complete_truth(const PipelineConfig& cfg,
                                             const std::vector<GroundTruthFrame>& truth);
/// Frames at every twin tick, empty where `twin` has none.
std::vector<DigitalTwinFrame> complete_twin(const PipelineConfig& cfg,
                                            const std::vector<DigitalTwinFrame>& twin);

MetricsReport evaluate_run(const PipelineConfig& cfg,
                           const std::vector<GroundTruthFrame>& truth,
                           const std::vector<DigitalTwinFrame>& twin);

struct StageRecord {
  std::string name;
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;
};

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  std::vector<StageRecord> stages;
};

/// Writes via a temporary file and rename.
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

/// Writes `content` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string tracks_file_name(const std::string& sensor_id);

struct PipelineResult {
  MetricsReport report;
  RunManifest manifest;
};

/// simulate, track, fuse and evaluate, each stage reading the files the
/// previous one wrote into `out_dir`.
PipelineResult run_pipeline(const PipelineConfig& cfg, std::uint64_t seed,
                            const std::filesystem::path& out_dir, int threads = 1);

/// Table with the RMSE, RMSE_x, RMSE_y, precision and recall columns.
std::string summary_table(const MetricsReport& report);

}  // namespace roadtwin
