#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "roadtwin/fusion.hpp"
#include "roadtwin/scenario.hpp"

namespace roadtwin {

struct EvalConfig {
  /// Gating ellipse semi-axes: longitudinal and lateral (m).
  double semi_major = 6.75;
  double semi_minor = 1.1;
  /// Ground truth closer than this to either end of the region is left
  /// out of the interior recall; 0 disables it.
  double boundary_band = 0.0;
  double cell_size = 10.0;
  /// Longitudinal extent of the evaluated area. Unmatched twin objects
  /// outside it are not false positives.
  double region_min_x = 0.0;
  double region_max_x = 440.0;

  void validate() const;
};

class NoTwinFrame : public std::runtime_error {
 public:
  NoTwinFrame() : std::runtime_error("no twin frame overlaps the ground truth") {}
};

struct AlignedFrame {
  GroundTruthFrame truth;
  /// Twin objects advanced to the truth timestamp.
  DigitalTwinFrame twin;
  /// truth.t - source twin timestamp.
  double dt = 0.0;
  /// False when no twin frame lies within half a truth period; `twin` is
  /// then empty.
  bool has_twin = false;
};

/// Pairs every truth frame with the nearest twin frame and extrapolates the
/// twin with constant velocity. Throws NoTwinFrame when no truth frame has
/// a twin frame within half the truth period.
std::vector<AlignedFrame> align_frames(const std::vector<GroundTruthFrame>& truth,
                                       const std::vector<DigitalTwinFrame>& twin,
                                       double truth_period = 1.0);

/// sqrt((dx/a)² + (dy/b)²); at most 1 inside the gating ellipse.
double ellipse_distance(double dx, double dy, const EvalConfig& cfg);

struct Association {
  int truth_id = 0;
  std::uint64_t twin_id = 0;
  double t = 0.0;
  /// Truth position.
  double x = 0.0;
  double y = 0.0;
  /// Twin minus truth, along and across the driving direction.
  double dx = 0.0;
  double dy = 0.0;
  double distance = 0.0;

  double error() const;
};

struct UnmatchedTruth {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
};

struct FrameAssociation {
  double t = 0.0;
  std::vector<Association> pairs;
  std::vector<UnmatchedTruth> unmatched_truth;
  /// Unmatched twin objects inside the region.
  std::vector<std::uint64_t> unmatched_twin;
};

FrameAssociation gate_and_associate(const GroundTruthFrame& truth,
                                    const DigitalTwinFrame& twin,
                                    const EvalConfig& cfg);

struct ErrorCell {
  long ix = 0;
  long iy = 0;
  double mean_error = 0.0;
  std::size_t count = 0;
};

/// Per-cell mean planar error, cells indexed by floor(position / size) of
/// the truth position, ordered by (ix, iy).
std::vector<ErrorCell> error_map(const std::vector<Association>& associations,
                                 double cell_size);

struct MetricsReport {
  std::optional<double> rmse;
  std::optional<double> rmse_x;
  std::optional<double> rmse_y;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> p50;
  std::optional<double> p95;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double boundary_band = 0.0;
  std::optional<double> interior_recall;
  std::size_t fn_boundary = 0;
  std::size_t frames = 0;
  std::optional<double> mean_abs_dt;
  std::vector<ErrorCell> error_grid;
};

/// Nearest-rank percentile of an ascending sequence.
double percentile_sorted(const std::vector<double>& sorted, double p);

MetricsReport compute_metrics(const std::vector<FrameAssociation>& frames,
                              const EvalConfig& cfg);

/// align_frames, gate_and_associate per frame, compute_metrics.
MetricsReport evaluate(const std::vector<GroundTruthFrame>& truth,
                       const std::vector<DigitalTwinFrame>& twin,
                       const EvalConfig& cfg, double truth_period = 1.0);

}  // namespace roadtwin
