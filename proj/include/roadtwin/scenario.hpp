#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "roadtwin/random.hpp"

namespace roadtwin {

enum class VehicleClass { car, truck, bus, motorcycle, unknown };

inline constexpr int kVehicleClassCount = 5;

std::string_view to_string(VehicleClass cls);
/// Throws std::invalid_argument on an unknown name.
VehicleClass vehicle_class_from_string(std::string_view name);

enum class Direction { positive, negative };

inline double sign(Direction d) { return d == Direction::positive ? 1.0 : -1.0; }

struct LaneSpec {
  int id = 0;
  double y = 0.0;
  Direction direction = Direction::positive;
  double width = 3.5;
};

struct ClassProfile {
  VehicleClass cls = VehicleClass::car;
  double share = 1.0;
  double length_mean = 4.6;
  double length_sigma = 0.4;
  double length_min = 3.6;
  double length_max = 5.6;
  double width = 1.8;
  double height = 1.5;
};

std::vector<ClassProfile> default_class_mix();

struct ScenarioConfig {
  double stretch_length = 440.0;
  /// Simulated road beyond each end of the stretch; vehicles there are
  /// visible to sensors but not reported as ground truth.
  double approach_margin = 80.0;
  int lanes_per_direction = 3;
  double lane_width = 3.5;
  double median_width = 3.0;
  /// Arrivals per lane and second.
  double spawn_rate = 0.22;
  /// Mean desired speed per lane, outermost (slow) lane first.
  std::vector<double> lane_speed_mean = {25.0, 30.0, 35.0};
  double speed_sigma = 2.5;
  double speed_min = 15.0;
  double speed_max = 45.0;
  std::vector<ClassProfile> classes = default_class_mix();
  /// Bumper-to-bumper gap enforced by the car-following clamp.
  double min_gap = 6.0;
  double dt = 0.05;
  double duration = 120.0;
  double warmup = 30.0;
  double truth_rate = 1.0;
  double truth_offset = 0.5;
  /// Lane changes per vehicle and second; 0 keeps every vehicle in lane.
  double lane_change_rate = 0.0;
  double lane_change_duration = 3.0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct VehicleAgent {
  int id = 0;
  VehicleClass cls = VehicleClass::car;
  double length = 4.6;
  double width = 1.8;
  double height = 1.5;
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  int lane = 0;
  double desired_speed = 0.0;
  double lane_change_left = 0.0;  // seconds of lateral ramp remaining

  double heading() const;
};

struct GroundTruthFrame {
  double t = 0.0;
  std::vector<VehicleAgent> vehicles;
};

std::vector<LaneSpec> make_lanes(const ScenarioConfig& cfg);

class World {
 public:
  World(ScenarioConfig cfg, std::uint64_t seed);

  const ScenarioConfig& config() const { return cfg_; }
  const std::vector<LaneSpec>& lanes() const { return lanes_; }
  std::vector<VehicleAgent>& agents() { return agents_; }
  const std::vector<VehicleAgent>& agents() const { return agents_; }
  double time() const { return time_; }
  void set_time(double t) { time_ = t; }
  Rng& rng() { return rng_; }

  std::int64_t spawned() const { return spawned_; }
  std::int64_t retired() const { return retired_; }

  /// Places an agent directly (tests and hand-built scenes). Assigns an id
  /// when `agent.id` is 0.
  VehicleAgent& add(VehicleAgent agent);

 private:
  friend std::vector<VehicleAgent> spawn_vehicles(World&, double);
  friend void step(World&, double);

  ScenarioConfig cfg_;
  std::vector<LaneSpec> lanes_;
  std::vector<VehicleAgent> agents_;
  std::vector<std::int64_t> pending_;
  Rng rng_;
  double time_ = 0.0;
  int next_id_ = 1;
  std::int64_t spawned_ = 0;
  std::int64_t retired_ = 0;
};

/// Poisson arrivals per lane over `dt`; arrivals that find the entry
/// blocked wait for a later call. Returns the agents placed.
std::vector<VehicleAgent> spawn_vehicles(World& world, double dt);

/// Constant-velocity motion with a car-following clamp; agents past the
/// simulated road are retired. Advances world time by dt.
void step(World& world, double dt);

/// spawn_vehicles followed by step, in increments of at most cfg.dt, until
/// world time reaches `t`.
void advance_to(World& world, double t);

/// Agents whose center lies on the stretch [0, stretch_length].
GroundTruthFrame sample_ground_truth(const World& world, double t);

/// Ground-truth sampling instants over [0, duration).
std::vector<double> truth_times(const ScenarioConfig& cfg);

}  // namespace roadtwin
