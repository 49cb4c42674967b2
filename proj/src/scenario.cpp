#include "roadtwin/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace roadtwin {

std::string_view to_string(VehicleClass cls) {
  switch (cls) {
    case VehicleClass::car: return "car";
    case VehicleClass::truck: return "truck";
    case VehicleClass::bus: return "bus";
    case VehicleClass::motorcycle: return "motorcycle";
    case VehicleClass::unknown: return "unknown";
  }
  return "unknown";
}

VehicleClass vehicle_class_from_string(std::string_view name) {
  for (int i = 0; i < kVehicleClassCount; ++i) {
    const auto cls = static_cast<VehicleClass>(i);
    if (to_string(cls) == name) return cls;
  }
  throw std::invalid_argument("unknown vehicle class '" + std::string(name) +
                              "'");
}

std::vector<ClassProfile> default_class_mix() {
  return {
      {VehicleClass::car, 0.86, 4.6, 0.4, 3.6, 5.6, 1.8, 1.5},
      {VehicleClass::truck, 0.10, 10.0, 1.5, 7.0, 13.0, 2.5, 3.5},
      {VehicleClass::bus, 0.01, 12.0, 0.4, 11.0, 13.0, 2.55, 3.2},
      {VehicleClass::motorcycle, 0.03, 2.2, 0.1, 1.9, 2.5, 0.8, 1.4},
  };
}

void ScenarioConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok)
      throw std::invalid_argument(std::string("scenario.") + field + ": " +
                                  what);
  };
  require(stretch_length > 0.0, "stretch_length", "must be positive");
  require(approach_margin >= 0.0, "approach_margin", "must be non-negative");
  require(lanes_per_direction > 0, "lanes_per_direction", "must be positive");
  require(lane_width > 0.0, "lane_width", "must be positive");
  require(median_width >= 0.0, "median_width", "must be non-negative");
  require(spawn_rate >= 0.0, "spawn_rate", "must be non-negative");
  require(lane_speed_mean.size() == 1 ||
              lane_speed_mean.size() ==
                  static_cast<std::size_t>(lanes_per_direction),
          "lane_speed_mean", "needs one entry or one per lane");
  require(speed_sigma >= 0.0, "speed_sigma", "must be non-negative");
  require(speed_min > 0.0 && speed_max >= speed_min, "speed_min",
          "needs 0 < speed_min <= speed_max");
  require(!classes.empty(), "classes", "must not be empty");
  double total = 0.0;
  for (const auto& c : classes) {
    require(c.share >= 0.0, "classes.share", "must be non-negative");
    require(c.length_min > 0.0 && c.length_max >= c.length_min,
            "classes.length_min", "needs 0 < length_min <= length_max");
    require(c.width > 0.0 && c.height > 0.0, "classes.width",
            "extent must be positive");
    total += c.share;
  }
  require(total > 0.0, "classes", "shares must not all be zero");
  require(min_gap > 0.0, "min_gap", "must be positive");
  require(dt > 0.0, "dt", "must be positive");
  require(duration >= 0.0, "duration", "must be non-negative");
  require(warmup >= 0.0, "warmup", "must be non-negative");
  require(truth_rate > 0.0, "truth_rate", "must be positive");
  require(truth_offset >= 0.0, "truth_offset", "must be non-negative");
  require(lane_change_rate >= 0.0, "lane_change_rate", "must be non-negative");
  require(lane_change_duration > 0.0, "lane_change_duration",
          "must be positive");
}

double VehicleAgent::heading() const {
  if (vx == 0.0 && vy == 0.0) return 0.0;
  return std::atan2(vy, vx);
}

std::vector<LaneSpec> make_lanes(const ScenarioConfig& cfg) {
  std::vector<LaneSpec> lanes;
  const int n = cfg.lanes_per_direction;
  const double half_median = cfg.median_width / 2.0;
  int id = 0;
  // lane index 0 is the outermost lane of its roadway
  for (Direction dir : {Direction::positive, Direction::negative}) {
    for (int i = 0; i < n; ++i) {
      const double offset = half_median + (n - 1 - i + 0.5) * cfg.lane_width;
      // right-hand traffic: +x traffic drives on the -y side
      const double y = dir == Direction::positive ? -offset : offset;
      lanes.push_back({id++, y, dir, cfg.lane_width});
    }
  }
  return lanes;
}

World::World(ScenarioConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), lanes_(make_lanes(cfg_)), rng_(seed) {
  cfg_.validate();
  pending_.assign(lanes_.size(), 0);
}

VehicleAgent& World::add(VehicleAgent agent) {
  if (agent.id == 0) agent.id = next_id_++;
  next_id_ = std::max(next_id_, agent.id + 1);
  ++spawned_;
  agents_.push_back(agent);
  return agents_.back();
}

namespace {

// position along the lane's driving direction
double progress(const VehicleAgent& a, Direction d) { return sign(d) * a.x; }

double lane_speed(const ScenarioConfig& cfg, int lane_index) {
  if (cfg.lane_speed_mean.size() == 1) return cfg.lane_speed_mean[0];
  return cfg.lane_speed_mean[static_cast<std::size_t>(lane_index)];
}

const ClassProfile& sample_class(const ScenarioConfig& cfg, Rng& rng) {
  double total = 0.0;
  for (const auto& c : cfg.classes) total += c.share;
  double u = rng.uniform() * total;
  for (const auto& c : cfg.classes) {
    if (u < c.share) return c;
    u -= c.share;
  }
  return cfg.classes.back();
}

// true when an agent of `length` centered at entry progress `s_entry` keeps
// min_gap to every agent of the lane
bool lane_clear(const World& world, int lane, double s_center, double length) {
  const auto& cfg = world.config();
  const Direction dir = world.lanes()[static_cast<std::size_t>(lane)].direction;
  for (const auto& a : world.agents()) {
    if (a.lane != lane) continue;
    const double s = progress(a, dir);
    const double gap = std::abs(s - s_center) - (a.length + length) / 2.0;
    if (gap < cfg.min_gap) return false;
  }
  return true;
}

}  // namespace

std::vector<VehicleAgent> spawn_vehicles(World& world, double dt) {
  std::vector<VehicleAgent> placed;
  const auto& cfg = world.cfg_;
  for (std::size_t li = 0; li < world.lanes_.size(); ++li) {
    const LaneSpec& lane = world.lanes_[li];
    world.pending_[li] +=
        static_cast<std::int64_t>(world.rng_.poisson(cfg.spawn_rate * dt));
    while (world.pending_[li] > 0) {
      const ClassProfile& profile = sample_class(cfg, world.rng_);
      double length = world.rng_.normal(profile.length_mean, profile.length_sigma);
      length = std::clamp(length, profile.length_min, profile.length_max);
      const double s_entry = -cfg.approach_margin;
      const double s_center = s_entry;
      if (!lane_clear(world, lane.id, s_center, length)) break;
      const int lane_index = lane.id % cfg.lanes_per_direction;
      double speed = world.rng_.normal(lane_speed(cfg, lane_index), cfg.speed_sigma);
      speed = std::clamp(speed, cfg.speed_min, cfg.speed_max);
      VehicleAgent a;
      a.cls = profile.cls;
      a.length = length;
      a.width = profile.width;
      a.height = profile.height;
      a.lane = lane.id;
      a.y = lane.y;
      a.x = lane.direction == Direction::positive
                ? s_center
                : cfg.stretch_length - s_center;
      a.desired_speed = speed;
      a.vx = sign(lane.direction) * speed;
      placed.push_back(world.add(a));
      --world.pending_[li];
    }
  }
  return placed;
}

void step(World& world, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  const auto& cfg = world.cfg_;
  auto& agents = world.agents_;

  // lane-change triggers
  if (cfg.lane_change_rate > 0.0) {
    for (auto& a : agents) {
      if (a.lane_change_left > 0.0) continue;
      if (!world.rng_.bernoulli(cfg.lane_change_rate * dt)) continue;
      const int n = cfg.lanes_per_direction;
      const int base = (a.lane / n) * n;
      const int idx = a.lane - base;
      int target = idx + (world.rng_.bernoulli(0.5) ? 1 : -1);
      if (target < 0 || target >= n) target = idx + (target < 0 ? 1 : -1);
      if (target < 0 || target >= n) continue;
      const int lane_id = base + target;
      const LaneSpec& tl = world.lanes_[static_cast<std::size_t>(lane_id)];
      if (!lane_clear(world, lane_id, progress(a, tl.direction), a.length))
        continue;
      a.lane = lane_id;
      a.vy = (tl.y - a.y) / cfg.lane_change_duration;
      a.lane_change_left = cfg.lane_change_duration;
    }
  }

  for (auto& a : agents) {
    a.x += a.vx * dt;
    if (a.lane_change_left > 0.0) {
      const double ramp = std::min(dt, a.lane_change_left);
      a.y += a.vy * ramp;
      a.lane_change_left -= ramp;
      if (a.lane_change_left <= 1e-12) {
        a.lane_change_left = 0.0;
        a.y = world.lanes_[static_cast<std::size_t>(a.lane)].y;
        a.vy = 0.0;
      }
    }
  }

  // car-following clamp, front-most vehicle first in every lane
  for (const LaneSpec& lane : world.lanes_) {
    std::vector<VehicleAgent*> in_lane;
    for (auto& a : agents)
      if (a.lane == lane.id) in_lane.push_back(&a);
    std::sort(in_lane.begin(), in_lane.end(),
              [&](const VehicleAgent* l, const VehicleAgent* r) {
                const double sl = progress(*l, lane.direction);
                const double sr = progress(*r, lane.direction);
                return sl != sr ? sl > sr : l->id < r->id;
              });
    const double dir = sign(lane.direction);
    for (std::size_t i = 0; i < in_lane.size(); ++i) {
      VehicleAgent& f = *in_lane[i];
      double speed = f.desired_speed;
      if (i > 0) {
        const VehicleAgent& leader = *in_lane[i - 1];
        const double s_leader = progress(leader, lane.direction);
        const double s_f = progress(f, lane.direction);
        const double gap =
            (s_leader - leader.length / 2.0) - (s_f + f.length / 2.0);
        // a follower held at the gap keeps the leader's speed
        if (gap <= cfg.min_gap + 1e-9) {
          if (gap < cfg.min_gap) {
            const double s_new =
                s_leader - leader.length / 2.0 - cfg.min_gap - f.length / 2.0;
            f.x = dir * s_new;
          }
          speed = std::min(speed, std::abs(leader.vx));
        }
      }
      f.vx = dir * speed;
    }
  }

  const double s_end = cfg.stretch_length + cfg.approach_margin;
  const auto before = agents.size();
  std::erase_if(agents, [&](const VehicleAgent& a) {
    const Direction d = world.lanes_[static_cast<std::size_t>(a.lane)].direction;
    const double s = d == Direction::positive ? a.x : cfg.stretch_length - a.x;
    return s > s_end;
  });
  world.retired_ += static_cast<std::int64_t>(before - agents.size());
  world.time_ += dt;
}

void advance_to(World& world, double t) {
  const double max_dt = world.config().dt;
  while (world.time() < t - 1e-12) {
    const double dt = std::min(max_dt, t - world.time());
    spawn_vehicles(world, dt);
    step(world, dt);
  }
  world.set_time(t);
}

GroundTruthFrame sample_ground_truth(const World& world, double t) {
  GroundTruthFrame frame;
  frame.t = t;
  const double length = world.config().stretch_length;
  for (const auto& a : world.agents())
    if (a.x >= 0.0 && a.x <= length) frame.vehicles.push_back(a);
  std::sort(frame.vehicles.begin(), frame.vehicles.end(),
            [](const VehicleAgent& l, const VehicleAgent& r) {
              return l.id < r.id;
            });
  return frame;
}

std::vector<double> truth_times(const ScenarioConfig& cfg) {
  std::vector<double> times;
  for (long k = 0;; ++k) {
    const double t = cfg.truth_offset + static_cast<double>(k) / cfg.truth_rate;
    if (t >= cfg.duration) break;
    times.push_back(t);
  }
  return times;
}

}  // namespace roadtwin
