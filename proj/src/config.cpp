#include "roadtwin/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

namespace roadtwin {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

// Reads the members of one JSON object, remembering which keys were used
// so that leftovers can be rejected.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string at(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  const json& require(const std::string& key) {
    const json* v = find(key);
    if (!v) fail(at(key), "missing required field");
    return *v;
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) out = number(*v, at(key));
  }

  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(at(key), "expected an integer");
      out = v->get<int>();
    }
  }

  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
        fail(at(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void get(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(at(key), "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i)
        out.push_back(number((*v)[i], at(key) + "[" + std::to_string(i) + "]"));
    }
  }

  void get(const std::string& key, Eigen::Vector3d& out) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != 3) fail(at(key), "expected an array of 3 numbers");
      for (int i = 0; i < 3; ++i)
        out[i] = number((*v)[static_cast<std::size_t>(i)], at(key));
    }
  }

  void get_angle(const std::string& key, double& radians) {
    if (const json* v = find(key)) radians = number(*v, at(key)) * kDeg;
  }

  void get(const std::string& key, std::optional<double>& out) {
    if (const json* v = find(key)) out = number(*v, at(key));
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.contains(it.key())) fail(at(it.key()), "unknown key");
  }

  static double number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class F>
void with_path(const std::string& path, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
}

// --- reading ---------------------------------------------------------------

ClassProfile read_class(const json& j, const std::string& path) {
  Fields f(j, path);
  ClassProfile p;
  std::string name = "car";
  f.get("class", name);
  with_path(f.at("class"), [&] { p.cls = vehicle_class_from_string(name); });
  f.get("share", p.share);
  f.get("length_mean", p.length_mean);
  f.get("length_sigma", p.length_sigma);
  f.get("length_min", p.length_min);
  f.get("length_max", p.length_max);
  f.get("width", p.width);
  f.get("height", p.height);
  f.done();
  return p;
}

ScenarioConfig read_scenario(const json& j, const std::string& path) {
  Fields f(j, path);
  ScenarioConfig s;
  f.get("stretch_length", s.stretch_length);
  f.get("approach_margin", s.approach_margin);
  f.get("lanes_per_direction", s.lanes_per_direction);
  f.get("lane_width", s.lane_width);
  f.get("median_width", s.median_width);
  f.get("spawn_rate", s.spawn_rate);
  f.get("lane_speed_mean", s.lane_speed_mean);
  f.get("speed_sigma", s.speed_sigma);
  f.get("speed_min", s.speed_min);
  f.get("speed_max", s.speed_max);
  if (const json* c = f.find("classes")) {
    if (!c->is_array()) fail(f.at("classes"), "expected an array");
    s.classes.clear();
    for (std::size_t i = 0; i < c->size(); ++i)
      s.classes.push_back(read_class((*c)[i], f.at("classes") + "[" + std::to_string(i) + "]"));
  }
  f.get("min_gap", s.min_gap);
  f.get("dt", s.dt);
  f.get("duration", s.duration);
  f.get("warmup", s.warmup);
  f.get("truth_rate", s.truth_rate);
  f.get("truth_offset", s.truth_offset);
  f.get("lane_change_rate", s.lane_change_rate);
  f.get("lane_change_duration", s.lane_change_duration);
  f.done();
  return s;
}

TrackerConfig read_tracker(const json& j, const std::string& path, TrackerConfig t) {
  Fields f(j, path);
  f.get("p_survival", t.p_survival);
  f.get("accel_sigma", t.accel_sigma);
  f.get("prune_threshold", t.prune_threshold);
  f.get("merge_threshold", t.merge_threshold);
  f.get("max_components", t.max_components);
  f.get("extract_threshold", t.extract_threshold);
  f.get("birth_weight", t.birth_weight);
  f.get("birth_velocity_variance", t.birth_velocity_variance);
  f.get("miss_limit", t.miss_limit);
  f.get("confirm_length", t.confirm_length);
  f.get("birth_speed_max", t.birth_speed_max);
  f.get("birth_gate", t.birth_gate);
  f.get("explain_min_weight", t.explain_min_weight);
  f.get("update_gate", t.update_gate);
  f.get("meas_sigma_x", t.meas_sigma_x);
  f.get("meas_sigma_y", t.meas_sigma_y);
  f.get("meas_sigma_vel", t.meas_sigma_vel);
  f.done();
  return t;
}

FusionConfig read_fusion(const json& j, const std::string& path) {
  Fields f(j, path);
  FusionConfig c;
  f.get("gate", c.gate);
  std::string omega(to_string(c.omega));
  f.get("omega", omega);
  with_path(f.at("omega"), [&] { c.omega = omega_policy_from_string(omega); });
  f.get("handover_persistence", c.handover_persistence);
  f.get("miss_limit", c.miss_limit);
  f.get("accel_sigma", c.accel_sigma);
  if (const json* v = f.find("class_length")) {
    Fields lf(*v, f.at("class_length"));
    for (int k = 0; k < kVehicleClassCount; ++k)
      lf.get(std::string(to_string(static_cast<VehicleClass>(k))),
             c.class_length[static_cast<std::size_t>(k)]);
    lf.done();
  }
  f.get("extent_factor", c.extent_factor);
  f.get("extent_sigma_y", c.extent_sigma_y);
  f.get("velocity_gate", c.velocity_gate);
  f.get("velocity_sigma", c.velocity_sigma);
  f.done();
  return c;
}

EvalConfig read_eval(const json& j, const std::string& path) {
  Fields f(j, path);
  EvalConfig e;
  f.get("semi_major", e.semi_major);
  f.get("semi_minor", e.semi_minor);
  f.get("boundary_band", e.boundary_band);
  f.get("cell_size", e.cell_size);
  f.get("region_min_x", e.region_min_x);
  f.get("region_max_x", e.region_max_x);
  f.done();
  return e;
}

ConfusionMatrix read_confusion(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 4) fail(path, "expected a 4x4 array");
  ConfusionMatrix m{};
  for (std::size_t r = 0; r < 4; ++r) {
    const std::string row_path = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != 4) fail(row_path, "expected 4 numbers");
    for (std::size_t c = 0; c < 4; ++c) m[r][c] = Fields::number(j[r][c], row_path);
  }
  return m;
}

SensorConfig read_sensor(const json& j, const std::string& path) {
  Fields f(j, path);
  SensorConfig s;
  auto& spec = s.spec;
  spec.id = "";
  f.get("id", spec.id);
  std::string kind = "camera";
  f.get("kind", kind);
  with_path(f.at("kind"), [&] { spec.kind = sensor_kind_from_string(kind); });
  f.get("mp", spec.mp_id);
  f.get("position", s.mount.position);
  f.get_angle("yaw_deg", s.mount.yaw);
  f.get_angle("pitch_deg", s.mount.pitch);
  f.get_angle("roll_deg", s.mount.roll);
  f.get("p_detect", spec.p_detect);
  f.get("clutter_rate", spec.clutter_rate);
  f.get("frame_rate", spec.frame_rate);
  f.get("meas_sigma_x", s.meas_sigma_x);
  f.get("meas_sigma_y", s.meas_sigma_y);
  if (const json* c = f.find("camera")) {
    Fields cf(*c, f.at("camera"));
    auto& cam = spec.camera;
    cf.get("fx", cam.intrinsics.fx);
    cf.get("fy", cam.intrinsics.fy);
    cf.get("cx", cam.intrinsics.cx);
    cf.get("cy", cam.intrinsics.cy);
    cf.get("width", cam.intrinsics.width);
    cf.get("height", cam.intrinsics.height);
    cf.get("pixel_sigma", cam.pixel_sigma);
    cf.get("max_range", cam.max_range);
    cf.get("occlusion_fraction", cam.occlusion_fraction);
    cf.get("min_visible_fraction", cam.min_visible_fraction);
    cf.get("clutter_min_size", cam.clutter_min_size);
    cf.get("clutter_max_size", cam.clutter_max_size);
    if (const json* m = cf.find("confusion")) cam.confusion = read_confusion(*m, cf.at("confusion"));
    cf.done();
  }
  if (const json* r = f.find("radar")) {
    Fields rf(*r, f.at("radar"));
    auto& rad = spec.radar;
    rf.get_angle("azimuth_min_deg", rad.azimuth_min);
    rf.get_angle("azimuth_max_deg", rad.azimuth_max);
    rf.get("max_range", rad.max_range);
    rf.get("sigma_pos", rad.sigma_pos);
    rf.get("sigma_vel", rad.sigma_vel);
    rf.get("clutter_speed", rad.clutter_speed);
    rf.done();
  }
  if (const json* p = f.find("pose_error")) {
    Fields pf(*p, f.at("pose_error"));
    Eigen::Vector3d rot_deg = s.pose_error.rotation / kDeg;
    pf.get("rotation_deg", rot_deg);
    s.pose_error.rotation = rot_deg * kDeg;
    pf.get("translation", s.pose_error.translation);
    pf.done();
  }
  f.done();
  spec.pose = s.mount.pose(spec.kind);
  return s;
}

// --- writing ---------------------------------------------------------------

ojson vec3(const Eigen::Vector3d& v) { return ojson::array({v.x(), v.y(), v.z()}); }

// degrees rounded so that a parse/dump cycle reproduces the text
double degrees(double radians) { return std::round(radians / kDeg * 1e9) / 1e9; }

ojson vec3_degrees(const Eigen::Vector3d& v) {
  return ojson::array({degrees(v.x()), degrees(v.y()), degrees(v.z())});
}

ojson write_scenario(const ScenarioConfig& s) {
  ojson j;
  j["stretch_length"] = s.stretch_length;
  j["approach_margin"] = s.approach_margin;
  j["lanes_per_direction"] = s.lanes_per_direction;
  j["lane_width"] = s.lane_width;
  j["median_width"] = s.median_width;
  j["spawn_rate"] = s.spawn_rate;
  j["lane_speed_mean"] = s.lane_speed_mean;
  j["speed_sigma"] = s.speed_sigma;
  j["speed_min"] = s.speed_min;
  j["speed_max"] = s.speed_max;
  ojson classes = ojson::array();
  for (const auto& p : s.classes) {
    ojson c;
    c["class"] = std::string(to_string(p.cls));
    c["share"] = p.share;
    c["length_mean"] = p.length_mean;
    c["length_sigma"] = p.length_sigma;
    c["length_min"] = p.length_min;
    c["length_max"] = p.length_max;
    c["width"] = p.width;
    c["height"] = p.height;
    classes.push_back(c);
  }
  j["classes"] = classes;
  j["min_gap"] = s.min_gap;
  j["dt"] = s.dt;
  j["duration"] = s.duration;
  j["warmup"] = s.warmup;
  j["truth_rate"] = s.truth_rate;
  j["truth_offset"] = s.truth_offset;
  j["lane_change_rate"] = s.lane_change_rate;
  j["lane_change_duration"] = s.lane_change_duration;
  return j;
}

ojson write_tracker(const TrackerConfig& t) {
  ojson j;
  j["p_survival"] = t.p_survival;
  j["accel_sigma"] = t.accel_sigma;
  j["prune_threshold"] = t.prune_threshold;
  j["merge_threshold"] = t.merge_threshold;
  j["max_components"] = t.max_components;
  j["extract_threshold"] = t.extract_threshold;
  j["birth_weight"] = t.birth_weight;
  j["birth_velocity_variance"] = t.birth_velocity_variance;
  j["miss_limit"] = t.miss_limit;
  j["confirm_length"] = t.confirm_length;
  j["birth_speed_max"] = t.birth_speed_max;
  j["birth_gate"] = t.birth_gate;
  j["explain_min_weight"] = t.explain_min_weight;
  j["update_gate"] = t.update_gate;
  j["meas_sigma_x"] = t.meas_sigma_x;
  j["meas_sigma_y"] = t.meas_sigma_y;
  j["meas_sigma_vel"] = t.meas_sigma_vel;
  return j;
}

ojson write_sensor(const SensorConfig& s) {
  const auto& spec = s.spec;
  ojson j;
  j["id"] = spec.id;
  j["kind"] = std::string(to_string(spec.kind));
  j["mp"] = spec.mp_id;
  j["position"] = vec3(s.mount.position);
  j["yaw_deg"] = degrees(s.mount.yaw);
  j["pitch_deg"] = degrees(s.mount.pitch);
  j["roll_deg"] = degrees(s.mount.roll);
  j["p_detect"] = spec.p_detect;
  j["clutter_rate"] = spec.clutter_rate;
  j["frame_rate"] = spec.frame_rate;
  if (s.meas_sigma_x) j["meas_sigma_x"] = *s.meas_sigma_x;
  if (s.meas_sigma_y) j["meas_sigma_y"] = *s.meas_sigma_y;
  if (spec.kind == SensorKind::camera) {
    const auto& cam = spec.camera;
    ojson c;
    c["fx"] = cam.intrinsics.fx;
    c["fy"] = cam.intrinsics.fy;
    c["cx"] = cam.intrinsics.cx;
    c["cy"] = cam.intrinsics.cy;
    c["width"] = cam.intrinsics.width;
    c["height"] = cam.intrinsics.height;
    c["pixel_sigma"] = cam.pixel_sigma;
    c["max_range"] = cam.max_range;
    c["occlusion_fraction"] = cam.occlusion_fraction;
    c["min_visible_fraction"] = cam.min_visible_fraction;
    c["clutter_min_size"] = cam.clutter_min_size;
    c["clutter_max_size"] = cam.clutter_max_size;
    ojson m = ojson::array();
    for (const auto& row : cam.confusion) m.push_back(ojson(row));
    c["confusion"] = m;
    j["camera"] = c;
  } else {
    const auto& rad = spec.radar;
    ojson r;
    r["azimuth_min_deg"] = degrees(rad.azimuth_min);
    r["azimuth_max_deg"] = degrees(rad.azimuth_max);
    r["max_range"] = rad.max_range;
    r["sigma_pos"] = rad.sigma_pos;
    r["sigma_vel"] = rad.sigma_vel;
    r["clutter_speed"] = rad.clutter_speed;
    j["radar"] = r;
  }
  if (!s.pose_error.is_zero()) {
    ojson p;
    p["rotation_deg"] = vec3_degrees(s.pose_error.rotation);
    p["translation"] = vec3(s.pose_error.translation);
    j["pose_error"] = p;
  }
  return j;
}

}  // namespace

RigidTransform SensorMount::pose(SensorKind kind) const {
  if (kind == SensorKind::camera) return camera_pose(position, yaw, pitch, roll);
  return radar_pose(position, yaw);
}

SensorSpec SensorConfig::actual() const {
  if (pose_error.is_zero()) return spec;
  const Eigen::Matrix3d dr = rotation_x(pose_error.rotation.x()) *
                             rotation_y(pose_error.rotation.y()) *
                             rotation_z(pose_error.rotation.z());
  return perturb_pose(spec, dr, pose_error.translation);
}

void PipelineConfig::validate() const {
  with_path("scenario", [&] { scenario.validate(); });
  if (!(twin_rate > 0.0)) fail("twin_rate", "must be positive");
  std::set<std::string> mps;
  for (std::size_t i = 0; i < measurement_points.size(); ++i) {
    const auto& mp = measurement_points[i];
    const std::string path = "measurement_points[" + std::to_string(i) + "]";
    if (mp.id.empty()) fail(path + ".id", "must not be empty");
    if (!mps.insert(mp.id).second) fail(path + ".id", "duplicate id '" + mp.id + "'");
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const auto& s = sensors[i];
    const std::string path = "sensors[" + std::to_string(i) + "]";
    with_path(path, [&] { s.spec.validate(); });
    if (!ids.insert(s.spec.id).second) fail(path + ".id", "duplicate id '" + s.spec.id + "'");
    if (!mps.contains(s.spec.mp_id))
      fail(path + ".mp", "unknown measurement point '" + s.spec.mp_id + "'");
    if (s.meas_sigma_x && !(*s.meas_sigma_x > 0.0)) fail(path + ".meas_sigma_x", "must be positive");
    if (s.meas_sigma_y && !(*s.meas_sigma_y > 0.0)) fail(path + ".meas_sigma_y", "must be positive");
  }
  with_path("tracker.camera", [&] { camera_tracker.validate(); });
  with_path("tracker.radar", [&] { radar_tracker.validate(); });
  with_path("fusion", [&] { fusion.validate(); });
  with_path("eval", [&] { eval.validate(); });
}

const SensorConfig* PipelineConfig::find_sensor(const std::string& id) const {
  for (const auto& s : sensors)
    if (s.spec.id == id) return &s;
  return nullptr;
}

std::vector<const SensorConfig*> PipelineConfig::sensors_of(const std::string& mp_id) const {
  std::vector<const SensorConfig*> out;
  for (const auto& s : sensors)
    if (s.spec.mp_id == mp_id) out.push_back(&s);
  return out;
}

TrackerConfig PipelineConfig::tracker_for(const SensorConfig& sensor) const {
  TrackerConfig t =
      sensor.spec.kind == SensorKind::camera ? camera_tracker : radar_tracker;
  t.p_detect = sensor.spec.p_detect;
  const double area = surveillance_area(sensor.spec);
  t.clutter_density = area > 0.0 ? sensor.spec.clutter_rate / area : 0.0;
  if (sensor.meas_sigma_x) t.meas_sigma_x = *sensor.meas_sigma_x;
  if (sensor.meas_sigma_y) t.meas_sigma_y = *sensor.meas_sigma_y;
  return t;
}

ObservationModel PipelineConfig::observation_for(const SensorConfig& sensor) const {
  return ObservationModel::from_config(tracker_for(sensor),
                                       sensor.spec.kind == SensorKind::camera ? 2 : 4);
}

PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.measurement_points = {{"mp1", 0.0}, {"mp2", cfg.scenario.stretch_length}};

  cfg.camera_tracker.meas_sigma_x = 2.5;
  cfg.camera_tracker.meas_sigma_y = 0.5;
  // longitudinal radar R well above the sensor noise
  cfg.radar_tracker.meas_sigma_x = 3.3;
  cfg.radar_tracker.meas_sigma_y = 0.7;
  cfg.radar_tracker.meas_sigma_vel = 0.5;

  struct View {
    const char* name;
    double yaw;
  };
  for (const auto& mp : cfg.measurement_points) {
    for (const View view : {View{"east", 0.0}, View{"west", std::numbers::pi}}) {
      const std::string prefix = mp.id + "_" + view.name;
      // 16 mm lens on a 5.86 µm pixel pitch
      SensorConfig near;
      near.spec.id = prefix + "_cam_near";
      near.spec.kind = SensorKind::camera;
      near.spec.mp_id = mp.id;
      near.mount = {{mp.x, 0.0, 7.5}, view.yaw, 12.0 * kDeg, 0.0};
      near.spec.camera.intrinsics = {2730.0, 2730.0, 960.0, 600.0, 1920, 1200};
      near.spec.camera.max_range = 160.0;
      near.meas_sigma_x = 0.5;
      near.meas_sigma_y = 0.2;
      // 50 mm lens
      SensorConfig far = near;
      far.spec.id = prefix + "_cam_far";
      far.mount.pitch = 2.5 * kDeg;
      far.spec.camera.intrinsics = {8530.0, 8530.0, 960.0, 600.0, 1920, 1200};
      far.spec.camera.max_range = 300.0;
      far.meas_sigma_x = 1.0;
      far.meas_sigma_y = 0.3;

      SensorConfig right;
      right.spec.id = prefix + "_radar_right";
      right.spec.kind = SensorKind::radar;
      right.spec.mp_id = mp.id;
      right.mount = {{mp.x, 0.0, 6.0}, view.yaw, 0.0, 0.0};
      right.spec.radar.azimuth_min = -80.0 * kDeg;
      right.spec.radar.azimuth_max = 1.0 * kDeg;
      right.spec.radar.sigma_pos = 0.5;
      SensorConfig left = right;
      left.spec.id = prefix + "_radar_left";
      left.spec.radar.azimuth_min = -1.0 * kDeg;
      left.spec.radar.azimuth_max = 80.0 * kDeg;

      for (SensorConfig* s : {&near, &far, &right, &left}) {
        s->spec.pose = s->mount.pose(s->spec.kind);
        cfg.sensors.push_back(*s);
      }
    }
  }
  return cfg;
}

PipelineConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  Fields f(j, "");
  PipelineConfig cfg;
  f.get("seed", cfg.seed);
  f.get("twin_rate", cfg.twin_rate);
  if (const json* s = f.find("scenario")) cfg.scenario = read_scenario(*s, "scenario");
  const json& mps = f.require("measurement_points");
  if (!mps.is_array()) fail("measurement_points", "expected an array");
  for (std::size_t i = 0; i < mps.size(); ++i) {
    Fields mf(mps[i], "measurement_points[" + std::to_string(i) + "]");
    MeasurementPointSpec mp;
    mf.get("id", mp.id);
    mf.get("x", mp.x);
    mf.done();
    cfg.measurement_points.push_back(mp);
  }
  const json& sensors = f.require("sensors");
  if (!sensors.is_array()) fail("sensors", "expected an array");
  for (std::size_t i = 0; i < sensors.size(); ++i)
    cfg.sensors.push_back(read_sensor(sensors[i], "sensors[" + std::to_string(i) + "]"));
  if (const json* t = f.find("tracker")) {
    Fields tf(*t, "tracker");
    if (const json* c = tf.find("camera"))
      cfg.camera_tracker = read_tracker(*c, "tracker.camera", cfg.camera_tracker);
    if (const json* r = tf.find("radar"))
      cfg.radar_tracker = read_tracker(*r, "tracker.radar", cfg.radar_tracker);
    tf.done();
  }
  if (const json* fu = f.find("fusion")) cfg.fusion = read_fusion(*fu, "fusion");
  if (const json* e = f.find("eval")) cfg.eval = read_eval(*e, "eval");
  f.done();
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dump_config(const PipelineConfig& cfg) {
  ojson j;
  j["seed"] = cfg.seed;
  j["twin_rate"] = cfg.twin_rate;
  j["scenario"] = write_scenario(cfg.scenario);
  ojson mps = ojson::array();
  for (const auto& mp : cfg.measurement_points) mps.push_back({{"id", mp.id}, {"x", mp.x}});
  j["measurement_points"] = mps;
  ojson sensors = ojson::array();
  for (const auto& s : cfg.sensors) sensors.push_back(write_sensor(s));
  j["sensors"] = sensors;
  j["tracker"] = {{"camera", write_tracker(cfg.camera_tracker)},
                  {"radar", write_tracker(cfg.radar_tracker)}};
  ojson fusion;
  fusion["gate"] = cfg.fusion.gate;
  fusion["omega"] = std::string(to_string(cfg.fusion.omega));
  fusion["handover_persistence"] = cfg.fusion.handover_persistence;
  fusion["miss_limit"] = cfg.fusion.miss_limit;
  fusion["accel_sigma"] = cfg.fusion.accel_sigma;
  ojson lengths;
  for (int k = 0; k < kVehicleClassCount; ++k)
    lengths[std::string(to_string(static_cast<VehicleClass>(k)))] =
        cfg.fusion.class_length[static_cast<std::size_t>(k)];
  fusion["class_length"] = lengths;
  fusion["extent_factor"] = cfg.fusion.extent_factor;
  fusion["extent_sigma_y"] = cfg.fusion.extent_sigma_y;
  fusion["velocity_gate"] = cfg.fusion.velocity_gate;
  fusion["velocity_sigma"] = cfg.fusion.velocity_sigma;
  j["fusion"] = fusion;
  ojson eval;
  eval["semi_major"] = cfg.eval.semi_major;
  eval["semi_minor"] = cfg.eval.semi_minor;
  eval["boundary_band"] = cfg.eval.boundary_band;
  eval["cell_size"] = cfg.eval.cell_size;
  eval["region_min_x"] = cfg.eval.region_min_x;
  eval["region_max_x"] = cfg.eval.region_max_x;
  j["eval"] = eval;
  return j.dump(2) + "\n";
}

std::uint64_t config_hash(const PipelineConfig& cfg) { return fnv1a64(dump_config(cfg)); }

}  // namespace roadtwin
