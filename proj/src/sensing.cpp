#include "roadtwin/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace roadtwin {

std::string_view to_string(SensorKind kind) {
  return kind == SensorKind::camera ? "camera" : "radar";
}

SensorKind sensor_kind_from_string(std::string_view name) {
  if (name == "camera") return SensorKind::camera;
  if (name == "radar") return SensorKind::radar;
  throw std::invalid_argument("unknown sensor kind '" + std::string(name) + "'");
}

ConfusionMatrix identity_confusion() {
  ConfusionMatrix m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

void SensorSpec::validate() const {
  auto fail = [&](const std::string& field, const std::string& what) {
    throw std::invalid_argument("sensor '" + id + "' " + field + ": " + what);
  };
  if (id.empty()) fail("id", "must not be empty");
  if (!(p_detect > 0.0 && p_detect <= 1.0)) fail("p_detect", "must lie in (0, 1]");
  if (!(clutter_rate >= 0.0)) fail("clutter_rate", "must be non-negative");
  if (!(frame_rate > 0.0)) fail("frame_rate", "must be positive");
  if (!pose.is_valid(1e-9)) fail("pose", "rotation is not orthonormal");
  if (kind == SensorKind::camera) {
    try {
      camera_model().validate();
    } catch (const std::invalid_argument& e) {
      fail("camera", e.what());
    }
    if (!(camera.pixel_sigma >= 0.0)) fail("camera.pixel_sigma", "must be non-negative");
    if (!(camera.max_range > 0.0)) fail("camera.max_range", "must be positive");
    for (const auto& row : camera.confusion) {
      double s = 0.0;
      for (double p : row) {
        if (p < 0.0) fail("camera.confusion", "entries must be non-negative");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-6) fail("camera.confusion", "rows must sum to 1");
    }
  } else {
    if (!(radar.azimuth_max > radar.azimuth_min))
      fail("radar.azimuth_max", "must exceed azimuth_min");
    if (!(radar.max_range > 0.0)) fail("radar.max_range", "must be positive");
    if (!(radar.sigma_pos >= 0.0) || !(radar.sigma_vel >= 0.0))
      fail("radar.sigma_pos", "noise must be non-negative");
  }
}

BoxProjection vehicle_box(const CameraModel& cam, const VehicleAgent& v) {
  const Cuboid corners =
      vehicle_cuboid(v.x, v.y, v.heading(), v.length, v.width, v.height);
  return project_vehicle_to_box(cam, corners);
}

WorldPoint vehicle_anchor(const CameraModel& cam, const VehicleAgent& v) {
  return backproject_box(cam, vehicle_box(cam, v).box);
}

namespace {

VehicleClass confuse(VehicleClass truth, const ConfusionMatrix& m, Rng& rng) {
  const int t = static_cast<int>(truth);
  if (t >= 4) return truth;
  double u = rng.uniform();
  for (int j = 0; j < 4; ++j) {
    if (u < m[t][j]) return static_cast<VehicleClass>(j);
    u -= m[t][j];
  }
  return truth;
}

struct Candidate {
  const VehicleAgent* vehicle;
  ImageBox box;
  double depth;
};

}  // namespace

std::vector<Detection> camera_observe(const SensorSpec& spec,
                                      const GroundTruthFrame& gt, Rng& rng) {
  if (spec.kind != SensorKind::camera)
    throw std::invalid_argument("camera_observe: sensor is not a camera");
  const CameraModel cam = spec.camera_model();
  const auto& p = spec.camera;
  const double W = p.intrinsics.width;
  const double H = p.intrinsics.height;
  const Eigen::Vector3d& origin = spec.pose.translation;

  std::vector<Candidate> visible;
  for (const auto& v : gt.vehicles) {
    if (std::hypot(v.x - origin.x(), v.y - origin.y()) > p.max_range) continue;
    BoxProjection proj;
    try {
      proj = vehicle_box(cam, v);
    } catch (const FullyBehind&) {
      continue;
    }
    if (proj.out_of_view) continue;
    const double full = proj.unclipped.area();
    const double shown = proj.box.area();
    if (full > 0.0 && shown / full < p.min_visible_fraction) continue;
    if (full <= 0.0 && !cam.contains(proj.box.bottom_mid())) continue;
    const double depth = to_camera_frame(cam, WorldPoint(v.x, v.y, 0.0)).z();
    if (depth <= 0.0) continue;
    visible.push_back({&v, proj.box, depth});
  }
  std::sort(visible.begin(), visible.end(),
            [](const Candidate& a, const Candidate& b) {
              return a.depth != b.depth ? a.depth < b.depth
                                        : a.vehicle->id < b.vehicle->id;
            });

  std::vector<Detection> out;
  for (std::size_t i = 0; i < visible.size(); ++i) {
    const Candidate& c = visible[i];
    const double area = c.box.area();
    bool occluded = false;
    for (std::size_t j = 0; j < i && !occluded && area > 0.0; ++j)
      occluded = c.box.intersection_area(visible[j].box) / area >=
                 p.occlusion_fraction;
    if (occluded) continue;
    if (!rng.bernoulli(spec.p_detect)) continue;
    ImageBox b = c.box;
    if (p.pixel_sigma > 0.0) {
      b.u_min += rng.normal(0.0, p.pixel_sigma);
      b.v_min += rng.normal(0.0, p.pixel_sigma);
      b.u_max += rng.normal(0.0, p.pixel_sigma);
      b.v_max += rng.normal(0.0, p.pixel_sigma);
      if (b.u_min > b.u_max) std::swap(b.u_min, b.u_max);
      if (b.v_min > b.v_max) std::swap(b.v_min, b.v_max);
      b = b.clipped(W, H);
    }
    Detection d;
    d.sensor_id = spec.id;
    d.t = gt.t;
    d.kind = SensorKind::camera;
    d.z = Eigen::Vector4d(b.u_min, b.v_min, b.u_max, b.v_max);
    d.cls = confuse(c.vehicle->cls, p.confusion, rng);
    d.confidence = rng.uniform(0.6, 1.0);
    d.truth_id = c.vehicle->id;
    out.push_back(d);
  }

  const auto n_clutter = rng.poisson(spec.clutter_rate);
  for (std::uint64_t k = 0; k < n_clutter; ++k) {
    const double w = rng.uniform(p.clutter_min_size, p.clutter_max_size);
    const double h = w * rng.uniform(0.5, 1.2);
    const double u0 = rng.uniform(0.0, std::max(0.0, W - w));
    const double v0 = rng.uniform(0.0, std::max(0.0, H - h));
    Detection d;
    d.sensor_id = spec.id;
    d.t = gt.t;
    d.kind = SensorKind::camera;
    d.z = Eigen::Vector4d(u0, v0, std::min(W, u0 + w), std::min(H, v0 + h));
    d.cls = static_cast<VehicleClass>(rng.index(4));
    d.confidence = rng.uniform(0.3, 0.7);
    d.is_clutter = true;
    out.push_back(d);
  }
  return out;
}

MeasurementFrame camera_frame_to_world(const SensorSpec& spec, double t,
                                       const std::vector<Detection>& detections) {
  const CameraModel cam = spec.camera_model();
  MeasurementFrame frame;
  frame.sensor_id = spec.id;
  frame.t = t;
  frame.dim = 2;
  for (const auto& d : detections) {
    try {
      const WorldPoint g = backproject_box(cam, d.box());
      frame.values.emplace_back(g.x(), g.y(), 0.0, 0.0);
      frame.classes.push_back(d.cls);
    } catch (const NoIntersection&) {
      ++frame.dropped;
    }
  }
  return frame;
}

namespace {

Eigen::Vector2d radar_local(const SensorSpec& spec, double x, double y) {
  const Eigen::Vector3d d(x - spec.pose.translation.x(),
                          y - spec.pose.translation.y(), 0.0);
  const Eigen::Vector3d local = spec.pose.rotation.transpose() * d;
  return {local.x(), local.y()};
}

}  // namespace

bool radar_covers(const SensorSpec& spec, double x, double y) {
  const Eigen::Vector2d l = radar_local(spec, x, y);
  const double range = l.norm();
  if (range > spec.radar.max_range) return false;
  const double az = std::atan2(l.y(), l.x());
  return az >= spec.radar.azimuth_min && az <= spec.radar.azimuth_max;
}

std::vector<Detection> radar_detections(const SensorSpec& spec,
                                        const GroundTruthFrame& gt, Rng& rng) {
  if (spec.kind != SensorKind::radar)
    throw std::invalid_argument("radar_observe: sensor is not a radar");
  const auto& r = spec.radar;
  std::vector<Detection> out;
  for (const auto& v : gt.vehicles) {
    if (!radar_covers(spec, v.x, v.y)) continue;
    if (!rng.bernoulli(spec.p_detect)) continue;
    Detection d;
    d.sensor_id = spec.id;
    d.t = gt.t;
    d.kind = SensorKind::radar;
    d.z = Eigen::Vector4d(v.x, v.y, v.vx, v.vy);
    if (r.sigma_pos > 0.0) {
      d.z[0] += rng.normal(0.0, r.sigma_pos);
      d.z[1] += rng.normal(0.0, r.sigma_pos);
    }
    if (r.sigma_vel > 0.0) {
      d.z[2] += rng.normal(0.0, r.sigma_vel);
      d.z[3] += rng.normal(0.0, r.sigma_vel);
    }
    d.cls = VehicleClass::unknown;
    d.truth_id = v.id;
    out.push_back(d);
  }
  const auto n_clutter = rng.poisson(spec.clutter_rate);
  for (std::uint64_t k = 0; k < n_clutter; ++k) {
    const double range = r.max_range * std::sqrt(rng.uniform());
    const double az = rng.uniform(r.azimuth_min, r.azimuth_max);
    const Eigen::Vector3d local(range * std::cos(az), range * std::sin(az), 0.0);
    const Eigen::Vector3d w = spec.pose.rotation * local;
    Detection d;
    d.sensor_id = spec.id;
    d.t = gt.t;
    d.kind = SensorKind::radar;
    d.z = Eigen::Vector4d(spec.pose.translation.x() + w.x(),
                          spec.pose.translation.y() + w.y(),
                          rng.uniform(-r.clutter_speed, r.clutter_speed),
                          rng.uniform(-r.clutter_speed, r.clutter_speed));
    d.cls = VehicleClass::unknown;
    d.is_clutter = true;
    out.push_back(d);
  }
  return out;
}

MeasurementFrame radar_frame(const SensorSpec& spec, double t,
                             const std::vector<Detection>& detections) {
  MeasurementFrame frame;
  frame.sensor_id = spec.id;
  frame.t = t;
  frame.dim = 4;
  for (const auto& d : detections) {
    frame.values.push_back(d.z);
    frame.classes.push_back(d.cls);
  }
  return frame;
}

MeasurementFrame radar_observe(const SensorSpec& spec,
                               const GroundTruthFrame& gt, Rng& rng) {
  return radar_frame(spec, gt.t, radar_detections(spec, gt, rng));
}

std::vector<Detection> observe(const SensorSpec& spec,
                               const GroundTruthFrame& gt, Rng& rng) {
  return spec.kind == SensorKind::camera ? camera_observe(spec, gt, rng)
                                         : radar_detections(spec, gt, rng);
}

MeasurementFrame to_measurement_frame(const SensorSpec& spec, double t,
                                      const std::vector<Detection>& detections) {
  return spec.kind == SensorKind::camera
             ? camera_frame_to_world(spec, t, detections)
             : radar_frame(spec, t, detections);
}

SensorSpec perturb_pose(const SensorSpec& spec,
                        const Eigen::Matrix3d& delta_rotation,
                        const Eigen::Vector3d& delta_translation) {
  SensorSpec out = spec;
  out.pose.rotation = spec.pose.rotation * delta_rotation;
  out.pose.translation = spec.pose.translation + delta_translation;
  return out;
}

double surveillance_area(const SensorSpec& spec) {
  if (spec.kind == SensorKind::camera)
    return ground_footprint_area(spec.camera_model(), spec.camera.max_range);
  const auto& r = spec.radar;
  return 0.5 * (r.azimuth_max - r.azimuth_min) * r.max_range * r.max_range;
}

std::vector<double> frame_times(double frame_rate, double duration) {
  std::vector<double> times;
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) / frame_rate;
    if (t >= duration) break;
    times.push_back(t);
  }
  return times;
}

}  // namespace roadtwin
