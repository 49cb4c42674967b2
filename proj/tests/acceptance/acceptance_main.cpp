// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "roadtwin/hungarian.hpp"
#include "roadtwin/pipeline.hpp"

namespace fs = std::filesystem;
using namespace roadtwin;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("roadtwin_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

MeasurementFrame frame_of(double t, int dim, std::vector<Eigen::Vector4d> values) {
  MeasurementFrame f;
  f.sensor_id = "s";
  f.t = t;
  f.dim = dim;
  f.classes.assign(values.size(), VehicleClass::car);
  f.values = std::move(values);
  return f;
}

// ---------------------------------------------------------------------------

Outcome kalman_equivalence() {
  const auto start = Clock::now();
  TrackerConfig cfg;
  cfg.p_detect = 1.0;
  cfg.p_survival = 1.0;
  cfg.clutter_density = 0.0;
  const ObservationModel obs = ObservationModel::position(1.0, 0.5);
  SensorTracker tracker(cfg, obs);

  std::mt19937_64 gen(1);
  std::normal_distribution<double> n(0.0, 1.0);
  const double dt = 0.185;
  const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 4);
  const Eigen::MatrixXd R = obs.R();
  Eigen::Vector4d truth(0.0, 1.75, 25.0, 0.0);
  oracle::Kalman k;
  Eigen::Vector2d previous = Eigen::Vector2d::Zero();
  double worst = 0.0;
  bool single = true;
  for (int step = 0; step < 500; ++step) {
    if (step > 0) {
      truth = oracle::cv_F(dt) * truth;
      truth[2] += 0.3 * n(gen);
    }
    const Eigen::Vector2d z(truth[0] + 1.0 * n(gen), truth[1] + 0.5 * n(gen));
    tracker.step(frame_of(step * dt, 2, {Eigen::Vector4d(z.x(), z.y(), 0.0, 0.0)}));
    if (step == 0) {
      previous = z;
      continue;
    }
    if (step == 1) {
      // the birth prior: position from the detection, velocity from the pair
      k.x = Eigen::Vector4d(z.x(), z.y(), (z.x() - previous.x()) / dt, (z.y() - previous.y()) / dt);
      k.P = Eigen::MatrixXd::Zero(4, 4);
      k.P.topLeftCorner(2, 2) = R;
      k.P.bottomRightCorner(2, 2) = cfg.birth_velocity_variance * Eigen::Matrix2d::Identity();
    } else {
      k.predict(oracle::cv_F(dt), oracle::cv_Q(dt, cfg.accel_sigma));
    }
    k.update(z, H, R);
    const auto& comps = tracker.intensity().components;
    if (comps.size() != 1) {
      single = false;
      break;
    }
    worst = std::max({worst, oracle::max_relative_error(comps[0].mean, k.x),
                      oracle::max_relative_error(comps[0].cov, k.P)});
  }
  const double secs = seconds_since(start);
  return {single && worst < 1e-9 && secs < 1.0,
          fmt("max relative error %.2e over 500 steps, single component %s, %.3f s", worst,
              single ? "yes" : "no", secs)};
}

Outcome hungarian_exactness() {
  const auto start = Clock::now();
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<int> size(1, 7);
  std::uniform_int_distribution<int> value(0, 999);
  int mismatches = 0;
  int rectangular = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int r = size(gen);
    const int c = trial % 2 == 0 ? r : size(gen);
    rectangular += r != c;
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = value(gen);
    const Assignment a = hungarian(m);
    double sum = 0.0;
    for (int i = 0; i < r; ++i)
      if (a.row_to_col[static_cast<std::size_t>(i)] >= 0) sum += m(i, a.row_to_col[static_cast<std::size_t>(i)]);
    // integer costs: both totals are exact
    const double best = oracle::brute_force_assignment(m);
    if (sum != best || a.cost != best) ++mismatches;
  }
  const double secs = seconds_since(start);
  return {mismatches == 0 && secs < 10.0,
          fmt("%d mismatches in 1000 matrices (%d rectangular), %.2f s", mismatches, rectangular,
              secs)};
}

Outcome gci_algebra() {
  const auto start = Clock::now();
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double info_err = 0.0;
  double fused_err = 0.0;
  double grid_excess = -1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    const Gaussian4 a{Eigen::Vector4d::Random(), oracle::random_spd<4>(gen)};
    const Gaussian4 b{Eigen::Vector4d::Random(), oracle::random_spd<4>(gen)};
    const double w = u(gen);
    const Eigen::Matrix4d expected = w * a.cov.inverse() + (1.0 - w) * b.cov.inverse();
    info_err = std::max(info_err, oracle::max_relative_error(gci_information<4>(a, b, w), expected));
    const Gaussian4 f = gci_fuse<4>(a, b, w);
    fused_err = std::max(fused_err, oracle::max_relative_error(f.cov.inverse(), expected));

    const double opt = gci_fuse<4>(a, b, optimize_omega<4>(a, b)).cov.determinant();
    double grid = 1e300;
    for (int g = 0; g <= 1000; ++g) grid = std::min(grid, gci_fuse<4>(a, b, g / 1000.0).cov.determinant());
    grid_excess = std::max(grid_excess, (opt - grid) / grid);
  }
  const double secs = seconds_since(start);
  return {info_err < 1e-12 && fused_err < 1e-12 && grid_excess <= 1e-6 && secs < 5.0,
          fmt("information error %.2e, fused-covariance route %.2e, worst det excess over "
              "1001-point grid %.2e, %.2f s",
              info_err, fused_err, grid_excess, secs)};
}

Outcome geometry_round_trip() {
  const auto start = Clock::now();
  const PipelineConfig cfg = default_config();
  std::vector<CameraModel> cams;
  for (const auto& s : cfg.sensors)
    if (s.spec.kind == SensorKind::camera) cams.push_back(s.spec.camera_model());
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> ux(-100.0, 540.0);
  std::uniform_real_distribution<double> uy(-15.0, 15.0);
  double worst = 0.0;
  int points = 0;
  for (int attempts = 0; points < 1000 && attempts < 10000000; ++attempts) {
    const CameraModel& cam = cams[static_cast<std::size_t>(attempts) % cams.size()];
    const WorldPoint p(ux(gen), uy(gen), 0.0);
    if (to_camera_frame(cam, p).z() <= 0.0) continue;
    const Pixel px = project_point(cam, p);
    if (!cam.contains(px)) continue;
    worst = std::max(worst, (backproject_pixel(cam, px) - p).norm());
    ++points;
  }
  // rays level with or above the horizon
  int horizon = 0;
  int rejected = 0;
  std::uniform_real_distribution<double> uu(0.0, 1.0);
  for (int i = 0; i < 4000; ++i) {
    const CameraModel& cam = cams[static_cast<std::size_t>(i) % cams.size()];
    const auto& k = cam.intrinsics;
    const Pixel px{uu(gen) * k.width, uu(gen) * k.height};
    const Eigen::Vector3d d =
        cam.pose.rotation * Eigen::Vector3d((px.u - k.cx) / k.fx, (px.v - k.cy) / k.fy, 1.0);
    if (d.z() < 0.0) continue;
    ++horizon;
    try {
      backproject_pixel(cam, px);
    } catch (const NoIntersection&) {
      ++rejected;
    }
  }
  const double secs = seconds_since(start);
  return {points == 1000 && worst < 1e-6 && horizon > 0 && rejected == horizon && secs < 1.0,
          fmt("max round-trip error %.2e m over %d points, %d/%d horizon rays rejected, %.3f s",
              worst, points, rejected, horizon, secs)};
}

Outcome cardinality() {
  const auto start = Clock::now();
  const int runs = 100;
  const int frames = 60;
  const int settle = 20;
  const int targets = 10;
  const double dt = 0.185;
  const double length = 440.0;
  const double width = 21.0;
  const double clutter_rate = 2.0;
  double sum_abs = 0.0;
  double sum_mass = 0.0;
  int samples = 0;
  for (int run = 0; run < runs; ++run) {
    TrackerConfig cfg = default_config().camera_tracker;
    cfg.p_detect = 0.97;
    cfg.meas_sigma_x = 1.0;
    cfg.meas_sigma_y = 0.5;
    cfg.clutter_density = clutter_rate / (length * width);
    SensorTracker tracker(cfg, ObservationModel::from_config(cfg, 2));
    std::mt19937_64 gen(1000 + static_cast<std::uint64_t>(run));
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::poisson_distribution<int> clutter(clutter_rate);
    std::vector<Eigen::Vector4d> truth;
    for (int i = 0; i < targets; ++i) {
      const bool forward = i % 2 == 0;
      const double y = (forward ? -1.0 : 1.0) * (1.75 + 3.5 * (i / 2 % 3));
      const double speed = 22.0 + 2.0 * i;
      const double x = forward ? 30.0 + 15.0 * i : length - 30.0 - 15.0 * i;
      truth.emplace_back(x, y, forward ? speed : -speed, 0.0);
    }
    for (int k = 0; k < frames; ++k) {
      std::vector<Eigen::Vector4d> z;
      for (auto& s : truth) {
        if (k > 0) s.head<2>() += dt * s.tail<2>();
        if (u(gen) < cfg.p_detect) z.emplace_back(s[0] + n(gen), s[1] + 0.5 * n(gen), 0.0, 0.0);
      }
      for (int c = clutter(gen); c > 0; --c)
        z.emplace_back(u(gen) * length, (u(gen) - 0.5) * width, 0.0, 0.0);
      tracker.step(frame_of(k * dt, 2, z));
      if (k < settle) continue;
      const double mass = tracker.intensity().total_weight();
      sum_abs += std::abs(std::round(mass) - targets);
      sum_mass += mass;
      ++samples;
    }
  }
  const double mean_abs = sum_abs / samples;
  const double secs = seconds_since(start);
  return {mean_abs < 1.0 && secs < 60.0,
          fmt("mean |round(sum w) - N| = %.3f, mean sum w = %.2f for N = %d, %.2f s", mean_abs,
              sum_mass / samples, targets, secs)};
}

Outcome metric_injection() {
  const PipelineConfig cfg = default_config();
  const auto truth = simulate(cfg, 42).truth;
  std::mt19937_64 gen(6);
  std::normal_distribution<double> nx(0.0, 3.27);
  std::normal_distribution<double> ny(0.0, 0.53);
  std::vector<DigitalTwinFrame> twin;
  std::size_t samples = 0;
  std::uint64_t gid = 1;
  for (const auto& gt : truth) {
    DigitalTwinFrame f;
    f.t = gt.t;
    for (const auto& v : gt.vehicles) {
      FusedTrack o;
      o.gid = gid++;
      const double along = v.vx < 0.0 ? -1.0 : 1.0;
      o.state = StateVector(v.x + along * nx(gen), v.y + along * ny(gen), v.vx, v.vy);
      f.objects.push_back(o);
      ++samples;
    }
    twin.push_back(f);
  }
  const MetricsReport r = evaluate_run(cfg, truth, twin);
  const double rx = r.rmse_x.value_or(0.0);
  const double ry = r.rmse_y.value_or(0.0);
  const double precision = r.precision.value_or(0.0);
  const double recall = r.recall.value_or(0.0);
  const bool pass = samples >= 2139 && std::abs(rx - 3.27) <= 0.05 * 3.27 &&
                    std::abs(ry - 0.53) <= 0.05 * 0.53 && precision == 1.0 && recall == 1.0;
  return {pass, fmt("%zu samples: rmse_x %.3f (target 3.27 +-5%%), rmse_y %.3f (target 0.53 +-5%%), "
                    "precision %.4f, recall %.4f (both must be 1)",
                    samples, rx, ry, precision, recall)};
}

PipelineConfig regression_config() {
  PipelineConfig cfg = default_config();
  cfg.seed = 42;
  cfg.eval.boundary_band = 10.0;
  return cfg;
}

Outcome end_to_end() {
  const auto start = Clock::now();
  const fs::path dir = scratch("e2e");
  const auto r = run_pipeline(regression_config(), 42, dir, 1).report;
  const double secs = seconds_since(start);
  fs::remove_all(dir);
  if (!r.precision || !r.interior_recall || !r.rmse_x || !r.rmse_y || !r.p50 || !r.p95)
    return {false, "missing metrics"};
  const bool pass = *r.precision >= 0.97 && *r.interior_recall >= 0.95 && *r.rmse_y <= 0.8 &&
                    *r.rmse_x >= 2.0 && *r.rmse_x <= 4.5 && *r.p50 <= *r.p95 && secs < 300.0;
  return {pass, fmt("precision %.4f, interior recall %.4f, rmse_x %.2f m, rmse_y %.2f m, "
                    "p50 %.2f m, p95 %.2f m, recall %.4f, %.1f s",
                    *r.precision, *r.interior_recall, *r.rmse_x, *r.rmse_y, *r.p50, *r.p95,
                    r.recall.value_or(0.0), secs)};
}

Outcome handover() {
  const auto start = Clock::now();
  const int runs = 200;
  int continuous = 0;
  for (int run = 0; run < runs; ++run) {
    PipelineConfig cfg = default_config();
    auto& sc = cfg.scenario;
    sc.spawn_rate = 0.0;
    sc.warmup = 0.0;
    std::mt19937_64 gen(5000 + static_cast<std::uint64_t>(run));
    const auto lanes = make_lanes(sc);
    const LaneSpec lane = lanes[std::uniform_int_distribution<std::size_t>(0, lanes.size() - 1)(gen)];
    const double speed = std::uniform_real_distribution<double>(20.0, 38.0)(gen);
    sc.duration = std::ceil((sc.stretch_length + 2.0 * sc.approach_margin) / speed) + 1.0;

    VehicleAgent v;
    v.id = 1;
    v.lane = lane.id;
    v.y = lane.y;
    const double dir = sign(lane.direction);
    v.x = dir > 0 ? -sc.approach_margin : sc.stretch_length + sc.approach_margin;
    v.vx = dir * speed;
    v.desired_speed = speed;

    const auto sim = simulate(cfg, 9000 + static_cast<std::uint64_t>(run), {v});
    std::vector<std::string> ids;
    for (const auto& s : cfg.sensors) ids.push_back(s.spec.id);
    const auto twin = fuse_tracks(cfg, track_sensors(cfg, sim.detections, ids));
    const auto aligned = align_frames(complete_truth(cfg, sim.truth), complete_twin(cfg, twin),
                                      1.0 / sc.truth_rate);
    std::set<std::uint64_t> gids;
    double first = 1e300;
    double last = -1e300;
    for (const auto& af : aligned) {
      for (const auto& a : gate_and_associate(af.truth, af.twin, cfg.eval).pairs) {
        gids.insert(a.twin_id);
        const double progress = dir > 0 ? a.x : sc.stretch_length - a.x;
        first = std::min(first, progress);
        last = std::max(last, progress);
      }
    }
    // tracked from the entry end to the exit end under a single id
    if (gids.size() == 1 && first <= 60.0 && last >= sc.stretch_length - 60.0) ++continuous;
  }
  const double rate = static_cast<double>(continuous) / runs;
  return {rate >= 0.95, fmt("%d/%d traversals kept one global id end to end (%.1f%%), %.1f s",
                            continuous, runs, 100.0 * rate, seconds_since(start))};
}

Outcome throughput() {
  const PipelineConfig base = default_config();
  const int targets = 200;
  const int ticks = 100;
  const double dt = 1.0 / 5.4;
  const double length = 440.0;

  struct Sensor {
    std::string id;
    int dim;
    std::unique_ptr<SensorTracker> tracker;
  };
  std::vector<Sensor> sensors;
  for (int i = 0; i < 4; ++i) {
    const int dim = i < 2 ? 2 : 4;
    TrackerConfig cfg = dim == 2 ? base.camera_tracker : base.radar_tracker;
    cfg.clutter_density = 2.0 / (length * 21.0);
    sensors.push_back({fmt("s%d", i), dim,
                       std::make_unique<SensorTracker>(cfg, ObservationModel::from_config(cfg, dim))});
  }

  std::mt19937_64 gen(7);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::poisson_distribution<int> clutter(2.0);
  std::vector<Eigen::Vector4d> truth;
  for (int i = 0; i < targets; ++i) {
    const int lane = i % 6;
    const bool forward = lane < 3;
    const double y = (forward ? -1.0 : 1.0) * (1.75 + 3.5 * (lane % 3));
    const double x = 5.0 + 13.0 * (i / 6);
    const double speed = 25.0 + 5.0 * (lane % 3);
    truth.emplace_back(x, y, forward ? speed : -speed, 0.0);
  }

  // measurements are generated up front so only tracking and fusion are timed
  std::vector<std::vector<MeasurementFrame>> frames(sensors.size());
  for (int k = 0; k < ticks; ++k) {
    const double t = k * dt;
    for (std::size_t s = 0; s < sensors.size(); ++s) {
      std::vector<Eigen::Vector4d> z;
      for (const auto& tr : truth) {
        Eigen::Vector4d p = tr;
        p.head<2>() += t * tr.tail<2>();
        // wrap around so the scene stays populated
        p[0] = std::fmod(std::fmod(p[0], length) + length, length);
        if (u(gen) >= 0.97) continue;
        if (sensors[s].dim == 2)
          z.emplace_back(p[0] + n(gen), p[1] + 0.3 * n(gen), 0.0, 0.0);
        else
          z.emplace_back(p[0] + 0.5 * n(gen), p[1] + 0.5 * n(gen), p[2] + 0.3 * n(gen), 0.3 * n(gen));
      }
      for (int c = clutter(gen); c > 0; --c)
        z.emplace_back(u(gen) * length, (u(gen) - 0.5) * 21.0, 0.0, 0.0);
      MeasurementFrame f = frame_of(t, sensors[s].dim, z);
      f.sensor_id = sensors[s].id;
      frames[s].push_back(std::move(f));
    }
  }

  MeasurementPointFuser mp1("mp1", base.fusion);
  MeasurementPointFuser mp2("mp2", base.fusion);
  BackendFuser backend(base.fusion);
  std::size_t objects = 0;
  const auto start = Clock::now();
  for (int k = 0; k < ticks; ++k) {
    const double t = k * dt;
    std::vector<LocalTrack> first, second;
    for (std::size_t s = 0; s < sensors.size(); ++s) {
      for (const auto& tr : sensors[s].tracker->step(frames[s][static_cast<std::size_t>(k)])) {
        LocalTrack lt;
        lt.sensor_id = sensors[s].id;
        lt.label = tr.label;
        lt.t = t;
        lt.state = tr.state;
        lt.cov = tr.cov;
        lt.cls = tr.majority_class();
        (s % 2 == 0 ? first : second).push_back(lt);
      }
    }
    std::vector<Tracklet> tracklets = mp1.fuse(first, t);
    const auto more = mp2.fuse(second, t);
    tracklets.insert(tracklets.end(), more.begin(), more.end());
    objects = backend.fuse(tracklets, t).objects.size();
  }
  const double secs = seconds_since(start);
  const double rate = ticks / secs;
  return {rate >= 5.4, fmt("%.1f ticks/s for %d targets on 4 sensors (%d ticks in %.2f s, "
                           "%zu twin objects at the end)",
                           rate, targets, ticks, secs, objects)};
}

Outcome determinism() {
  const fs::path dir = scratch("determinism");
  const fs::path config = dir / "config.json";
  {
    std::ofstream out(config);
    out << dump_config(regression_config());
  }
  auto run = [&](const fs::path& out) {
    const std::string cmd = std::string(ROADTWIN_CLI_PATH) + " pipeline --config " + config.string() +
                            " --seed 42 --threads 1 --out-dir " + out.string() + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  const int ca = run(dir / "a");
  const int cb = run(dir / "b");
  const std::string ra = slurp(dir / "a" / "report.json");
  const std::string rb = slurp(dir / "b" / "report.json");
  const bool pass = ca == 0 && cb == 0 && !ra.empty() && ra == rb;
  fs::remove_all(dir);
  return {pass, fmt("exit codes %d/%d, report.json %zu bytes, %s", ca, cb, ra.size(),
                    ra == rb ? "byte-identical" : "different")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"Kalman-oracle equivalence", kalman_equivalence},
      {"Hungarian exactness", hungarian_exactness},
      {"GCI algebra", gci_algebra},
      {"Geometry round trip", geometry_round_trip},
      {"Cardinality property", cardinality},
      {"Metric-oracle injection", metric_injection},
      {"End-to-end regression", end_to_end},
      {"Handover continuity", handover},
      {"Throughput", throughput},
      {"Determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
