#include "roadtwin/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace roadtwin {

namespace {

constexpr double kTimeTol = 1e-9;

// Calls f(i) for i in [0, n) on up to `threads` threads.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

template <class T, class F>
std::vector<T> read_records(const std::filesystem::path& path, F&& reader) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return reader(in);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

SimulationOutput simulate(const PipelineConfig& cfg, std::uint64_t seed,
                          const std::vector<VehicleAgent>& scripted, int threads) {
  const auto& sc = cfg.scenario;
  const auto truth_instants = truth_times(sc);
  std::vector<std::vector<double>> sensor_instants;
  std::vector<double> instants = truth_instants;
  for (const auto& s : cfg.sensors) {
    sensor_instants.push_back(frame_times(s.spec.frame_rate, sc.duration));
    instants.insert(instants.end(), sensor_instants.back().begin(),
                    sensor_instants.back().end());
  }
  std::sort(instants.begin(), instants.end());
  instants.erase(std::unique(instants.begin(), instants.end()), instants.end());

  World world(sc, derive_seed(seed, "scenario"));
  world.set_time(-sc.warmup);
  for (const auto& a : scripted) world.add(a);

  SimulationOutput out;
  std::vector<GroundTruthFrame> snapshots;
  snapshots.reserve(instants.size());
  std::size_t next_truth = 0;
  for (double t : instants) {
    advance_to(world, t);
    snapshots.push_back({t, world.agents()});
    if (next_truth < truth_instants.size() && truth_instants[next_truth] == t) {
      out.truth.push_back(sample_ground_truth(world, t));
      ++next_truth;
    }
  }
  auto snapshot_at = [&](double t) -> const GroundTruthFrame& {
    auto it = std::lower_bound(snapshots.begin(), snapshots.end(), t,
                               [](const GroundTruthFrame& f, double v) { return f.t < v; });
    return *it;
  };

  // per sensor, per frame
  std::vector<std::vector<std::vector<Detection>>> per_sensor(cfg.sensors.size());
  parallel_for(cfg.sensors.size(), threads, [&](std::size_t i) {
    const SensorSpec spec = cfg.sensors[i].actual();
    Rng rng(derive_seed(seed, spec.id));
    for (double t : sensor_instants[i]) per_sensor[i].push_back(observe(spec, snapshot_at(t), rng));
  });

  std::vector<std::size_t> cursor(cfg.sensors.size(), 0);
  for (double t : instants) {
    for (std::size_t i = 0; i < cfg.sensors.size(); ++i) {
      auto& c = cursor[i];
      if (c >= sensor_instants[i].size() || sensor_instants[i][c] != t) continue;
      for (auto& d : per_sensor[i][c]) {
        d.sensor_id = cfg.sensors[i].spec.id;
        out.is_clutter.push_back(d.is_clutter);
        out.truth_ids.push_back(d.truth_id);
        out.detections.push_back({d, cfg.sensors[i].spec.mp_id});
      }
      ++c;
    }
  }
  return out;
}

std::vector<MeasurementFrame> measurement_frames(const PipelineConfig& cfg,
                                                 const SensorConfig& sensor,
                                                 const std::vector<DetectionRecord>& detections) {
  const auto instants = frame_times(sensor.spec.frame_rate, cfg.scenario.duration);
  std::vector<std::vector<Detection>> grouped(instants.size());
  std::size_t k = 0;
  for (const auto& r : detections) {
    const auto& d = r.detection;
    if (d.sensor_id != sensor.spec.id) continue;
    while (k < instants.size() && instants[k] < d.t - kTimeTol) ++k;
    if (k == instants.size() || std::abs(instants[k] - d.t) > kTimeTol) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "detection of sensor '" << sensor.spec.id << "' at t=" << d.t
          << " is not on a frame instant";
      throw std::invalid_argument(msg.str());
    }
    if (d.kind != sensor.spec.kind)
      throw std::invalid_argument("detection kind does not match sensor '" + sensor.spec.id + "'");
    grouped[k].push_back(d);
  }
  std::vector<MeasurementFrame> frames;
  frames.reserve(instants.size());
  for (std::size_t i = 0; i < instants.size(); ++i)
    frames.push_back(to_measurement_frame(sensor.spec, instants[i], grouped[i]));
  return frames;
}

TrackLogs track_sensors(const PipelineConfig& cfg,
                        const std::vector<DetectionRecord>& detections,
                        const std::vector<std::string>& sensor_ids, int threads) {
  std::vector<const SensorConfig*> sensors;
  for (const auto& id : sensor_ids) {
    const SensorConfig* s = cfg.find_sensor(id);
    if (!s) throw std::invalid_argument("unknown sensor '" + id + "'");
    sensors.push_back(s);
  }
  std::vector<std::vector<LocalTrack>> logs(sensors.size());
  parallel_for(sensors.size(), threads, [&](std::size_t i) {
    const SensorConfig& s = *sensors[i];
    SensorTracker tracker(cfg.tracker_for(s), cfg.observation_for(s));
    for (const auto& frame : measurement_frames(cfg, s, detections)) {
      for (const auto& tr : tracker.step(frame)) {
        LocalTrack lt;
        lt.sensor_id = s.spec.id;
        lt.label = tr.label;
        lt.t = frame.t;
        lt.state = tr.state;
        lt.cov = tr.cov;
        lt.cls = tr.majority_class();
        lt.status = tr.status;
        logs[i].push_back(lt);
      }
    }
  });
  TrackLogs out;
  for (std::size_t i = 0; i < sensors.size(); ++i) out[sensors[i]->spec.id] = std::move(logs[i]);
  return out;
}

std::vector<DigitalTwinFrame> fuse_tracks(const PipelineConfig& cfg, const TrackLogs& logs) {
  struct Stream {
    std::vector<double> instants;
    const std::vector<LocalTrack>* tracks = nullptr;
    std::size_t frame = 0;  // next instant not yet reached
    std::size_t begin = 0;  // first track of the current frame
    std::size_t end = 0;
  };
  std::map<std::string, Stream> streams;
  for (const auto& s : cfg.sensors) {
    auto it = logs.find(s.spec.id);
    if (it == logs.end()) throw MissingStream(s.spec.id);
    Stream st;
    st.instants = frame_times(s.spec.frame_rate, cfg.scenario.duration);
    st.tracks = &it->second;
    streams[s.spec.id] = std::move(st);
  }

  std::vector<MeasurementPointFuser> mp_fusers;
  for (const auto& mp : cfg.measurement_points) mp_fusers.emplace_back(mp.id, cfg.fusion);
  BackendFuser backend(cfg.fusion);

  std::vector<DigitalTwinFrame> out;
  for (double tick : twin_ticks(cfg.twin_rate, cfg.scenario.duration)) {
    // advance every stream to its latest frame at or before the tick
    for (auto& [id, st] : streams) {
      bool moved = false;
      while (st.frame < st.instants.size() && st.instants[st.frame] <= tick + kTimeTol) {
        ++st.frame;
        moved = true;
      }
      if (!moved) continue;
      const double ft = st.instants[st.frame - 1];
      const auto& tr = *st.tracks;
      std::size_t b = st.end;
      while (b < tr.size() && tr[b].t < ft - kTimeTol) ++b;
      std::size_t e = b;
      while (e < tr.size() && std::abs(tr[e].t - ft) <= kTimeTol) ++e;
      st.begin = b;
      st.end = e;
    }
    std::vector<Tracklet> tracklets;
    for (std::size_t m = 0; m < cfg.measurement_points.size(); ++m) {
      std::vector<LocalTrack> local;
      for (const SensorConfig* s : cfg.sensors_of(cfg.measurement_points[m].id)) {
        const auto& st = streams.at(s->spec.id);
        for (std::size_t k = st.begin; k < st.end; ++k)
          if ((*st.tracks)[k].status == TrackStatus::confirmed) local.push_back((*st.tracks)[k]);
      }
      const auto fused = mp_fusers[m].fuse(local, tick);
      tracklets.insert(tracklets.end(), fused.begin(), fused.end());
    }
    out.push_back(backend.fuse(tracklets, tick));
  }
  return out;
}

namespace {

template <class Frame>
std::vector<Frame> fill_grid(const std::vector<Frame>& frames, const std::vector<double>& grid,
                             double lo, double hi) {
  std::vector<Frame> out = frames;
  for (double t : grid) {
    if (t < lo - kTimeTol || t > hi + kTimeTol) continue;
    const bool present = std::any_of(frames.begin(), frames.end(), [&](const Frame& f) {
      return std::abs(f.t - t) <= kTimeTol;
    });
    if (!present) {
      Frame f;
      f.t = t;
      out.push_back(f);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Frame& a, const Frame& b) { return a.t < b.t; });
  return out;
}

}  // namespace

std::vector<GroundTruthFrame> complete_truth(const PipelineConfig& cfg,
                                             const std::vector<GroundTruthFrame>& truth) {
  return fill_grid(truth, truth_times(cfg.scenario), -INFINITY, INFINITY);
}

std::vector<DigitalTwinFrame> complete_twin(const PipelineConfig& cfg,
                                            const std::vector<DigitalTwinFrame>& twin) {
  // an empty stream stays empty: there is nothing to align against
  if (twin.empty()) return twin;
  return fill_grid(twin, twin_ticks(cfg.twin_rate, cfg.scenario.duration), twin.front().t,
                   twin.back().t);
}

MetricsReport evaluate_run(const PipelineConfig& cfg,
                           const std::vector<GroundTruthFrame>& truth,
                           const std::vector<DigitalTwinFrame>& twin) {
  return evaluate(complete_truth(cfg, truth), complete_twin(cfg, twin), cfg.eval,
                  1.0 / cfg.scenario.truth_rate);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  nlohmann::ordered_json j;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(manifest.config_hash));
  j["config_hash"] = hash;
  j["seed"] = manifest.seed;
  j["tool_version"] = manifest.tool_version;
  auto stages = nlohmann::ordered_json::array();
  for (const auto& s : manifest.stages)
    stages.push_back({{"name", s.name}, {"outputs", s.outputs}, {"wall_seconds", s.wall_seconds}});
  j["stages"] = stages;
  write_file_atomic(path, j.dump(2) + "\n");
}

std::string tracks_file_name(const std::string& sensor_id) {
  return "tracks_" + sensor_id + ".jsonl";
}

PipelineResult run_pipeline(const PipelineConfig& cfg, std::uint64_t seed,
                            const std::filesystem::path& out_dir, int threads) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "tracks");
  PipelineResult result;
  auto& manifest = result.manifest;
  manifest.config_hash = config_hash(cfg);
  manifest.seed = seed;
  write_file_atomic(out_dir / "config.json", dump_config(cfg));

  auto start = std::chrono::steady_clock::now();
  {
    const auto sim = simulate(cfg, seed, {}, threads);
    std::ostringstream gt;
    write_ground_truth(gt, sim.truth);
    write_file_atomic(out_dir / "ground_truth.jsonl", gt.str());
    std::ostringstream det;
    write_detections(det, sim.detections);
    write_file_atomic(out_dir / "detections.jsonl", det.str());
  }
  manifest.stages.push_back({"simulate",
                             {(out_dir / "ground_truth.jsonl").string(),
                              (out_dir / "detections.jsonl").string()},
                             seconds_since(start)});

  start = std::chrono::steady_clock::now();
  StageRecord track_stage{"track", {}, 0.0};
  {
    const auto detections =
        read_records<DetectionRecord>(out_dir / "detections.jsonl", read_detections);
    std::vector<std::string> ids;
    for (const auto& s : cfg.sensors) ids.push_back(s.spec.id);
    const auto logs = track_sensors(cfg, detections, ids, threads);
    for (const auto& [id, tracks] : logs) {
      std::ostringstream os;
      write_tracks(os, tracks);
      const auto path = out_dir / "tracks" / tracks_file_name(id);
      write_file_atomic(path, os.str());
      track_stage.outputs.push_back(path.string());
    }
  }
  track_stage.wall_seconds = seconds_since(start);
  manifest.stages.push_back(track_stage);

  start = std::chrono::steady_clock::now();
  {
    TrackLogs logs;
    for (const auto& s : cfg.sensors)
      logs[s.spec.id] = read_records<LocalTrack>(
          out_dir / "tracks" / tracks_file_name(s.spec.id), read_tracks);
    const auto twin = fuse_tracks(cfg, logs);
    std::ostringstream os;
    write_twin(os, twin);
    write_file_atomic(out_dir / "twin.jsonl", os.str());
  }
  manifest.stages.push_back({"fuse", {(out_dir / "twin.jsonl").string()}, seconds_since(start)});

  start = std::chrono::steady_clock::now();
  {
    const auto truth =
        read_records<GroundTruthFrame>(out_dir / "ground_truth.jsonl", read_ground_truth);
    const auto twin = read_records<DigitalTwinFrame>(out_dir / "twin.jsonl", read_twin);
    result.report = evaluate_run(cfg, truth, twin);
    write_file_atomic(out_dir / "report.json", report_to_json(result.report));
    std::ostringstream csv;
    write_error_map(csv, result.report.error_grid);
    write_file_atomic(out_dir / "error_map.csv", csv.str());
  }
  manifest.stages.push_back({"evaluate",
                             {(out_dir / "report.json").string(),
                              (out_dir / "error_map.csv").string()},
                             seconds_since(start)});
  write_manifest(out_dir / "manifest.json", manifest);
  return result;
}

std::string summary_table(const MetricsReport& r) {
  auto cell = [](const std::optional<double>& v, double scale, const char* unit) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f %s", *v * scale, unit);
    return std::string(buf);
  };
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-10s %-10s %-10s %-10s %-10s\n", "RMSE", "RMSE_x",
                "RMSE_y", "Precision", "Recall");
  out += line;
  std::snprintf(line, sizeof line, "%-10s %-10s %-10s %-10s %-10s\n",
                cell(r.rmse, 1.0, "m").c_str(), cell(r.rmse_x, 1.0, "m").c_str(),
                cell(r.rmse_y, 1.0, "m").c_str(), cell(r.precision, 100.0, "%").c_str(),
                cell(r.recall, 100.0, "%").c_str());
  out += line;
  std::snprintf(line, sizeof line, "p50 %s  p95 %s  TP %zu  FP %zu  FN %zu\n",
                cell(r.p50, 1.0, "m").c_str(), cell(r.p95, 1.0, "m").c_str(), r.tp, r.fp, r.fn);
  out += line;
  if (r.boundary_band > 0.0) {
    std::snprintf(line, sizeof line, "recall without %.1f m boundary band: %s\n",
                  r.boundary_band, cell(r.interior_recall, 100.0, "%").c_str());
    out += line;
  }
  return out;
}

}  // namespace roadtwin
