#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "roadtwin/pipeline.hpp"

namespace fs = std::filesystem;
using namespace roadtwin;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kRecord = 3, kMissingStream = 4, kNoOverlap = 5 };

PipelineConfig config_from(const std::string& path) {
  return path.empty() ? default_config() : load_config(path);
}

template <class T, class F>
std::vector<T> read_file_records(const std::string& path, F&& reader) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return reader(in);
  } catch (const RecordError& e) {
    throw RecordError(e.line(), path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Roadside sensor simulation, tracking, fusion and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  int threads = 1;

  auto* sim = app.add_subcommand("simulate", "Generate ground truth and sensor detections");
  sim->add_option("--config", config_path, "Pipeline config (JSON); built-in default when omitted");
  sim->add_option("--seed", seed, "Master seed; overrides the config");
  sim->add_option("--out-dir", out_dir, "Output directory");
  sim->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string detections_path;
  std::string mp;
  std::string tracks_out = "tracks";
  auto* track = app.add_subcommand("track", "Run one GM-PHD tracker per sensor");
  track->add_option("--config", config_path, "Pipeline config (JSON)");
  track->add_option("--detections", detections_path, "detections.jsonl")->required();
  track->add_option("--mp", mp, "Only the sensors of this measurement point");
  track->add_option("--out", tracks_out, "Output directory for tracks_<sensor>.jsonl");
  track->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::vector<std::string> track_files;
  std::string twin_out = "twin.jsonl";
  auto* fuse = app.add_subcommand("fuse", "Fuse per-sensor tracks into the digital twin");
  fuse->add_option("--config", config_path, "Pipeline config (JSON)");
  fuse->add_option("--tracks", track_files, "Track logs, or directories holding them")->required();
  fuse->add_option("--out", twin_out, "twin.jsonl");

  std::string truth_path;
  std::string twin_path;
  std::string report_path = "report.json";
  std::optional<double> exclude_boundary;
  auto* eval = app.add_subcommand("evaluate", "Score a twin against ground truth");
  eval->add_option("--config", config_path, "Pipeline config (JSON)");
  eval->add_option("--truth", truth_path, "ground_truth.jsonl")->required();
  eval->add_option("--twin", twin_path, "twin.jsonl")->required();
  eval->add_option("--report", report_path, "report.json; error_map.csv goes next to it");
  eval->add_option("--exclude-boundary", exclude_boundary,
                   "Also report recall without ground truth this close to the region ends (m)")
      ->expected(0, 1)
      ->default_str("10");

  auto* pipe = app.add_subcommand("pipeline", "simulate, track, fuse and evaluate");
  pipe->add_option("--config", config_path, "Pipeline config (JSON)");
  pipe->add_option("--seed", seed, "Master seed; overrides the config");
  pipe->add_option("--out-dir", out_dir, "Output directory");
  pipe->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string dump_out;
  auto* dump = app.add_subcommand("config", "Print the built-in default config");
  dump->add_option("--config", config_path, "Validate and print this config instead");
  dump->add_option("--out", dump_out, "Write to a file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  PipelineConfig cfg;
  try {
    cfg = config_from(config_path);
    if (seed) cfg.seed = *seed;
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  }
  // a bare --exclude-boundary leaves the optional engaged but empty-valued
  if (eval->count("--exclude-boundary") > 0 && !exclude_boundary) exclude_boundary = 10.0;

  try {
    if (*sim) {
      const auto out = simulate(cfg, cfg.seed, {}, threads);
      const fs::path dir(out_dir);
      fs::create_directories(dir);
      std::ostringstream gt;
      write_ground_truth(gt, out.truth);
      write_text(dir / "ground_truth.jsonl", gt.str());
      std::ostringstream det;
      write_detections(det, out.detections);
      write_text(dir / "detections.jsonl", det.str());
      std::size_t observations = 0;
      for (const auto& f : out.truth) observations += f.vehicles.size();
      std::cout << "ground truth: " << out.truth.size() << " frames, " << observations
                << " vehicle observations\n"
                << "detections: " << out.detections.size() << "\n";
    } else if (*track) {
      const auto detections = read_file_records<DetectionRecord>(detections_path, read_detections);
      std::vector<std::string> ids;
      for (const auto& s : cfg.sensors)
        if (mp.empty() || s.spec.mp_id == mp) ids.push_back(s.spec.id);
      if (!mp.empty() && ids.empty()) {
        std::cerr << "config error: unknown measurement point '" << mp << "'\n";
        return kConfig;
      }
      TrackLogs logs;
      try {
        logs = track_sensors(cfg, detections, ids, threads);
      } catch (const std::invalid_argument& e) {
        std::cerr << "record error: " << e.what() << "\n";
        return kRecord;
      }
      const fs::path dir(tracks_out);
      fs::create_directories(dir);
      for (const auto& [id, tracks] : logs) {
        std::ostringstream os;
        write_tracks(os, tracks);
        write_text(dir / tracks_file_name(id), os.str());
      }
      std::cout << "tracked " << logs.size() << " sensors\n";
    } else if (*fuse) {
      TrackLogs logs;
      std::vector<fs::path> files;
      for (const auto& p : track_files) {
        if (fs::is_directory(p)) {
          for (const auto& entry : fs::directory_iterator(p))
            if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
        } else {
          files.emplace_back(p);
        }
      }
      for (const auto& s : cfg.sensors) {
        const auto name = tracks_file_name(s.spec.id);
        for (const auto& f : files)
          if (f.filename() == name)
            logs[s.spec.id] = read_file_records<LocalTrack>(f.string(), read_tracks);
      }
      const auto twin = fuse_tracks(cfg, logs);
      std::ostringstream os;
      write_twin(os, twin);
      write_text(twin_out, os.str());
      std::cout << "twin: " << twin.size() << " frames\n";
    } else if (*eval) {
      const auto truth = read_file_records<GroundTruthFrame>(truth_path, read_ground_truth);
      const auto twin = read_file_records<DigitalTwinFrame>(twin_path, read_twin);
      if (exclude_boundary) cfg.eval.boundary_band = *exclude_boundary;
      try {
        cfg.eval.validate();
      } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
      }
      const auto report = evaluate_run(cfg, truth, twin);
      const fs::path rp(report_path);
      write_text(rp, report_to_json(report));
      std::ostringstream csv;
      write_error_map(csv, report.error_grid);
      write_text(rp.parent_path() / "error_map.csv", csv.str());
      std::cout << summary_table(report);
    } else if (*pipe) {
      const auto result = run_pipeline(cfg, cfg.seed, out_dir, threads);
      std::cout << summary_table(result.report);
    } else if (*dump) {
      const auto text = dump_config(cfg);
      if (dump_out.empty())
        std::cout << text;
      else
        write_text(dump_out, text);
    }
  } catch (const RecordError& e) {
    std::cerr << "record error: " << e.what() << "\n";
    return kRecord;
  } catch (const MissingStream& e) {
    std::cerr << "missing stream: " << e.what() << "\n";
    return kMissingStream;
  } catch (const NoTwinFrame& e) {
    std::cerr << "no overlap: " << e.what() << "\n";
    return kNoOverlap;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
