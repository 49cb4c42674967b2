#include "roadtwin/records.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace roadtwin {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

ojson cov_array(const StateMatrix& P) {
  ojson a = ojson::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) a.push_back(P(r, c));
  return a;
}

// Iterates the non-blank lines of a jsonl stream.
template <class F>
void for_each_record(std::istream& in, F&& f) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw RecordError(n, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw RecordError(n, "expected an object");
    try {
      f(j, n);
    } catch (const RecordError&) {
      throw;
    } catch (const std::exception& e) {
      throw RecordError(n, e.what());
    }
  }
}

double num(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  if (!it->is_number()) throw std::invalid_argument(std::string("field '") + key + "' is not a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw std::invalid_argument(std::string("field '") + key + "' is not finite");
  return v;
}

std::string str(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw std::invalid_argument(std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

std::uint64_t uint(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  if (!it->is_number_unsigned())
    throw std::invalid_argument(std::string("field '") + key + "' is not a non-negative integer");
  return it->get<std::uint64_t>();
}

StateMatrix read_cov(const json& j) {
  auto it = j.find("cov");
  if (it == j.end() || !it->is_array() || it->size() != 16)
    throw std::invalid_argument("field 'cov' must hold 16 numbers");
  StateMatrix P;
  for (std::size_t k = 0; k < 16; ++k) {
    if (!(*it)[k].is_number()) throw std::invalid_argument("field 'cov' must hold 16 numbers");
    P(static_cast<int>(k / 4), static_cast<int>(k % 4)) = (*it)[k].get<double>();
  }
  return P;
}

void check_order(double t, double& last, std::size_t line) {
  if (t < last) throw RecordError(line, "timestamp goes backwards");
  last = t;
}

}  // namespace

void write_ground_truth(std::ostream& out, const std::vector<GroundTruthFrame>& frames) {
  for (const auto& f : frames)
    for (const auto& v : f.vehicles) {
      ojson j;
      j["t"] = f.t;
      j["id"] = v.id;
      j["x"] = v.x;
      j["y"] = v.y;
      j["vx"] = v.vx;
      j["vy"] = v.vy;
      j["class"] = std::string(to_string(v.cls));
      j["length"] = v.length;
      j["width"] = v.width;
      out << j.dump() << '\n';
    }
}

std::vector<GroundTruthFrame> read_ground_truth(std::istream& in) {
  std::vector<GroundTruthFrame> frames;
  double last = -INFINITY;
  for_each_record(in, [&](const json& j, std::size_t line) {
    const double t = num(j, "t");
    check_order(t, last, line);
    if (frames.empty() || frames.back().t != t) frames.push_back({t, {}});
    VehicleAgent v;
    auto id = j.find("id");
    if (id == j.end() || !id->is_number_integer()) throw std::invalid_argument("field 'id' is not an integer");
    v.id = id->get<int>();
    v.x = num(j, "x");
    v.y = num(j, "y");
    v.vx = num(j, "vx");
    v.vy = num(j, "vy");
    v.cls = vehicle_class_from_string(str(j, "class"));
    v.length = num(j, "length");
    v.width = num(j, "width");
    frames.back().vehicles.push_back(v);
  });
  return frames;
}

void write_detections(std::ostream& out, const std::vector<DetectionRecord>& records) {
  for (const auto& r : records) {
    const auto& d = r.detection;
    ojson j;
    j["t"] = d.t;
    j["sensor_id"] = d.sensor_id;
    j["mp_id"] = r.mp_id;
    j["kind"] = std::string(to_string(d.kind));
    j["z"] = ojson::array({d.z[0], d.z[1], d.z[2], d.z[3]});
    j["class"] = std::string(to_string(d.cls));
    j["conf"] = d.confidence;
    out << j.dump() << '\n';
  }
}

std::vector<DetectionRecord> read_detections(std::istream& in) {
  std::vector<DetectionRecord> out;
  double last = -INFINITY;
  for_each_record(in, [&](const json& j, std::size_t line) {
    DetectionRecord r;
    auto& d = r.detection;
    d.t = num(j, "t");
    check_order(d.t, last, line);
    d.sensor_id = str(j, "sensor_id");
    r.mp_id = str(j, "mp_id");
    d.kind = sensor_kind_from_string(str(j, "kind"));
    auto z = j.find("z");
    if (z == j.end() || !z->is_array() || z->size() != 4)
      throw std::invalid_argument("field 'z' must hold 4 numbers");
    for (std::size_t k = 0; k < 4; ++k) {
      if (!(*z)[k].is_number()) throw std::invalid_argument("field 'z' must hold 4 numbers");
      d.z[static_cast<int>(k)] = (*z)[k].get<double>();
    }
    d.cls = vehicle_class_from_string(str(j, "class"));
    d.confidence = num(j, "conf");
    out.push_back(std::move(r));
  });
  return out;
}

void write_tracks(std::ostream& out, const std::vector<LocalTrack>& tracks) {
  for (const auto& tr : tracks) {
    ojson j;
    j["t"] = tr.t;
    j["sensor_id"] = tr.sensor_id;
    j["label"] = tr.label;
    j["x"] = tr.state[0];
    j["y"] = tr.state[1];
    j["vx"] = tr.state[2];
    j["vy"] = tr.state[3];
    j["cov"] = cov_array(tr.cov);
    j["status"] = std::string(to_string(tr.status));
    j["class"] = std::string(to_string(tr.cls));
    out << j.dump() << '\n';
  }
}

std::vector<LocalTrack> read_tracks(std::istream& in) {
  std::vector<LocalTrack> out;
  double last = -INFINITY;
  for_each_record(in, [&](const json& j, std::size_t line) {
    LocalTrack tr;
    tr.t = num(j, "t");
    check_order(tr.t, last, line);
    tr.sensor_id = str(j, "sensor_id");
    tr.label = uint(j, "label");
    tr.state = StateVector(num(j, "x"), num(j, "y"), num(j, "vx"), num(j, "vy"));
    tr.cov = read_cov(j);
    tr.status = track_status_from_string(str(j, "status"));
    tr.cls = j.contains("class") ? vehicle_class_from_string(str(j, "class"))
                                 : VehicleClass::unknown;
    out.push_back(std::move(tr));
  });
  return out;
}

void write_twin(std::ostream& out, const std::vector<DigitalTwinFrame>& frames) {
  for (const auto& f : frames)
    for (const auto& o : f.objects) {
      ojson j;
      j["t"] = f.t;
      j["gid"] = o.gid;
      j["x"] = o.state[0];
      j["y"] = o.state[1];
      j["vx"] = o.state[2];
      j["vy"] = o.state[3];
      j["cov"] = cov_array(o.cov);
      j["class"] = std::string(to_string(o.cls));
      out << j.dump() << '\n';
    }
}

std::vector<DigitalTwinFrame> read_twin(std::istream& in) {
  std::vector<DigitalTwinFrame> frames;
  double last = -INFINITY;
  for_each_record(in, [&](const json& j, std::size_t line) {
    const double t = num(j, "t");
    check_order(t, last, line);
    if (frames.empty() || frames.back().t != t) frames.push_back({t, {}});
    FusedTrack o;
    o.gid = uint(j, "gid");
    o.state = StateVector(num(j, "x"), num(j, "y"), num(j, "vx"), num(j, "vy"));
    o.cov = read_cov(j);
    o.cls = vehicle_class_from_string(str(j, "class"));
    o.last_update = t;
    frames.back().objects.push_back(o);
  });
  return frames;
}

std::string report_to_json(const MetricsReport& r) {
  ojson j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("rmse", r.rmse);
  put("rmse_x", r.rmse_x);
  put("rmse_y", r.rmse_y);
  put("precision", r.precision);
  put("recall", r.recall);
  put("p50", r.p50);
  put("p95", r.p95);
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  j["boundary_band"] = r.boundary_band;
  put("interior_recall", r.interior_recall);
  j["fn_boundary"] = r.fn_boundary;
  j["frames"] = r.frames;
  put("mean_abs_dt", r.mean_abs_dt);
  ojson grid = ojson::array();
  for (const auto& c : r.error_grid)
    grid.push_back({{"ix", c.ix}, {"iy", c.iy}, {"mean_error", c.mean_error}, {"count", c.count}});
  j["error_grid"] = grid;
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  MetricsReport r;
  auto get = [&](const char* key, std::optional<double>& v) {
    if (j.contains(key)) v = j.at(key).get<double>();
  };
  get("rmse", r.rmse);
  get("rmse_x", r.rmse_x);
  get("rmse_y", r.rmse_y);
  get("precision", r.precision);
  get("recall", r.recall);
  get("p50", r.p50);
  get("p95", r.p95);
  r.tp = j.at("tp").get<std::size_t>();
  r.fp = j.at("fp").get<std::size_t>();
  r.fn = j.at("fn").get<std::size_t>();
  r.boundary_band = j.at("boundary_band").get<double>();
  get("interior_recall", r.interior_recall);
  r.fn_boundary = j.at("fn_boundary").get<std::size_t>();
  r.frames = j.at("frames").get<std::size_t>();
  get("mean_abs_dt", r.mean_abs_dt);
  for (const auto& c : j.at("error_grid"))
    r.error_grid.push_back({c.at("ix").get<long>(), c.at("iy").get<long>(),
                            c.at("mean_error").get<double>(), c.at("count").get<std::size_t>()});
  return r;
}

void write_error_map(std::ostream& out, const std::vector<ErrorCell>& cells) {
  out << "ix,iy,mean_error,count\n";
  json fmt;
  for (const auto& c : cells) {
    fmt = c.mean_error;
    out << c.ix << ',' << c.iy << ',' << fmt.dump() << ',' << c.count << '\n';
  }
}

}  // namespace roadtwin
