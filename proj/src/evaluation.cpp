#include "roadtwin/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "roadtwin/hungarian.hpp"

namespace roadtwin {

void EvalConfig::validate() const {
  if (!(semi_major > semi_minor && semi_minor > 0.0))
    throw std::invalid_argument("eval.semi_major: needs semi_major > semi_minor > 0");
  if (!(boundary_band >= 0.0))
    throw std::invalid_argument("eval.boundary_band: must be non-negative");
  if (!(cell_size > 0.0)) throw std::invalid_argument("eval.cell_size: must be positive");
  if (!(region_max_x > region_min_x))
    throw std::invalid_argument("eval.region_max_x: must exceed region_min_x");
}

std::vector<AlignedFrame> align_frames(const std::vector<GroundTruthFrame>& truth,
                                       const std::vector<DigitalTwinFrame>& twin,
                                       double truth_period) {
  std::vector<AlignedFrame> out;
  out.reserve(truth.size());
  bool any = false;
  for (const auto& gt : truth) {
    AlignedFrame af;
    af.truth = gt;
    af.twin.t = gt.t;
    auto it = std::lower_bound(
        twin.begin(), twin.end(), gt.t,
        [](const DigitalTwinFrame& f, double t) { return f.t < t; });
    const DigitalTwinFrame* best = nullptr;
    if (it != twin.end()) best = &*it;
    if (it != twin.begin()) {
      const DigitalTwinFrame* prev = &*std::prev(it);
      if (!best || std::abs(gt.t - prev->t) <= std::abs(best->t - gt.t)) best = prev;
    }
    if (best && std::abs(gt.t - best->t) <= truth_period / 2.0) {
      any = true;
      af.has_twin = true;
      af.dt = gt.t - best->t;
      for (const auto& obj : best->objects) {
        FusedTrack moved = obj;
        moved.state[0] += af.dt * obj.state[2];
        moved.state[1] += af.dt * obj.state[3];
        af.twin.objects.push_back(moved);
      }
    }
    out.push_back(std::move(af));
  }
  if (!truth.empty() && !any) throw NoTwinFrame();
  return out;
}

double ellipse_distance(double dx, double dy, const EvalConfig& cfg) {
  const double a = dx / cfg.semi_major;
  const double b = dy / cfg.semi_minor;
  return std::sqrt(a * a + b * b);
}

double Association::error() const { return std::hypot(dx, dy); }

namespace {

// twin - truth in road coordinates of the truth vehicle
std::pair<double, double> road_error(const VehicleAgent& gt, const FusedTrack& tw) {
  const double dx = tw.state[0] - gt.x;
  const double dy = tw.state[1] - gt.y;
  return gt.vx < 0.0 ? std::pair(-dx, -dy) : std::pair(dx, dy);
}

}  // namespace

FrameAssociation gate_and_associate(const GroundTruthFrame& truth,
                                    const DigitalTwinFrame& twin,
                                    const EvalConfig& cfg) {
  FrameAssociation out;
  out.t = truth.t;
  const auto& gts = truth.vehicles;
  const auto& tws = twin.objects;
  std::vector<bool> gt_matched(gts.size(), false);
  std::vector<bool> tw_matched(tws.size(), false);
  if (!gts.empty() && !tws.empty()) {
    Eigen::MatrixXd cost(gts.size(), tws.size());
    for (std::size_t i = 0; i < gts.size(); ++i)
      for (std::size_t j = 0; j < tws.size(); ++j) {
        const auto [dx, dy] = road_error(gts[i], tws[j]);
        cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            ellipse_distance(dx, dy, cfg);
      }
    const Assignment asg = hungarian(cost);
    for (std::size_t i = 0; i < gts.size(); ++i) {
      const int j = asg.row_to_col[i];
      if (j < 0) continue;
      const double d = cost(static_cast<Eigen::Index>(i), j);
      if (d > 1.0) continue;
      const auto [dx, dy] = road_error(gts[i], tws[static_cast<std::size_t>(j)]);
      Association a;
      a.truth_id = gts[i].id;
      a.twin_id = tws[static_cast<std::size_t>(j)].gid;
      a.t = truth.t;
      a.x = gts[i].x;
      a.y = gts[i].y;
      a.dx = dx;
      a.dy = dy;
      a.distance = d;
      out.pairs.push_back(a);
      gt_matched[i] = true;
      tw_matched[static_cast<std::size_t>(j)] = true;
    }
  }
  for (std::size_t i = 0; i < gts.size(); ++i)
    if (!gt_matched[i]) out.unmatched_truth.push_back({gts[i].id, gts[i].x, gts[i].y});
  for (std::size_t j = 0; j < tws.size(); ++j) {
    if (tw_matched[j]) continue;
    const double x = tws[j].state[0];
    if (x >= cfg.region_min_x && x <= cfg.region_max_x)
      out.unmatched_twin.push_back(tws[j].gid);
  }
  return out;
}

std::vector<ErrorCell> error_map(const std::vector<Association>& associations,
                                 double cell_size) {
  std::map<std::pair<long, long>, std::pair<double, std::size_t>> cells;
  for (const auto& a : associations) {
    const long ix = static_cast<long>(std::floor(a.x / cell_size));
    const long iy = static_cast<long>(std::floor(a.y / cell_size));
    auto& c = cells[{ix, iy}];
    c.first += a.error();
    ++c.second;
  }
  std::vector<ErrorCell> out;
  for (const auto& [key, c] : cells)
    out.push_back({key.first, key.second, c.first / static_cast<double>(c.second), c.second});
  return out;
}

double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile of an empty set");
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<long>(std::ceil(p * n)) - 1;
  rank = std::clamp<long>(rank, 0, static_cast<long>(sorted.size()) - 1);
  return sorted[static_cast<std::size_t>(rank)];
}

MetricsReport compute_metrics(const std::vector<FrameAssociation>& frames,
                              const EvalConfig& cfg) {
  MetricsReport r;
  r.boundary_band = cfg.boundary_band;
  r.frames = frames.size();
  std::vector<Association> all;
  auto in_band = [&](double x) {
    return cfg.boundary_band > 0.0 &&
           (x - cfg.region_min_x < cfg.boundary_band ||
            cfg.region_max_x - x < cfg.boundary_band);
  };
  std::size_t tp_in = 0;
  std::size_t fn_in = 0;
  for (const auto& f : frames) {
    r.tp += f.pairs.size();
    r.fp += f.unmatched_twin.size();
    r.fn += f.unmatched_truth.size();
    for (const auto& a : f.pairs) {
      all.push_back(a);
      if (!in_band(a.x)) ++tp_in;
    }
    for (const auto& u : f.unmatched_truth) {
      if (in_band(u.x))
        ++r.fn_boundary;
      else
        ++fn_in;
    }
  }
  if (r.tp + r.fp > 0)
    r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  if (r.tp + r.fn > 0)
    r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  if (cfg.boundary_band > 0.0 && tp_in + fn_in > 0)
    r.interior_recall =
        static_cast<double>(tp_in) / static_cast<double>(tp_in + fn_in);
  if (!all.empty()) {
    double sx = 0.0;
    double sy = 0.0;
    std::vector<double> errors;
    errors.reserve(all.size());
    for (const auto& a : all) {
      sx += a.dx * a.dx;
      sy += a.dy * a.dy;
      errors.push_back(a.error());
    }
    const auto n = static_cast<double>(all.size());
    r.rmse_x = std::sqrt(sx / n);
    r.rmse_y = std::sqrt(sy / n);
    r.rmse = std::sqrt((sx + sy) / n);
    std::sort(errors.begin(), errors.end());
    r.p50 = percentile_sorted(errors, 0.50);
    r.p95 = percentile_sorted(errors, 0.95);
    r.error_grid = error_map(all, cfg.cell_size);
  }
  return r;
}

MetricsReport evaluate(const std::vector<GroundTruthFrame>& truth,
                       const std::vector<DigitalTwinFrame>& twin,
                       const EvalConfig& cfg, double truth_period) {
  const auto aligned = align_frames(truth, twin, truth_period);
  std::vector<FrameAssociation> frames;
  frames.reserve(aligned.size());
  double sum_dt = 0.0;
  std::size_t n_dt = 0;
  for (const auto& af : aligned) {
    frames.push_back(gate_and_associate(af.truth, af.twin, cfg));
    if (af.has_twin) {
      sum_dt += std::abs(af.dt);
      ++n_dt;
    }
  }
  MetricsReport r = compute_metrics(frames, cfg);
  if (n_dt > 0) r.mean_abs_dt = sum_dt / static_cast<double>(n_dt);
  return r;
}

}  // namespace roadtwin
