#include "roadtwin/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <unordered_map>

namespace roadtwin {

double Intensity::total_weight() const {
  double s = 0.0;
  for (const auto& c : components) s += c.weight;
  return s;
}

void TrackerConfig::validate() const {
  auto fail = [](const char* field, const char* what) {
    throw std::invalid_argument(std::string("tracker.") + field + ": " + what);
  };
  if (!(p_survival > 0.0 && p_survival <= 1.0)) fail("p_survival", "must lie in (0, 1]");
  if (!(p_detect > 0.0 && p_detect <= 1.0)) fail("p_detect", "must lie in (0, 1]");
  if (!(clutter_density >= 0.0)) fail("clutter_density", "must be non-negative");
  if (!(accel_sigma >= 0.0)) fail("accel_sigma", "must be non-negative");
  if (!(prune_threshold > 0.0)) fail("prune_threshold", "must be positive");
  if (!(merge_threshold > 0.0)) fail("merge_threshold", "must be positive");
  if (max_components <= 0) fail("max_components", "must be positive");
  if (!(extract_threshold > 0.0)) fail("extract_threshold", "must be positive");
  if (!(birth_weight > 0.0)) fail("birth_weight", "must be positive");
  if (!(birth_velocity_variance > 0.0)) fail("birth_velocity_variance", "must be positive");
  if (miss_limit <= 0) fail("miss_limit", "must be positive");
  if (confirm_length <= 0) fail("confirm_length", "must be positive");
  if (!(birth_speed_max > 0.0)) fail("birth_speed_max", "must be positive");
  if (!(birth_gate > 0.0)) fail("birth_gate", "must be positive");
  if (!(update_gate > 0.0)) fail("update_gate", "must be positive");
  if (!(meas_sigma_x > 0.0 && meas_sigma_y > 0.0 && meas_sigma_vel > 0.0))
    fail("meas_sigma_x", "measurement noise must be positive");
}

Eigen::MatrixXd ObservationModel::H() const {
  return Eigen::MatrixXd::Identity(dim, 4);
}

Eigen::MatrixXd ObservationModel::R() const {
  return noise.topLeftCorner(dim, dim);
}

ObservationModel ObservationModel::position(double sigma_x, double sigma_y) {
  ObservationModel m;
  m.dim = 2;
  m.noise.setIdentity();
  m.noise(0, 0) = sigma_x * sigma_x;
  m.noise(1, 1) = sigma_y * sigma_y;
  return m;
}

ObservationModel ObservationModel::position_velocity(double sigma_pos,
                                                     double sigma_vel) {
  ObservationModel m;
  m.dim = 4;
  m.noise = Eigen::Vector4d(sigma_pos * sigma_pos, sigma_pos * sigma_pos,
                            sigma_vel * sigma_vel, sigma_vel * sigma_vel)
                .asDiagonal();
  return m;
}

ObservationModel ObservationModel::from_config(const TrackerConfig& cfg,
                                               int dim) {
  if (dim == 2) return position(cfg.meas_sigma_x, cfg.meas_sigma_y);
  ObservationModel m;
  m.dim = 4;
  m.noise = Eigen::Vector4d(cfg.meas_sigma_x * cfg.meas_sigma_x,
                            cfg.meas_sigma_y * cfg.meas_sigma_y,
                            cfg.meas_sigma_vel * cfg.meas_sigma_vel,
                            cfg.meas_sigma_vel * cfg.meas_sigma_vel)
                .asDiagonal();
  return m;
}

StateMatrix cv_transition(double dt) {
  StateMatrix F = StateMatrix::Identity();
  F(0, 2) = dt;
  F(1, 3) = dt;
  return F;
}

StateMatrix cv_process_noise(double dt, double accel_sigma) {
  const double q = accel_sigma * accel_sigma;
  const double dt2 = dt * dt;
  const double dt3 = dt2 * dt;
  const double dt4 = dt3 * dt;
  StateMatrix Q = StateMatrix::Zero();
  for (int axis = 0; axis < 2; ++axis) {
    const int p = axis;
    const int v = axis + 2;
    Q(p, p) = dt4 / 4.0 * q;
    Q(p, v) = Q(v, p) = dt3 / 2.0 * q;
    Q(v, v) = dt2 * q;
  }
  return Q;
}

namespace {

StateMatrix symmetrized(const StateMatrix& P) { return 0.5 * (P + P.transpose()); }

}  // namespace

Intensity predict(const Intensity& intensity, double dt,
                  const TrackerConfig& cfg) {
  if (!(dt > 0.0)) throw std::invalid_argument("predict: dt must be positive");
  const StateMatrix F = cv_transition(dt);
  const StateMatrix Q = cv_process_noise(dt, cfg.accel_sigma);
  Intensity out;
  out.t = intensity.t + dt;
  out.components.reserve(intensity.components.size());
  for (const auto& c : intensity.components) {
    GaussianComponent p = c;
    p.weight = cfg.p_survival * c.weight;
    p.mean = F * c.mean;
    p.cov = symmetrized(F * c.cov * F.transpose() + Q);
    p.age = c.age + 1;
    p.measurement = -1;
    out.components.push_back(p);
  }
  return out;
}

namespace {

// Per-component quantities shared by every measurement.
template <int D>
struct Innovation {
  Eigen::Matrix<double, D, 1> predicted;
  Eigen::LLT<Eigen::Matrix<double, D, D>> chol;
  Eigen::Matrix<double, 4, D> gain;
  StateMatrix posterior_cov;
  double log_norm = 0.0;
};

template <int D>
Innovation<D> innovation(const GaussianComponent& c, const ObservationModel& obs) {
  using MatD = Eigen::Matrix<double, D, D>;
  Innovation<D> in;
  in.predicted = c.mean.template head<D>();
  const MatD S = c.cov.template topLeftCorner<D, D>() +
                 obs.noise.template topLeftCorner<D, D>();
  in.chol.compute(0.5 * (S + S.transpose()));
  if (in.chol.info() != Eigen::Success)
    throw NonPositiveDefinite("innovation covariance is not positive definite");
  // K = P H^T S^-1, with P H^T the first D columns of P
  const Eigen::Matrix<double, 4, D> PHt = c.cov.template leftCols<D>();
  in.gain = in.chol.solve(PHt.transpose()).transpose();
  in.posterior_cov = symmetrized(c.cov - in.gain * PHt.transpose());
  const MatD L = in.chol.matrixL();
  double log_det = 0.0;
  for (int i = 0; i < D; ++i) log_det += 2.0 * std::log(L(i, i));
  in.log_norm = -0.5 * (D * std::log(2.0 * std::numbers::pi) + log_det);
  return in;
}

template <int D>
double mahalanobis2(const Innovation<D>& in,
                    const Eigen::Matrix<double, D, 1>& residual) {
  const Eigen::Matrix<double, D, 1> y =
      in.chol.matrixL().solve(residual);
  return y.squaredNorm();
}

template <int D>
Intensity update_impl(const Intensity& intensity, const MeasurementFrame& frame,
                      const ObservationModel& obs, const TrackerConfig& cfg) {
  const auto& comps = intensity.components;
  Intensity out;
  out.t = frame.t;
  out.components.reserve(comps.size() * (1 + std::min<std::size_t>(frame.size(), 4)));
  for (const auto& c : comps) {
    GaussianComponent miss = c;
    miss.weight = (1.0 - cfg.p_detect) * c.weight;
    miss.measurement = -1;
    out.components.push_back(miss);
  }
  if (frame.values.empty()) return out;

  std::vector<Innovation<D>> innovations;
  innovations.reserve(comps.size());
  for (const auto& c : comps) innovations.push_back(innovation<D>(c, obs));

  std::vector<GaussianComponent> scratch;
  for (std::size_t k = 0; k < frame.values.size(); ++k) {
    const Eigen::Matrix<double, D, 1> z = frame.values[k].template head<D>();
    scratch.clear();
    double total = 0.0;
    for (std::size_t j = 0; j < comps.size(); ++j) {
      const auto& in = innovations[j];
      const Eigen::Matrix<double, D, 1> r = z - in.predicted;
      const double d2 = mahalanobis2(in, r);
      if (d2 > cfg.update_gate) continue;
      GaussianComponent u;
      u.weight = cfg.p_detect * comps[j].weight * std::exp(in.log_norm - 0.5 * d2);
      u.mean = comps[j].mean + in.gain * r;
      u.cov = in.posterior_cov;
      u.label = comps[j].label;
      u.age = comps[j].age;
      u.measurement = static_cast<int>(k);
      total += u.weight;
      scratch.push_back(u);
    }
    const double denom = cfg.clutter_density + total;
    if (!(denom > 0.0)) continue;
    for (auto& u : scratch) {
      u.weight /= denom;
      out.components.push_back(u);
    }
  }
  return out;
}

std::vector<bool> explained_impl(const Intensity& predicted,
                                 const MeasurementFrame& frame,
                                 const ObservationModel& obs,
                                 const TrackerConfig& cfg) {
  // position block only, so velocity clutter cannot hide a target
  struct Gate {
    Eigen::Vector2d center;
    Eigen::LLT<Eigen::Matrix2d> chol;
  };
  std::vector<Gate> gates;
  for (const auto& c : predicted.components) {
    if (c.weight < cfg.explain_min_weight) continue;
    const Eigen::Matrix2d S = c.cov.topLeftCorner<2, 2>() +
                              obs.noise.topLeftCorner<2, 2>();
    gates.push_back({c.mean.head<2>(), Eigen::LLT<Eigen::Matrix2d>(S)});
  }
  std::vector<bool> explained(frame.size(), false);
  for (std::size_t k = 0; k < frame.size(); ++k) {
    const Eigen::Vector2d z = frame.values[k].head<2>();
    for (const auto& g : gates) {
      if (g.chol.matrixL().solve(z - g.center).squaredNorm() <= cfg.birth_gate) {
        explained[k] = true;
        break;
      }
    }
  }
  return explained;
}

}  // namespace

Intensity update(const Intensity& intensity, const MeasurementFrame& frame,
                 const ObservationModel& obs, const TrackerConfig& cfg) {
  if (frame.dim != obs.dim)
    throw std::invalid_argument("update: measurement dimension mismatch");
  switch (obs.dim) {
    case 2: return update_impl<2>(intensity, frame, obs, cfg);
    case 4: return update_impl<4>(intensity, frame, obs, cfg);
    default: throw std::invalid_argument("update: unsupported measurement dimension");
  }
}

std::vector<bool> explained_measurements(const Intensity& predicted,
                                         const MeasurementFrame& frame,
                                         const ObservationModel& obs,
                                         const TrackerConfig& cfg) {
  return explained_impl(predicted, frame, obs, cfg);
}

BirthResult birth_step(const std::vector<BirthCandidate>& candidates,
                       const MeasurementFrame& frame,
                       const std::vector<bool>& explained,
                       const ObservationModel& obs, const TrackerConfig& cfg,
                       LabelSource& labels) {
  struct Pair {
    double distance;
    std::size_t candidate;
    std::size_t measurement;
  };
  std::vector<Pair> pairs;
  for (std::size_t k = 0; k < frame.size(); ++k) {
    if (explained[k]) continue;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const double dt = frame.t - candidates[c].t;
      if (!(dt > 0.0)) continue;
      const double d = (frame.values[k].head<2>() - candidates[c].z.head<2>()).norm();
      if (d <= cfg.birth_speed_max * dt) pairs.push_back({d, c, k});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.measurement != b.measurement) return a.measurement < b.measurement;
    return a.candidate < b.candidate;
  });

  BirthResult out;
  std::vector<bool> cand_used(candidates.size(), false);
  std::vector<bool> meas_used(frame.size(), false);
  for (const auto& p : pairs) {
    if (cand_used[p.candidate] || meas_used[p.measurement]) continue;
    cand_used[p.candidate] = meas_used[p.measurement] = true;
    const auto& z = frame.values[p.measurement];
    const auto& c = candidates[p.candidate];
    const double dt = frame.t - c.t;
    GaussianComponent b;
    b.weight = cfg.birth_weight;
    b.label = labels.next();
    b.mean.head<2>() = z.head<2>();
    b.cov.setZero();
    b.cov.topLeftCorner<2, 2>() = obs.noise.topLeftCorner<2, 2>();
    if (frame.dim == 4) {
      b.mean.tail<2>() = z.tail<2>();
      b.cov.bottomRightCorner<2, 2>() = obs.noise.bottomRightCorner<2, 2>();
    } else {
      b.mean.tail<2>() = (z.head<2>() - c.z.head<2>()) / dt;
      b.cov.bottomRightCorner<2, 2>() =
          cfg.birth_velocity_variance * Eigen::Matrix2d::Identity();
    }
    out.components.push_back(b);
  }
  for (std::size_t k = 0; k < frame.size(); ++k) {
    if (explained[k] || meas_used[k]) continue;
    BirthCandidate cand;
    cand.z = frame.values[k];
    cand.t = frame.t;
    cand.cls = k < frame.classes.size() ? frame.classes[k] : VehicleClass::unknown;
    out.candidates.push_back(cand);
  }
  return out;
}

Intensity prune_and_merge(const Intensity& intensity, const TrackerConfig& cfg) {
  std::vector<const GaussianComponent*> kept;
  for (const auto& c : intensity.components)
    if (c.weight >= cfg.prune_threshold) kept.push_back(&c);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const GaussianComponent* a, const GaussianComponent* b) {
                     if (a->weight != b->weight) return a->weight > b->weight;
                     return a->label < b->label;
                   });

  std::vector<Eigen::LLT<StateMatrix>> chol;
  chol.reserve(kept.size());
  for (const auto* c : kept) {
    chol.emplace_back(c->cov);
    if (chol.back().info() != Eigen::Success)
      throw NonPositiveDefinite("component covariance is not positive definite");
  }

  Intensity out;
  out.t = intensity.t;
  std::vector<bool> used(kept.size(), false);
  std::vector<std::size_t> group;
  for (std::size_t j = 0; j < kept.size(); ++j) {
    if (used[j]) continue;
    const GaussianComponent& head = *kept[j];
    group.clear();
    for (std::size_t i = j; i < kept.size(); ++i) {
      if (used[i]) continue;
      const StateVector d = kept[i]->mean - head.mean;
      const double d2 = chol[i].matrixL().solve(d).squaredNorm();
      if (d2 <= cfg.merge_threshold) group.push_back(i);
    }
    double w = 0.0;
    StateVector m = StateVector::Zero();
    for (auto i : group) {
      used[i] = true;
      w += kept[i]->weight;
      m += kept[i]->weight * kept[i]->mean;
    }
    m /= w;
    StateMatrix P = StateMatrix::Zero();
    for (auto i : group) {
      const StateVector d = m - kept[i]->mean;
      P += kept[i]->weight * (kept[i]->cov + d * d.transpose());
    }
    P /= w;
    GaussianComponent merged = head;
    merged.weight = w;
    merged.mean = m;
    merged.cov = symmetrized(P);
    out.components.push_back(merged);
  }
  // merged weights can reorder the list
  std::stable_sort(out.components.begin(), out.components.end(),
                   [](const GaussianComponent& a, const GaussianComponent& b) {
                     if (a.weight != b.weight) return a.weight > b.weight;
                     return a.label < b.label;
                   });
  if (out.components.size() > static_cast<std::size_t>(cfg.max_components))
    out.components.resize(static_cast<std::size_t>(cfg.max_components));
  return out;
}

std::vector<Estimate> extract_estimates(const Intensity& intensity,
                                        double threshold) {
  std::map<std::uint64_t, const GaussianComponent*> best;
  for (const auto& c : intensity.components) {
    if (c.weight < threshold) continue;
    auto [it, inserted] = best.try_emplace(c.label, &c);
    if (!inserted && c.weight > it->second->weight) it->second = &c;
  }
  std::vector<Estimate> out;
  out.reserve(best.size());
  for (const auto& [label, c] : best)
    out.push_back({label, c->weight, c->mean, c->cov, c->measurement});
  return out;
}

std::string_view to_string(TrackStatus status) {
  switch (status) {
    case TrackStatus::tentative: return "tentative";
    case TrackStatus::confirmed: return "confirmed";
    case TrackStatus::dead: return "dead";
  }
  return "dead";
}

TrackStatus track_status_from_string(std::string_view name) {
  if (name == "tentative") return TrackStatus::tentative;
  if (name == "confirmed") return TrackStatus::confirmed;
  if (name == "dead") return TrackStatus::dead;
  throw std::invalid_argument("unknown track status '" + std::string(name) + "'");
}

VehicleClass Track::majority_class() const {
  int best = static_cast<int>(VehicleClass::unknown);
  int votes = 0;
  for (int i = 0; i < kVehicleClassCount; ++i) {
    if (i == static_cast<int>(VehicleClass::unknown)) continue;
    if (class_votes[static_cast<std::size_t>(i)] > votes) {
      votes = class_votes[static_cast<std::size_t>(i)];
      best = i;
    }
  }
  return static_cast<VehicleClass>(best);
}

std::vector<Track> TrackManager::update(
    const std::vector<Estimate>& estimates, const TrackerConfig& cfg, double t,
    const std::vector<VehicleClass>& measurement_classes) {
  newly_dead_.clear();
  std::set<std::uint64_t> seen;
  for (const auto& e : estimates) {
    if (dead_.contains(e.label)) continue;
    seen.insert(e.label);
    auto [it, inserted] = tracks_.try_emplace(e.label);
    Track& tr = it->second;
    if (inserted) tr.label = e.label;
    tr.state = e.mean;
    tr.cov = e.cov;
    tr.last_update = t;
    tr.misses = 0;
    ++tr.hits;
    if (e.measurement >= 0 &&
        static_cast<std::size_t>(e.measurement) < measurement_classes.size())
      ++tr.class_votes[static_cast<std::size_t>(
          measurement_classes[static_cast<std::size_t>(e.measurement)])];
    if (tr.status == TrackStatus::tentative && tr.hits >= cfg.confirm_length)
      tr.status = TrackStatus::confirmed;
  }
  for (auto it = tracks_.begin(); it != tracks_.end();) {
    Track& tr = it->second;
    if (!seen.contains(it->first)) {
      ++tr.misses;
      if (tr.status == TrackStatus::tentative) tr.hits = 0;
      if (tr.misses >= cfg.miss_limit) {
        dead_.insert(it->first);
        newly_dead_.push_back(it->first);
        it = tracks_.erase(it);
        continue;
      }
    }
    ++it;
  }
  std::vector<Track> live;
  live.reserve(tracks_.size());
  for (const auto& [label, tr] : tracks_) {
    Track out = tr;
    const double dt = t - tr.last_update;
    if (dt > 0.0) {
      const StateMatrix F = cv_transition(dt);
      out.state = F * tr.state;
      out.cov = symmetrized(F * tr.cov * F.transpose() +
                            cv_process_noise(dt, cfg.accel_sigma));
    }
    live.push_back(out);
  }
  return live;
}

std::vector<Track> extract_tracks(const Intensity& intensity,
                                  const TrackerConfig& cfg, double t,
                                  TrackManager& manager,
                                  const std::vector<VehicleClass>& classes) {
  return manager.update(extract_estimates(intensity, cfg.extract_threshold), cfg,
                        t, classes);
}

SensorTracker::SensorTracker(TrackerConfig cfg, ObservationModel obs)
    : cfg_(std::move(cfg)), obs_(std::move(obs)) {
  cfg_.validate();
}

std::vector<Track> SensorTracker::step(const MeasurementFrame& frame) {
  Intensity predicted;
  if (started_) {
    const double dt = frame.t - intensity_.t;
    if (!(dt > 0.0))
      throw std::invalid_argument("tracker: frame timestamps must increase");
    predicted = predict(intensity_, dt, cfg_);
  } else {
    predicted.t = frame.t;
    started_ = true;
  }

  const auto explained = explained_measurements(predicted, frame, obs_, cfg_);
  BirthResult births = birth_step(candidates_, frame, explained, obs_, cfg_, labels_);
  candidates_ = std::move(births.candidates);
  for (auto& b : births.components) predicted.components.push_back(std::move(b));

  Intensity posterior = update(predicted, frame, obs_, cfg_);
  posterior_mass_ = posterior.total_weight();
  intensity_ = prune_and_merge(posterior, cfg_);

  live_ = extract_tracks(intensity_, cfg_, frame.t, manager_, frame.classes);

  // components of terminated tracks start a new lineage
  if (!manager_.newly_dead().empty()) {
    std::unordered_map<std::uint64_t, std::uint64_t> relabel;
    for (auto label : manager_.newly_dead()) relabel[label] = labels_.next();
    for (auto& c : intensity_.components) {
      auto it = relabel.find(c.label);
      if (it != relabel.end()) c.label = it->second;
    }
  }

  std::vector<Track> confirmed;
  for (const auto& tr : live_)
    if (tr.status == TrackStatus::confirmed) confirmed.push_back(tr);
  return confirmed;
}

}  // namespace roadtwin
