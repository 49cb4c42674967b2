#include "roadtwin/fusion.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "roadtwin/hungarian.hpp"

namespace roadtwin {

std::string_view to_string(OmegaPolicy policy) {
  return policy == OmegaPolicy::fixed_half ? "fixed_half" : "min_determinant";
}

OmegaPolicy omega_policy_from_string(std::string_view name) {
  if (name == "fixed_half") return OmegaPolicy::fixed_half;
  if (name == "min_determinant") return OmegaPolicy::min_determinant;
  throw std::invalid_argument("unknown omega policy '" + std::string(name) + "'");
}

void FusionConfig::validate() const {
  if (!(gate > 0.0)) throw std::invalid_argument("fusion.gate: must be positive");
  if (handover_persistence < 1)
    throw std::invalid_argument("fusion.handover_persistence: must be >= 1");
  if (miss_limit < 1) throw std::invalid_argument("fusion.miss_limit: must be >= 1");
  if (!(accel_sigma >= 0.0))
    throw std::invalid_argument("fusion.accel_sigma: must be non-negative");
  for (double l : class_length)
    if (!(l > 0.0)) throw std::invalid_argument("fusion.class_length: must be positive");
  if (!(extent_factor >= 0.0))
    throw std::invalid_argument("fusion.extent_factor: must be non-negative");
  if (!(velocity_gate > 0.0))
    throw std::invalid_argument("fusion.velocity_gate: must be positive");
  if (!(velocity_sigma >= 0.0))
    throw std::invalid_argument("fusion.velocity_sigma: must be non-negative");
  if (!(extent_sigma_y >= 0.0))
    throw std::invalid_argument("fusion.extent_sigma_y: must be non-negative");
}

Eigen::Matrix2d FusionConfig::association_spread(VehicleClass a, VehicleClass b) const {
  const double sx = extent_factor * 0.5 *
                    (class_length[static_cast<std::size_t>(a)] +
                     class_length[static_cast<std::size_t>(b)]);
  return Eigen::Vector2d(sx * sx, extent_sigma_y * extent_sigma_y).asDiagonal();
}

Gaussian4 fuse_pair(const Gaussian4& a, const Gaussian4& b, OmegaPolicy policy) {
  const double omega =
      policy == OmegaPolicy::fixed_half ? 0.5 : optimize_omega<4>(a, b);
  return gci_fuse<4>(a, b, omega);
}

Gaussian4 extrapolate(const Gaussian4& g, double dt, double accel_sigma) {
  if (dt == 0.0) return g;
  const StateMatrix F = cv_transition(dt);
  Gaussian4 out;
  out.mean = F * g.mean;
  StateMatrix P = F * g.cov * F.transpose();
  if (accel_sigma > 0.0) P += cv_process_noise(std::abs(dt), accel_sigma);
  out.cov = 0.5 * (P + P.transpose());
  return out;
}

double position_distance2(const Gaussian4& a, const Gaussian4& b,
                          const Eigen::Matrix2d& spread) {
  const Eigen::Vector2d d = a.mean.head<2>() - b.mean.head<2>();
  const Eigen::Matrix2d S =
      a.cov.topLeftCorner<2, 2>() + b.cov.topLeftCorner<2, 2>() + spread;
  Eigen::LLT<Eigen::Matrix2d> llt(S);
  if (llt.info() != Eigen::Success)
    throw NonPositiveDefinite("position covariance is not positive definite");
  return llt.matrixL().solve(d).squaredNorm();
}

double velocity_distance2(const Gaussian4& a, const Gaussian4& b, double sigma) {
  const Eigen::Vector2d d = a.mean.tail<2>() - b.mean.tail<2>();
  const Eigen::Matrix2d S = a.cov.bottomRightCorner<2, 2>() +
                            b.cov.bottomRightCorner<2, 2>() +
                            sigma * sigma * Eigen::Matrix2d::Identity();
  Eigen::LLT<Eigen::Matrix2d> llt(S);
  if (llt.info() != Eigen::Success)
    throw NonPositiveDefinite("velocity covariance is not positive definite");
  return llt.matrixL().solve(d).squaredNorm();
}

TrackAssociation associate_tracks(std::span<const Gaussian4> a,
                                  std::span<const Gaussian4> b, double gate,
                                  const Eigen::Matrix2d& spread) {
  return associate_tracks(a, b, gate,
                          [&](std::size_t, std::size_t) -> Eigen::Matrix2d { return spread; });
}

TrackAssociation associate_tracks(
    std::span<const Gaussian4> a, std::span<const Gaussian4> b, double gate,
    const std::function<Eigen::Matrix2d(std::size_t, std::size_t)>& spread,
    double velocity_gate, double velocity_sigma) {
  TrackAssociation out;
  if (a.empty() || b.empty()) {
    for (std::size_t i = 0; i < a.size(); ++i) out.unmatched_a.push_back(i);
    for (std::size_t j = 0; j < b.size(); ++j) out.unmatched_b.push_back(j);
    return out;
  }
  // Costs are Mahalanobis distances saturated at the gate: beyond it every
  // pair is equally impossible, and raw squared distances of far-apart
  // pairs would otherwise outweigh the choice among gated ones.
  Eigen::MatrixXd d2(a.size(), b.size());
  Eigen::MatrixXd cost(a.size(), b.size());
  const double cap = std::sqrt(gate);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const auto r = static_cast<Eigen::Index>(i);
      const auto c = static_cast<Eigen::Index>(j);
      d2(r, c) = position_distance2(a[i], b[j], spread(i, j));
      if (std::isfinite(velocity_gate) &&
          velocity_distance2(a[i], b[j], velocity_sigma) > velocity_gate)
        d2(r, c) = std::numeric_limits<double>::infinity();
      cost(r, c) = std::min(std::sqrt(d2(r, c)), cap);
    }
  const Assignment asg = hungarian(cost);
  std::vector<bool> b_used(b.size(), false);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int j = asg.row_to_col[i];
    if (j >= 0 && d2(static_cast<Eigen::Index>(i), j) <= gate) {
      out.pairs.emplace_back(i, static_cast<std::size_t>(j));
      b_used[static_cast<std::size_t>(j)] = true;
    } else {
      out.unmatched_a.push_back(i);
    }
  }
  for (std::size_t j = 0; j < b.size(); ++j)
    if (!b_used[j]) out.unmatched_b.push_back(j);
  return out;
}

VehicleClass majority_vote(std::span<const VehicleClass> classes) {
  std::array<int, kVehicleClassCount> votes{};
  for (auto c : classes) ++votes[static_cast<std::size_t>(c)];
  int best = static_cast<int>(VehicleClass::unknown);
  int n = 0;
  for (int i = 0; i < kVehicleClassCount; ++i) {
    if (i == static_cast<int>(VehicleClass::unknown)) continue;
    if (votes[static_cast<std::size_t>(i)] > n) {
      n = votes[static_cast<std::size_t>(i)];
      best = i;
    }
  }
  return static_cast<VehicleClass>(best);
}

std::vector<TrackGroup> group_tracks(std::span<const LocalTrack> tracks, double t,
                                     const FusionConfig& cfg) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < tracks.size(); ++i)
    if (tracks[i].status == TrackStatus::confirmed) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    if (tracks[l].sensor_id != tracks[r].sensor_id)
      return tracks[l].sensor_id < tracks[r].sensor_id;
    return tracks[l].label < tracks[r].label;
  });

  std::vector<TrackGroup> groups;
  std::size_t pos = 0;
  while (pos < order.size()) {
    const std::string& sensor = tracks[order[pos]].sensor_id;
    std::vector<std::size_t> batch;
    while (pos < order.size() && tracks[order[pos]].sensor_id == sensor)
      batch.push_back(order[pos++]);

    std::vector<Gaussian4> incoming;
    for (auto i : batch)
      incoming.push_back(extrapolate(tracks[i].gaussian(), t - tracks[i].t));
    std::vector<Gaussian4> current;
    std::vector<VehicleClass> current_cls;
    for (const auto& g : groups) {
      current.push_back(g.fused);
      std::vector<VehicleClass> classes;
      for (auto m : g.members) classes.push_back(tracks[m].cls);
      current_cls.push_back(majority_vote(classes));
    }

    const auto asg =
        associate_tracks(current, incoming, cfg.gate, [&](std::size_t gi, std::size_t ti) {
          return cfg.association_spread(current_cls[gi], tracks[batch[ti]].cls);
        }, cfg.velocity_gate, cfg.velocity_sigma);
    for (auto [gi, ti] : asg.pairs) {
      groups[gi].fused = fuse_pair(groups[gi].fused, incoming[ti], cfg.omega);
      groups[gi].members.push_back(batch[ti]);
    }
    for (auto ti : asg.unmatched_b) groups.push_back({incoming[ti], {batch[ti]}});
  }
  return groups;
}

std::vector<Tracklet> fuse_measurement_point(const std::string& mp_id,
                                             std::span<const LocalTrack> tracks,
                                             double t, const FusionConfig& cfg) {
  std::vector<Tracklet> out;
  std::uint64_t id = 1;
  for (const auto& g : group_tracks(tracks, t, cfg)) {
    Tracklet tl;
    tl.mp_id = mp_id;
    tl.id = id++;
    tl.t = t;
    tl.state = g.fused.mean;
    tl.cov = g.fused.cov;
    std::vector<VehicleClass> classes;
    for (auto m : g.members) {
      classes.push_back(tracks[m].cls);
      tl.sensors.push_back(tracks[m].sensor_id);
    }
    tl.cls = majority_vote(classes);
    out.push_back(std::move(tl));
  }
  return out;
}

MeasurementPointFuser::MeasurementPointFuser(std::string mp_id, FusionConfig cfg)
    : mp_id_(std::move(mp_id)), cfg_(cfg) {
  cfg_.validate();
}

std::vector<Tracklet> MeasurementPointFuser::fuse(std::span<const LocalTrack> tracks,
                                                  double t) {
  auto tracklets = fuse_measurement_point(mp_id_, tracks, t, cfg_);
  const auto groups = group_tracks(tracks, t, cfg_);

  std::map<std::pair<std::string, std::uint64_t>, std::uint64_t> next;
  std::set<std::uint64_t> claimed;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::map<std::uint64_t, int> counts;
    for (auto m : groups[g].members) {
      auto it = bindings_.find({tracks[m].sensor_id, tracks[m].label});
      if (it != bindings_.end() && !claimed.contains(it->second)) ++counts[it->second];
    }
    std::uint64_t id = 0;
    int best = 0;
    for (const auto& [candidate, n] : counts)
      if (n > best) {
        best = n;
        id = candidate;
      }
    if (id == 0) id = next_id_++;
    claimed.insert(id);
    tracklets[g].id = id;
    for (auto m : groups[g].members) next[{tracks[m].sensor_id, tracks[m].label}] = id;
  }
  bindings_ = std::move(next);
  std::sort(tracklets.begin(), tracklets.end(),
            [](const Tracklet& a, const Tracklet& b) { return a.id < b.id; });
  return tracklets;
}

BackendFuser::BackendFuser(FusionConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::size_t BackendFuser::pending() const {
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(), [](const Entry& e) { return e.gid == 0; }));
}

DigitalTwinFrame BackendFuser::fuse(std::span<const Tracklet> tracklets, double t) {
  if (started_ && t < last_t_)
    throw std::invalid_argument("backend fusion: ticks must not go back in time");
  const double dt = started_ ? t - last_t_ : 0.0;
  started_ = true;
  last_t_ = t;
  if (dt > 0.0)
    for (auto& e : entries_) e.estimate = extrapolate(e.estimate, dt, cfg_.accel_sigma);

  std::vector<std::size_t> order(tracklets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    if (tracklets[l].mp_id != tracklets[r].mp_id)
      return tracklets[l].mp_id < tracklets[r].mp_id;
    return tracklets[l].id < tracklets[r].id;
  });
  std::vector<Gaussian4> aligned(tracklets.size());
  for (std::size_t i = 0; i < tracklets.size(); ++i)
    aligned[i] = extrapolate(tracklets[i].gaussian(), t - tracklets[i].t);

  auto index_of = [&](std::uint64_t uid) -> std::ptrdiff_t {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].uid == uid) return static_cast<std::ptrdiff_t>(i);
    return -1;
  };

  std::vector<std::vector<std::size_t>> claims(entries_.size());
  std::size_t pos = 0;
  while (pos < order.size()) {
    const std::string& mp = tracklets[order[pos]].mp_id;
    std::vector<std::size_t> batch;
    while (pos < order.size() && tracklets[order[pos]].mp_id == mp)
      batch.push_back(order[pos++]);

    std::vector<bool> taken(entries_.size(), false);
    std::vector<std::size_t> remaining;
    for (auto ti : batch) {
      auto it = bindings_.find({mp, tracklets[ti].id});
      const std::ptrdiff_t ei = it == bindings_.end() ? -1 : index_of(it->second);
      if (ei >= 0 && !taken[static_cast<std::size_t>(ei)]) {
        taken[static_cast<std::size_t>(ei)] = true;
        claims[static_cast<std::size_t>(ei)].push_back(ti);
      } else {
        remaining.push_back(ti);
      }
    }

    std::vector<std::size_t> free_entries;
    std::vector<Gaussian4> free_estimates;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (!taken[i]) {
        free_entries.push_back(i);
        free_estimates.push_back(entries_[i].estimate);
      }
    std::vector<Gaussian4> incoming;
    for (auto ti : remaining) incoming.push_back(aligned[ti]);
    const auto asg =
        associate_tracks(free_estimates, incoming, cfg_.gate, [&](std::size_t fi, std::size_t ri) {
          return cfg_.association_spread(entries_[free_entries[fi]].cls,
                                         tracklets[remaining[ri]].cls);
        }, cfg_.velocity_gate, cfg_.velocity_sigma);
    for (auto [fi, ri] : asg.pairs) claims[free_entries[fi]].push_back(remaining[ri]);
    for (auto ri : asg.unmatched_b) {
      Entry e;
      e.uid = next_uid_++;
      e.estimate = aligned[remaining[ri]];
      entries_.push_back(e);
      claims.push_back({remaining[ri]});
    }
  }

  for (std::size_t i = 0; i < entries_.size(); ++i) {
    Entry& e = entries_[i];
    if (claims[i].empty()) {
      ++e.misses;
      if (e.gid == 0) e.support = 0;
      continue;
    }
    Gaussian4 fused = aligned[claims[i].front()];
    for (std::size_t k = 1; k < claims[i].size(); ++k)
      fused = fuse_pair(fused, aligned[claims[i][k]], cfg_.omega);
    e.estimate = fused;
    e.last_update = t;
    e.misses = 0;
    ++e.support;
    e.mps.clear();
    std::vector<VehicleClass> current;
    for (auto ti : claims[i]) {
      e.mps.push_back(tracklets[ti].mp_id);
      current.push_back(tracklets[ti].cls);
      ++e.votes[static_cast<std::size_t>(tracklets[ti].cls)];
      bindings_[{tracklets[ti].mp_id, tracklets[ti].id}] = e.uid;
    }
    e.cls = majority_vote(current);
    if (e.cls == VehicleClass::unknown) {
      int n = 0;
      for (int c = 0; c < kVehicleClassCount; ++c) {
        if (c == static_cast<int>(VehicleClass::unknown)) continue;
        if (e.votes[static_cast<std::size_t>(c)] > n) {
          n = e.votes[static_cast<std::size_t>(c)];
          e.cls = static_cast<VehicleClass>(c);
        }
      }
    }
  }

  // one vehicle tracked under two entries
  struct Dup {
    double d2;
    std::size_t a;
    std::size_t b;
  };
  std::vector<Dup> dups;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    for (std::size_t j = i + 1; j < entries_.size(); ++j) {
      if (claims[i].empty() && claims[j].empty()) continue;
      bool disjoint = true;
      for (const auto& m : entries_[i].mps)
        if (std::find(entries_[j].mps.begin(), entries_[j].mps.end(), m) !=
            entries_[j].mps.end())
          disjoint = false;
      // entries fed by a shared point only merge when they coincide
      const Eigen::Matrix2d spread =
          disjoint ? cfg_.association_spread(entries_[i].cls, entries_[j].cls)
                   : Eigen::Matrix2d::Zero();
      const double d2 =
          position_distance2(entries_[i].estimate, entries_[j].estimate, spread);

      if (d2 <= cfg_.gate) dups.push_back({d2, i, j});
    }
  }
  std::sort(dups.begin(), dups.end(), [](const Dup& l, const Dup& r) {
    if (l.d2 != r.d2) return l.d2 < r.d2;
    return std::pair(l.a, l.b) < std::pair(r.a, r.b);
  });
  std::vector<bool> consumed(entries_.size(), false);
  std::vector<bool> removed(entries_.size(), false);
  auto ranks_before = [&](const Entry& x, const Entry& y) {
    if ((x.gid != 0) != (y.gid != 0)) return x.gid != 0;
    if (x.gid != 0) return x.gid < y.gid;
    return x.uid < y.uid;
  };
  for (const auto& d : dups) {
    if (consumed[d.a] || consumed[d.b]) continue;
    consumed[d.a] = consumed[d.b] = true;
    const bool a_keeps = ranks_before(entries_[d.a], entries_[d.b]);
    Entry& keep = entries_[a_keeps ? d.a : d.b];
    Entry& drop = entries_[a_keeps ? d.b : d.a];
    keep.estimate = fuse_pair(keep.estimate, drop.estimate, cfg_.omega);
    if (drop.misses < keep.misses) {
      keep.misses = drop.misses;
      keep.last_update = drop.last_update;
    }
    keep.support = std::max(keep.support, drop.support);
    keep.mps.insert(keep.mps.end(), drop.mps.begin(), drop.mps.end());
    for (int c = 0; c < kVehicleClassCount; ++c)
      keep.votes[static_cast<std::size_t>(c)] += drop.votes[static_cast<std::size_t>(c)];
    for (auto& [key, uid] : bindings_)
      if (uid == drop.uid) uid = keep.uid;
    removed[a_keeps ? d.b : d.a] = true;
  }

  std::set<std::uint64_t> gone;
  std::vector<Entry> survivors;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    Entry& e = entries_[i];
    const bool expired = e.gid == 0 ? e.misses > 0 : e.misses >= cfg_.miss_limit;
    if (removed[i] || expired) {
      gone.insert(e.uid);
      continue;
    }
    survivors.push_back(std::move(e));
  }
  entries_ = std::move(survivors);
  std::erase_if(bindings_, [&](const auto& kv) { return gone.contains(kv.second); });

  for (auto& e : entries_)
    if (e.gid == 0 && e.support >= cfg_.handover_persistence) e.gid = next_gid_++;

  DigitalTwinFrame frame;
  frame.t = t;
  for (const auto& e : entries_) {
    if (e.gid == 0) continue;
    FusedTrack ft;
    ft.gid = e.gid;
    ft.state = e.estimate.mean;
    ft.cov = e.estimate.cov;
    ft.cls = e.cls;
    ft.mps = e.mps;
    ft.last_update = e.last_update;
    frame.objects.push_back(std::move(ft));
  }
  std::sort(frame.objects.begin(), frame.objects.end(),
            [](const FusedTrack& a, const FusedTrack& b) { return a.gid < b.gid; });
  return frame;
}

std::vector<double> twin_ticks(double rate, double duration) {
  std::vector<double> ticks;
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) / rate;
    if (t >= duration) break;
    ticks.push_back(t);
  }
  return ticks;
}

}  // namespace roadtwin
