#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "roadtwin/tracker.hpp"

namespace roadtwin {

template <int N>
struct Gaussian {
  Eigen::Matrix<double, N, 1> mean;
  Eigen::Matrix<double, N, N> cov;
};

using Gaussian4 = Gaussian<4>;

namespace detail {

template <int N>
Eigen::Matrix<double, N, N> spd_inverse(const Eigen::Matrix<double, N, N>& P) {
  Eigen::LLT<Eigen::Matrix<double, N, N>> llt(P);
  if (llt.info() != Eigen::Success)
    throw NonPositiveDefinite("covariance is not positive definite");
  return llt.solve(Eigen::Matrix<double, N, N>::Identity());
}

}  // namespace detail

/// Information matrix of the covariance-intersection fusion of a and b.
template <int N>
Eigen::Matrix<double, N, N> gci_information(const Gaussian<N>& a,
                                            const Gaussian<N>& b, double omega) {
  return omega * detail::spd_inverse<N>(a.cov) +
         (1.0 - omega) * detail::spd_inverse<N>(b.cov);
}

/// Generalized covariance intersection of two Gaussian densities, which
/// for Gaussians is covariance intersection with weight omega on `a`.
/// Throws NonPositiveDefinite on degenerate input.
template <int N>
Gaussian<N> gci_fuse(const Gaussian<N>& a, const Gaussian<N>& b, double omega) {
  using Mat = Eigen::Matrix<double, N, N>;
  const Mat Ia = detail::spd_inverse<N>(a.cov);
  const Mat Ib = detail::spd_inverse<N>(b.cov);
  if (omega >= 1.0) return a;
  if (omega <= 0.0) return b;
  const Mat info = omega * Ia + (1.0 - omega) * Ib;
  Eigen::LLT<Mat> llt(info);
  if (llt.info() != Eigen::Success)
    throw NonPositiveDefinite("fused information matrix is not positive definite");
  Gaussian<N> out;
  out.cov = llt.solve(Mat::Identity());
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.mean = llt.solve(omega * Ia * a.mean + (1.0 - omega) * Ib * b.mean);
  return out;
}

/// Weight in [0, 1] minimizing det of the fused covariance; 0.5 when the
/// determinant does not depend on the weight.
template <int N>
double optimize_omega(const Gaussian<N>& a, const Gaussian<N>& b,
                      double tol = 1e-7) {
  using Mat = Eigen::Matrix<double, N, N>;
  const Mat Ia = detail::spd_inverse<N>(a.cov);
  const Mat Ib = detail::spd_inverse<N>(b.cov);
  // det(P_f) = 1 / det(info); log det(info) is concave in omega
  auto cost = [&](double w) {
    const Mat info = w * Ia + (1.0 - w) * Ib;
    Eigen::LLT<Mat> llt(info);
    const Mat L = llt.matrixL();
    double log_det = 0.0;
    for (int i = 0; i < N; ++i) log_det += 2.0 * std::log(L(i, i));
    return -log_det;
  };
  const double f0 = cost(0.0);
  const double f1 = cost(1.0);
  const double fm = cost(0.5);
  const double scale = std::max({std::abs(f0), std::abs(f1), std::abs(fm), 1.0});
  if (std::abs(f0 - fm) <= 1e-12 * scale && std::abs(f1 - fm) <= 1e-12 * scale)
    return 0.5;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0;
  double hi = 1.0;
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double c1 = cost(x1);
  double c2 = cost(x2);
  while (hi - lo > tol) {
    if (c1 <= c2) {
      hi = x2;
      x2 = x1;
      c2 = c1;
      x1 = hi - phi * (hi - lo);
      c1 = cost(x1);
    } else {
      lo = x1;
      x1 = x2;
      c1 = c2;
      x2 = lo + phi * (hi - lo);
      c2 = cost(x2);
    }
  }
  double best = 0.5 * (lo + hi);
  double fbest = cost(best);
  if (f0 < fbest) {
    best = 0.0;
    fbest = f0;
  }
  if (f1 < fbest) best = 1.0;
  return best;
}

enum class OmegaPolicy { fixed_half, min_determinant };

std::string_view to_string(OmegaPolicy policy);
OmegaPolicy omega_policy_from_string(std::string_view name);

struct FusionConfig {
  /// Position-block Mahalanobis² gate (chi-square 99 %, 2 DoF).
  double gate = 9.21;
  OmegaPolicy omega = OmegaPolicy::min_determinant;
  /// Consecutive supported ticks before a new object gets a global id.
  int handover_persistence = 1;
  /// Ticks without support after which a fused object expires. Long enough
  /// to coast through the gap below a pole while the sensors facing the
  /// other way confirm their first track.
  int miss_limit = 6;
  double accel_sigma = 2.0;
  /// Spread added to the position covariance when associating tracks.
  /// Sensors anchor a vehicle at different points of its body, so two
  /// tracks of one vehicle may sit up to a vehicle length apart. The
  /// longitudinal sigma is extent_factor times the mean nominal length of
  /// the two classes; unknown counts as a car. Laterally, a camera close to
  /// the pole sees the near side of the body rather than its centre.
  std::array<double, kVehicleClassCount> class_length{4.6, 10.0, 12.0, 2.2, 4.6};
  double extent_factor = 0.5;
  double extent_sigma_y = 0.5;
  /// Velocity-block Mahalanobis² gate on association; keeps opposing
  /// traffic apart. velocity_sigma is added per axis because young tracks
  /// misjudge speed by more than their filters admit.
  double velocity_gate = 9.21;
  double velocity_sigma = 8.0;

  Eigen::Matrix2d association_spread(VehicleClass a, VehicleClass b) const;
  void validate() const;
};

Gaussian4 fuse_pair(const Gaussian4& a, const Gaussian4& b, OmegaPolicy policy);

/// Constant-velocity extrapolation of mean and covariance by dt seconds.
Gaussian4 extrapolate(const Gaussian4& g, double dt, double accel_sigma = 0.0);

/// Squared Mahalanobis distance between the position blocks of a and b
/// under the summed covariance plus `spread`.
double position_distance2(const Gaussian4& a, const Gaussian4& b,
                          const Eigen::Matrix2d& spread = Eigen::Matrix2d::Zero());

struct TrackAssociation {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> unmatched_a;
  std::vector<std::size_t> unmatched_b;
};

/// Optimal one-to-one matching under summed position Mahalanobis distance,
/// each term capped at sqrt(gate); pairs whose squared distance exceeds the
/// gate are rejected after assignment.
TrackAssociation associate_tracks(std::span<const Gaussian4> a,
                                  std::span<const Gaussian4> b, double gate,
                                  const Eigen::Matrix2d& spread = Eigen::Matrix2d::Zero());

/// Squared Mahalanobis distance between the velocity blocks of a and b
/// under the summed covariance plus sigma² per axis.
double velocity_distance2(const Gaussian4& a, const Gaussian4& b, double sigma = 0.0);

/// As above with a spread per pair (i in a, j in b). Pairs whose velocity
/// distance exceeds velocity_gate cost as much as an out-of-gate pair and
/// are rejected.
TrackAssociation associate_tracks(
    std::span<const Gaussian4> a, std::span<const Gaussian4> b, double gate,
    const std::function<Eigen::Matrix2d(std::size_t, std::size_t)>& spread,
    double velocity_gate = std::numeric_limits<double>::infinity(),
    double velocity_sigma = 0.0);

/// One sensor track as exchanged between the tracker and fusion stages.
struct LocalTrack {
  std::string sensor_id;
  std::uint64_t label = 0;
  double t = 0.0;
  StateVector state = StateVector::Zero();
  StateMatrix cov = StateMatrix::Identity();
  VehicleClass cls = VehicleClass::unknown;
  TrackStatus status = TrackStatus::confirmed;

  Gaussian4 gaussian() const { return {state, cov}; }
};

struct Tracklet {
  std::string mp_id;
  /// Stable within its measurement point while the vehicle stays tracked.
  std::uint64_t id = 0;
  double t = 0.0;
  StateVector state = StateVector::Zero();
  StateMatrix cov = StateMatrix::Identity();
  VehicleClass cls = VehicleClass::unknown;
  TrackStatus status = TrackStatus::confirmed;
  std::vector<std::string> sensors;

  Gaussian4 gaussian() const { return {state, cov}; }
};

struct FusedTrack {
  std::uint64_t gid = 0;
  StateVector state = StateVector::Zero();
  StateMatrix cov = StateMatrix::Identity();
  VehicleClass cls = VehicleClass::unknown;
  std::vector<std::string> mps;
  double last_update = 0.0;
};

struct DigitalTwinFrame {
  double t = 0.0;
  std::vector<FusedTrack> objects;
};

/// Majority over known classes; ties go to the lower enumerator.
VehicleClass majority_vote(std::span<const VehicleClass> classes);

struct TrackGroup {
  Gaussian4 fused;
  /// Indices into the input track list, in fold order.
  std::vector<std::size_t> members;
};

/// Groups confirmed tracks of one measurement point: sensors are folded in
/// ascending id order, each associated against the groups built so far.
/// Tracks are first extrapolated to `t`.
std::vector<TrackGroup> group_tracks(std::span<const LocalTrack> tracks, double t,
                                     const FusionConfig& cfg);

/// Stateless local fusion; tracklet ids enumerate the groups.
std::vector<Tracklet> fuse_measurement_point(const std::string& mp_id,
                                             std::span<const LocalTrack> tracks,
                                             double t, const FusionConfig& cfg);

/// Local fusion with tracklet ids that persist across ticks.
class MeasurementPointFuser {
 public:
  MeasurementPointFuser(std::string mp_id, FusionConfig cfg);

  std::vector<Tracklet> fuse(std::span<const LocalTrack> tracks, double t);

  const std::string& mp_id() const { return mp_id_; }

 private:
  std::string mp_id_;
  FusionConfig cfg_;
  std::map<std::pair<std::string, std::uint64_t>, std::uint64_t> bindings_;
  std::uint64_t next_id_ = 1;
};

/// Second-level fusion of all measurement points into the digital twin.
class BackendFuser {
 public:
  explicit BackendFuser(FusionConfig cfg);

  /// Tracklets of every measurement point for tick `t`.
  DigitalTwinFrame fuse(std::span<const Tracklet> tracklets, double t);

  /// Objects currently awaiting a global id.
  std::size_t pending() const;

 private:
  struct Entry {
    std::uint64_t uid = 0;
    std::uint64_t gid = 0;  // 0 until promoted
    Gaussian4 estimate;
    double last_update = 0.0;
    int support = 0;
    int misses = 0;
    std::array<int, kVehicleClassCount> votes{};
    VehicleClass cls = VehicleClass::unknown;
    std::vector<std::string> mps;
  };

  FusionConfig cfg_;
  std::vector<Entry> entries_;
  std::map<std::pair<std::string, std::uint64_t>, std::uint64_t> bindings_;
  std::uint64_t next_uid_ = 1;
  std::uint64_t next_gid_ = 1;
  double last_t_ = 0.0;
  bool started_ = false;
};

/// Twin tick instants over [0, duration).
std::vector<double> twin_ticks(double rate, double duration);

}  // namespace roadtwin
