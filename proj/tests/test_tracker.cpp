#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "oracles.hpp"
#include "roadtwin/tracker.hpp"

using namespace roadtwin;

namespace {

MeasurementFrame positions(double t, std::vector<Eigen::Vector2d> zs) {
  MeasurementFrame f;
  f.sensor_id = "s";
  f.t = t;
  f.dim = 2;
  for (const auto& z : zs) {
    f.values.emplace_back(z.x(), z.y(), 0.0, 0.0);
    f.classes.push_back(VehicleClass::car);
  }
  return f;
}

GaussianComponent component(double w, const StateVector& m, const StateMatrix& P,
                            std::uint64_t label = 1) {
  GaussianComponent c;
  c.weight = w;
  c.mean = m;
  c.cov = P;
  c.label = label;
  return c;
}

double gaussian_pdf(const Eigen::VectorXd& r, const Eigen::MatrixXd& S) {
  const double k = static_cast<double>(r.size());
  return std::exp(-0.5 * r.dot(S.inverse() * r)) /
         std::sqrt(std::pow(2.0 * std::numbers::pi, k) * S.determinant());
}

}  // namespace

TEST_CASE("tracker config validation") {
  TrackerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.p_detect = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrackerConfig{};
  cfg.merge_threshold = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("constant velocity prediction") {
  TrackerConfig cfg;
  cfg.p_survival = 0.99;
  Intensity in;
  in.components.push_back(component(0.8, StateVector(0, 0, 10, 0), StateMatrix::Identity()));
  const Intensity out = predict(in, 0.185, cfg);
  REQUIRE(out.components.size() == 1);
  CHECK(out.components[0].mean[0] == doctest::Approx(1.85).epsilon(1e-12));
  CHECK(out.components[0].mean[1] == 0.0);
  CHECK(out.components[0].mean[2] == 10.0);
  CHECK(out.components[0].weight == doctest::Approx(0.99 * 0.8).epsilon(1e-15));
  CHECK(out.t == doctest::Approx(0.185));
  CHECK_THROWS_AS(predict(in, 0.0, cfg), std::invalid_argument);
}

TEST_CASE("predicted covariance matches the reference filter") {
  TrackerConfig cfg;
  cfg.accel_sigma = 2.0;
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 100; ++trial) {
    const StateMatrix P = oracle::random_spd<4>(gen);
    const double dt = 0.05 + 0.01 * trial;
    Intensity in;
    in.components.push_back(component(1.0, StateVector(1, 2, 3, 4), P));
    const Intensity out = predict(in, dt, cfg);
    oracle::Kalman k{StateVector(1, 2, 3, 4), P};
    k.predict(oracle::cv_F(dt), oracle::cv_Q(dt, 2.0));
    CHECK(oracle::max_relative_error(out.components[0].cov, k.P) < 1e-12);
    CHECK(oracle::max_relative_error(out.components[0].mean, k.x) < 1e-12);
  }
  CHECK(oracle::max_relative_error(cv_process_noise(0.185, 2.0), oracle::cv_Q(0.185, 2.0)) < 1e-15);
}

TEST_CASE("empty frame scales weights by the miss probability") {
  TrackerConfig cfg;
  cfg.p_detect = 0.97;
  Intensity in;
  in.components.push_back(component(0.9, StateVector(0, 0, 1, 0), StateMatrix::Identity(), 1));
  in.components.push_back(component(0.4, StateVector(50, 0, 1, 0), StateMatrix::Identity(), 2));
  const Intensity out = update(in, positions(1.0, {}), ObservationModel::position(1, 1), cfg);
  REQUIRE(out.components.size() == 2);
  CHECK(out.components[0].weight == doctest::Approx(0.03 * 0.9).epsilon(1e-12));
  CHECK(out.components[1].weight == doctest::Approx(0.03 * 0.4).epsilon(1e-12));
  CHECK(out.components[0].mean == in.components[0].mean);
}

TEST_CASE("measurement update matches the reference filter") {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int dim : {2, 4}) {
    for (int trial = 0; trial < 200; ++trial) {
      TrackerConfig cfg;
      cfg.clutter_density = 1e-4;
      cfg.update_gate = 1e9;
      const StateMatrix P = oracle::random_spd<4>(gen);
      const StateVector m(n(gen), n(gen), n(gen), n(gen));
      const ObservationModel obs = dim == 2 ? ObservationModel::position(0.8, 0.4)
                                            : ObservationModel::position_velocity(0.5, 0.3);
      MeasurementFrame f;
      f.t = 1.0;
      f.dim = dim;
      const Eigen::Vector4d z = m + Eigen::Vector4d(n(gen), n(gen), n(gen), n(gen));
      f.values.push_back(z);
      Intensity in;
      in.components.push_back(component(0.7, m, P));
      const Intensity out = update(in, f, obs, cfg);
      REQUIRE(out.components.size() == 2);
      const auto& u = out.components[1];
      CHECK(u.measurement == 0);

      const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(dim, 4);
      const Eigen::MatrixXd R = obs.noise.topLeftCorner(dim, dim);
      oracle::Kalman k{m, P};
      k.update(z.head(dim), H, R);
      CHECK(oracle::max_relative_error(u.mean, k.x) < 1e-9);
      CHECK(oracle::max_relative_error(u.cov, k.P) < 1e-9);

      const Eigen::MatrixXd S = H * P * H.transpose() + R;
      const double q = 0.97 * 0.7 * gaussian_pdf(z.head(dim) - m.head(dim), S);
      CHECK(u.weight == doctest::Approx(q / (1e-4 + q)).epsilon(1e-9));
    }
  }
}

TEST_CASE("distant clutter barely moves the intensity") {
  TrackerConfig cfg;
  cfg.clutter_density = 1e-5;
  Intensity in;
  in.components.push_back(component(1.0, StateVector(0, 0, 25, 0), StateMatrix::Identity()));
  const Intensity out = update(in, positions(0.0, {{500.0, 40.0}}), ObservationModel::position(1, 1), cfg);
  double from_clutter = 0.0;
  for (const auto& c : out.components)
    if (c.measurement == 0) from_clutter += c.weight;
  CHECK(from_clutter < 1e-6);
  CHECK(out.total_weight() == doctest::Approx(0.03).epsilon(1e-6));
}

TEST_CASE("posterior mass of one detected target") {
  TrackerConfig cfg;
  cfg.clutter_density = 0.0;
  Intensity in;
  in.components.push_back(component(1.0, StateVector(0, 0, 25, 0), StateMatrix::Identity()));
  const Intensity out = update(in, positions(0.0, {{0.3, -0.2}}), ObservationModel::position(1, 1), cfg);
  // without clutter the detected term carries weight 1
  CHECK(out.total_weight() == doctest::Approx(1.03).epsilon(1e-12));
}

TEST_CASE("births pair consecutive detections") {
  TrackerConfig cfg;
  LabelSource labels;
  const ObservationModel obs = ObservationModel::position(1.0, 0.5);
  const MeasurementFrame first = positions(0.0, {{100.0, 3.5}});
  BirthResult r = birth_step({}, first, {false}, obs, cfg, labels);
  CHECK(r.components.empty());
  REQUIRE(r.candidates.size() == 1);

  const MeasurementFrame second = positions(0.185, {{100.0 - 4.63, 3.5}});
  r = birth_step(r.candidates, second, {false}, obs, cfg, labels);
  REQUIRE(r.components.size() == 1);
  CHECK(r.candidates.empty());
  const auto& b = r.components[0];
  CHECK(b.weight == cfg.birth_weight);
  CHECK(b.mean[0] == 100.0 - 4.63);
  CHECK(b.mean[2] == doctest::Approx(-4.63 / 0.185).epsilon(1e-12));
  CHECK(b.mean[2] == doctest::Approx(-25.0).epsilon(0.002));
  CHECK(b.mean[3] == 0.0);
  CHECK(b.cov(0, 0) == 1.0);
  CHECK(b.cov(1, 1) == 0.25);
  CHECK(b.cov(2, 2) == cfg.birth_velocity_variance);
}

TEST_CASE("candidates too far apart never pair") {
  TrackerConfig cfg;
  cfg.birth_speed_max = 50.0;
  LabelSource labels;
  const ObservationModel obs = ObservationModel::position(1, 1);
  BirthResult r = birth_step({}, positions(0.0, {{0, 0}}), {false}, obs, cfg, labels);
  // 10 m in 0.185 s is 54 m/s
  r = birth_step(r.candidates, positions(0.185, {{10, 0}}), {false}, obs, cfg, labels);
  CHECK(r.components.empty());
  // the unmatched candidate expires; only the new detection remains
  REQUIRE(r.candidates.size() == 1);
  CHECK(r.candidates[0].t == 0.185);
}

TEST_CASE("explained measurements spawn nothing") {
  TrackerConfig cfg;
  LabelSource labels;
  const ObservationModel obs = ObservationModel::position(1, 1);
  Intensity predicted;
  predicted.components.push_back(component(0.9, StateVector(10, 0, 0, 0), StateMatrix::Identity()));
  const MeasurementFrame f = positions(1.0, {{10.5, 0.0}, {80.0, 0.0}});
  const auto explained = explained_measurements(predicted, f, obs, cfg);
  REQUIRE(explained.size() == 2);
  CHECK(explained[0]);
  CHECK_FALSE(explained[1]);
  const BirthResult r = birth_step({}, f, explained, obs, cfg, labels);
  REQUIRE(r.candidates.size() == 1);
  CHECK(r.candidates[0].z[0] == 80.0);
}

TEST_CASE("radar births take the measured velocity") {
  TrackerConfig cfg;
  LabelSource labels;
  const ObservationModel obs = ObservationModel::position_velocity(0.5, 0.3);
  MeasurementFrame a;
  a.t = 0.0;
  a.dim = 4;
  a.values.emplace_back(100.0, 3.5, -25.0, 0.0);
  MeasurementFrame b = a;
  b.t = 0.1;
  b.values[0] = Eigen::Vector4d(97.5, 3.5, -24.0, 0.1);
  BirthResult r = birth_step({}, a, {false}, obs, cfg, labels);
  r = birth_step(r.candidates, b, {false}, obs, cfg, labels);
  REQUIRE(r.components.size() == 1);
  CHECK(r.components[0].mean == Eigen::Vector4d(97.5, 3.5, -24.0, 0.1));
  CHECK(r.components[0].cov(2, 2) == doctest::Approx(0.09));
}

TEST_CASE("prune and merge") {
  TrackerConfig cfg;
  cfg.prune_threshold = 1e-5;
  cfg.merge_threshold = 4.0;

  SUBCASE("identical components merge") {
    Intensity in;
    in.components.push_back(component(0.3, StateVector(1, 2, 3, 4), StateMatrix::Identity(), 1));
    in.components.push_back(component(0.3, StateVector(1, 2, 3, 4), StateMatrix::Identity(), 2));
    const Intensity out = prune_and_merge(in, cfg);
    REQUIRE(out.components.size() == 1);
    CHECK(out.components[0].weight == doctest::Approx(0.6));
    CHECK(out.components[0].mean == StateVector(1, 2, 3, 4));
    CHECK((out.components[0].cov - StateMatrix::Identity()).norm() < 1e-15);
  }

  SUBCASE("light components are pruned") {
    Intensity in;
    in.components.push_back(component(1e-9, StateVector::Zero(), StateMatrix::Identity()));
    CHECK(prune_and_merge(in, cfg).components.empty());
  }

  SUBCASE("moment-matched merge") {
    Intensity in;
    in.components.push_back(component(0.4, StateVector(0, 0, 0, 0), StateMatrix::Identity(), 1));
    in.components.push_back(component(0.6, StateVector(1, 0, 0, 0), StateMatrix::Identity(), 2));
    const Intensity out = prune_and_merge(in, cfg);
    REQUIRE(out.components.size() == 1);
    const auto& c = out.components[0];
    CHECK(c.weight == doctest::Approx(1.0));
    CHECK(c.mean[0] == doctest::Approx(0.6));
    CHECK(c.cov(0, 0) == doctest::Approx(1.24));
    CHECK(c.cov(1, 1) == doctest::Approx(1.0));
    // the heavier component names the merged one
    CHECK(c.label == 2);
  }

  SUBCASE("distant components stay apart") {
    Intensity in;
    in.components.push_back(component(0.5, StateVector(0, 0, 0, 0), StateMatrix::Identity(), 1));
    in.components.push_back(component(0.5, StateVector(3, 0, 0, 0), StateMatrix::Identity(), 2));
    CHECK(prune_and_merge(in, cfg).components.size() == 2);
  }

  SUBCASE("component cap keeps the heaviest") {
    cfg.max_components = 3;
    Intensity in;
    for (int i = 0; i < 6; ++i)
      in.components.push_back(component(0.1 * (i + 1), StateVector(10.0 * i, 0, 0, 0),
                                        StateMatrix::Identity(), static_cast<std::uint64_t>(i + 1)));
    const Intensity out = prune_and_merge(in, cfg);
    REQUIRE(out.components.size() == 3);
    CHECK(out.components[0].weight == doctest::Approx(0.6));
    CHECK(out.components[2].weight == doctest::Approx(0.4));
  }

  SUBCASE("merging conserves weight and the mean") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> n(0.0, 0.3);
    std::uniform_real_distribution<double> w(0.01, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      Intensity in;
      double total = 0.0;
      StateVector first = StateVector::Zero();
      for (int i = 0; i < 5; ++i) {
        const double wi = w(gen);
        const StateVector m(n(gen), n(gen), n(gen), n(gen));
        in.components.push_back(component(wi, m, StateMatrix::Identity(), static_cast<std::uint64_t>(i)));
        total += wi;
        first += wi * m;
      }
      const Intensity out = prune_and_merge(in, cfg);
      CHECK(out.total_weight() == doctest::Approx(total).epsilon(1e-12));
      StateVector moment = StateVector::Zero();
      for (const auto& c : out.components) moment += c.weight * c.mean;
      CHECK((moment - first).norm() < 1e-12);
    }
  }
}

TEST_CASE("estimate extraction") {
  Intensity in;
  in.components.push_back(component(0.9, StateVector(0, 0, 0, 0), StateMatrix::Identity(), 1));
  in.components.push_back(component(0.6, StateVector(20, 0, 0, 0), StateMatrix::Identity(), 2));
  in.components.push_back(component(0.02, StateVector(40, 0, 0, 0), StateMatrix::Identity(), 3));
  const auto est = extract_estimates(in, 0.5);
  REQUIRE(est.size() == 2);
  CHECK(est[0].label == 1);
  CHECK(est[1].label == 2);
  CHECK(in.total_weight() == doctest::Approx(1.52));

  // one estimate per label, the heaviest
  in.components.push_back(component(0.7, StateVector(1, 0, 0, 0), StateMatrix::Identity(), 1));
  const auto again = extract_estimates(in, 0.5);
  REQUIRE(again.size() == 2);
  CHECK(again[0].weight == 0.9);
}

TEST_CASE("track confirmation and termination") {
  TrackerConfig cfg;
  cfg.confirm_length = 2;
  cfg.miss_limit = 3;
  TrackManager m;
  Estimate e;
  e.label = 5;
  e.mean = StateVector(0, 0, 10, 0);
  auto live = m.update({e}, cfg, 0.0, {});
  REQUIRE(live.size() == 1);
  CHECK(live[0].status == TrackStatus::tentative);
  live = m.update({e}, cfg, 0.1, {});
  CHECK(live[0].status == TrackStatus::confirmed);

  // coasting tracks are extrapolated
  live = m.update({}, cfg, 0.3, {});
  REQUIRE(live.size() == 1);
  CHECK(live[0].state[0] == doctest::Approx(2.0));
  CHECK(live[0].misses == 1);
  m.update({}, cfg, 0.4, {});
  live = m.update({}, cfg, 0.5, {});
  CHECK(live.empty());
  CHECK(m.is_dead(5));
  REQUIRE(m.newly_dead().size() == 1);
  // a dead label never returns
  CHECK(m.update({e}, cfg, 0.6, {}).empty());
}

TEST_CASE("class votes follow the measurements") {
  TrackerConfig cfg;
  TrackManager m;
  Estimate e;
  e.label = 1;
  e.measurement = 0;
  m.update({e}, cfg, 0.0, {VehicleClass::truck});
  m.update({e}, cfg, 0.1, {VehicleClass::car});
  const auto live = m.update({e}, cfg, 0.2, {VehicleClass::truck});
  CHECK(live[0].majority_class() == VehicleClass::truck);
  Track blank;
  CHECK(blank.majority_class() == VehicleClass::unknown);
  CHECK(track_status_from_string(to_string(TrackStatus::confirmed)) == TrackStatus::confirmed);
}

TEST_CASE("single target is confirmed on its third frame") {
  TrackerConfig cfg;
  SensorTracker tracker(cfg, ObservationModel::position(1.0, 1.0));
  const double dt = 0.185;
  for (int k = 0; k < 10; ++k) {
    const double t = k * dt;
    const auto confirmed = tracker.step(positions(t, {{100.0 - 25.0 * t, 1.75}}));
    if (k < 2) {
      CHECK(confirmed.empty());
    } else {
      REQUIRE(confirmed.size() == 1);
      CHECK(std::abs(confirmed[0].state[0] - (100.0 - 25.0 * t)) < 0.5);
    }
  }
  CHECK_THROWS_AS(tracker.step(positions(0.5, {})), std::invalid_argument);
}

TEST_CASE("covariances stay positive definite and labels unique over a long run") {
  TrackerConfig cfg;
  cfg.clutter_density = 1e-4;
  SensorTracker tracker(cfg, ObservationModel::position(1.0, 0.5));
  std::mt19937_64 gen(4);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> ux(0.0, 300.0);
  std::uniform_real_distribution<double> uy(-10.0, 10.0);
  std::bernoulli_distribution detect(0.9);
  std::poisson_distribution<int> clutter(1.0);
  const double dt = 0.185;
  double x = 0.0;
  double vx = 25.0;
  bool all_spd = true;
  bool unique = true;
  for (int k = 0; k < 10000; ++k) {
    const double t = k * dt;
    x += vx * dt;
    if (x > 300.0 || x < 0.0) vx = -vx;
    std::vector<Eigen::Vector2d> zs;
    if (detect(gen)) zs.emplace_back(x + noise(gen), 1.75 + 0.5 * noise(gen));
    for (int c = clutter(gen); c > 0; --c) zs.emplace_back(ux(gen), uy(gen));
    const auto confirmed = tracker.step(positions(t, zs));
    for (const auto& c : tracker.intensity().components) {
      Eigen::SelfAdjointEigenSolver<StateMatrix> es(c.cov);
      all_spd = all_spd && es.eigenvalues().minCoeff() > 0.0;
    }
    std::set<std::uint64_t> labels;
    for (const auto& tr : confirmed) unique = unique && labels.insert(tr.label).second;
  }
  CHECK(all_spd);
  CHECK(unique);
}
