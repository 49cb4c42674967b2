#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace roadtwin {

/// Derives an independent sub-stream seed from a master seed and a stable
/// string id (sensor id, "scenario", "clutter", ...). Adding a new stream
/// never perturbs existing ones.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream_id);

/// 64-bit FNV-1a, used for seed splitting and config hashes.
std::uint64_t fnv1a64(std::string_view bytes);

/// Random source with platform-independent samplers.
///
/// std::mt19937_64 is bit-exact across standard libraries, but the std
/// distributions are not, so the samplers here are written out explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }
  std::uint64_t poisson(double lambda);
  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace roadtwin
