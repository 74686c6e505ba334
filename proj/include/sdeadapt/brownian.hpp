#pragma once

#include "sdeadapt/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string_view>
#include <vector>

namespace sdeadapt {

/// Name of the uniform generator behind every path, recorded in run metadata.
inline constexpr std::string_view kGeneratorName = "splitmix64-counter/inverse-normal-cdf";

/// SplitMix64 finalizer. Also used to derive child seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Deterministic child seed for stream `index` of a parent seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Counter-based source of standard normal variates. Draw k of a stream is a
/// pure function of (seed, k), so values never depend on how many draws other
/// streams consumed.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) noexcept : seed_(seed) {}

  double next();
  double uniform();  // open interval (0, 1)
  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Standard normal quantile, the inverse-CDF transform used for every draw.
double normal_quantile(double u);

/// One m-dimensional Wiener path, sampled lazily.
///
/// Queries past the last stored time extend the path with an independent
/// Gaussian increment; queries between two stored times draw from the
/// Brownian bridge conditioned on both neighbours. Stored values are never
/// changed. Given the seed and the sequence of query times the sample set is
/// bit-reproducible; interleaving the same queries differently is allowed to
/// produce different (but equally distributed) values.
class BrownianPath {
 public:
  BrownianPath(std::uint64_t seed, int dimension);
  BrownianPath(const BrownianPath& other);
  BrownianPath(BrownianPath&& other) noexcept;
  BrownianPath& operator=(const BrownianPath& other);
  BrownianPath& operator=(BrownianPath&& other) noexcept;
  ~BrownianPath() = default;

  std::uint64_t seed() const noexcept { return seed_; }
  int dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return index_.size(); }

  /// W(t). Throws std::invalid_argument for negative or non-finite t.
  Vector sample_at(double t);
  /// W(t1) - W(t0), querying t0 first. Requires 0 <= t0 < t1.
  Vector increment(double t0, double t1);

  /// Stored times in increasing order.
  std::vector<double> times() const;
  /// Stored value at a time that has already been sampled.
  Vector stored(double t) const;
  bool contains(double t) const { return index_.count(t) != 0; }

  /// CSV dump with columns t, W_1..W_m.
  void write_csv(std::ostream& out) const;

 private:
  std::size_t append_value(const double* values);
  const double* value_ptr(std::size_t slot) const { return values_.data() + slot * dimension_; }

  std::uint64_t seed_;
  int dimension_;
  NormalStream normals_;
  // time -> slot in values_; values_ is append-only.
  std::map<double, std::size_t> index_;
  std::vector<double> values_;
  std::map<double, std::size_t>::iterator cursor_;
};

/// Path for realisation `realisation_index` of an experiment seeded with `seed`.
BrownianPath derive_path(std::uint64_t seed, std::uint64_t realisation_index, int dimension = 1);

}  // namespace sdeadapt
