#include "sdeadapt/brownian.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "sdeadapt/io.hpp"

namespace sdeadapt {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return mix64(mix64(seed + kGolden) ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

double NormalStream::uniform() {
  ++counter_;
  const std::uint64_t bits = mix64(seed_ + counter_ * kGolden);
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double NormalStream::next() { return normal_quantile(uniform()); }

double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("normal_quantile: u must lie in (0,1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

BrownianPath::BrownianPath(std::uint64_t seed, int dimension)
    : seed_(seed), dimension_(dimension), normals_(seed) {
  if (dimension <= 0) throw std::invalid_argument("BrownianPath: dimension must be positive");
  values_.assign(static_cast<std::size_t>(dimension), 0.0);
  cursor_ = index_.emplace(0.0, 0).first;
}

BrownianPath::BrownianPath(const BrownianPath& other)
    : seed_(other.seed_),
      dimension_(other.dimension_),
      normals_(other.normals_),
      index_(other.index_),
      values_(other.values_),
      cursor_(index_.begin()) {}

BrownianPath::BrownianPath(BrownianPath&& other) noexcept
    : seed_(other.seed_),
      dimension_(other.dimension_),
      normals_(other.normals_),
      index_(std::move(other.index_)),
      values_(std::move(other.values_)),
      cursor_(index_.begin()) {}

BrownianPath& BrownianPath::operator=(const BrownianPath& other) {
  if (this != &other) *this = BrownianPath(other);
  return *this;
}

BrownianPath& BrownianPath::operator=(BrownianPath&& other) noexcept {
  seed_ = other.seed_;
  dimension_ = other.dimension_;
  normals_ = other.normals_;
  index_ = std::move(other.index_);
  values_ = std::move(other.values_);
  cursor_ = index_.begin();
  return *this;
}

std::size_t BrownianPath::append_value(const double* values) {
  const std::size_t slot = values_.size() / dimension_;
  values_.insert(values_.end(), values, values + dimension_);
  return slot;
}

Vector BrownianPath::sample_at(double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw std::invalid_argument("BrownianPath::sample_at: time must be finite and >= 0");
  }
  using Iter = std::map<double, std::size_t>::iterator;
  Iter left;
  Iter right;
  // Sequential queries almost always land next to the previous one.
  if (cursor_->first == t) {
    return Eigen::Map<const Vector>(value_ptr(cursor_->second), dimension_);
  }
  if (cursor_->first < t && (std::next(cursor_) == index_.end() || std::next(cursor_)->first >= t)) {
    left = cursor_;
    right = std::next(cursor_);
  } else {
    right = index_.lower_bound(t);
    left = std::prev(right);  // W(0) is always stored and t > 0 here
  }
  if (right != index_.end() && right->first == t) {
    cursor_ = right;
    return Eigen::Map<const Vector>(value_ptr(right->second), dimension_);
  }

  std::vector<double> fresh(static_cast<std::size_t>(dimension_));
  const double a = left->first;
  const double* wa = value_ptr(left->second);
  if (right == index_.end()) {
    const double scale = std::sqrt(t - a);
    for (int j = 0; j < dimension_; ++j) fresh[j] = wa[j] + scale * normals_.next();
  } else {
    const double b = right->first;
    const double* wb = value_ptr(right->second);
    const double weight = (t - a) / (b - a);
    const double sd = std::sqrt((t - a) * (b - t) / (b - a));
    for (int j = 0; j < dimension_; ++j) {
      fresh[j] = wa[j] + weight * (wb[j] - wa[j]) + sd * normals_.next();
    }
  }
  const std::size_t slot = append_value(fresh.data());
  cursor_ = index_.emplace_hint(right, t, slot);
  return Eigen::Map<const Vector>(fresh.data(), dimension_);
}

Vector BrownianPath::increment(double t0, double t1) {
  if (!(t1 > t0)) throw std::invalid_argument("BrownianPath::increment: requires t0 < t1");
  Vector w0 = sample_at(t0);
  return sample_at(t1) - w0;
}

std::vector<double> BrownianPath::times() const {
  std::vector<double> out;
  out.reserve(index_.size());
  for (const auto& [t, slot] : index_) out.push_back(t);
  return out;
}

Vector BrownianPath::stored(double t) const {
  auto it = index_.find(t);
  if (it == index_.end()) throw std::out_of_range("BrownianPath::stored: time not sampled");
  return Eigen::Map<const Vector>(value_ptr(it->second), dimension_);
}

void BrownianPath::write_csv(std::ostream& out) const {
  CsvWriter csv(out);
  std::vector<std::string> header{"t"};
  for (int j = 1; j <= dimension_; ++j) header.push_back("W_" + std::to_string(j));
  csv.header(header);
  for (const auto& [t, slot] : index_) {
    csv.field(t);
    const double* w = value_ptr(slot);
    for (int j = 0; j < dimension_; ++j) csv.field(w[j]);
    csv.end_row();
  }
}

BrownianPath derive_path(std::uint64_t seed, std::uint64_t realisation_index, int dimension) {
  return BrownianPath(derive_seed(seed, realisation_index), dimension);
}

}  // namespace sdeadapt
