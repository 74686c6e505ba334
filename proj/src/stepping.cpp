#include "sdeadapt/stepping.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "sdeadapt/io.hpp"

namespace sdeadapt {

namespace {

struct NamedKind {
  const char* name;
  StrategyKind kind;
};

constexpr NamedKind kKinds[] = {
    {"at", StrategyKind::AT},           {"ald", StrategyKind::ALD},
    {"basin", StrategyKind::Basin},     {"adm-i", StrategyKind::AdmI},
    {"adm-ii", StrategyKind::AdmII},    {"adm-iii", StrategyKind::AdmIII},
    {"adm-iv", StrategyKind::AdmIV},    {"fg", StrategyKind::FG},
    {"fixed-em", StrategyKind::FixedEM}, {"fixed-tamed", StrategyKind::FixedTamed},
};

// Running sum with Neumaier compensation so that N fixed steps of T/N land
// on T without accumulating O(N) rounding.
class CompensatedClock {
 public:
  void add(double x) {
    const double s = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - s) + x;
    } else {
      carry_ += (x - s) + sum_;
    }
    sum_ = s;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

void fail(const std::string& what) { throw std::invalid_argument("strategy: " + what); }

StepResult step_impl(const Vector& y, double t, const SdeProblem& problem, const StrategyConfig& cfg,
                     BrownianPath& path, double horizon, std::size_t index, CompensatedClock* clock) {
  if (!(t < horizon)) throw std::invalid_argument("step: t must be below the horizon");
  const Vector fy = problem.drift(y);
  const double proposal = propose_step(y, fy, problem, cfg);
  const double h_min = cfg.h_min();

  StepResult out;
  const double remaining = horizon - t;
  if (proposal >= remaining - 1e-12 * horizon) {
    out.h = remaining;
    out.t = horizon;
    out.truncated = remaining < proposal;
  } else {
    out.h = proposal;
    if (clock != nullptr) {
      CompensatedClock next = *clock;
      next.add(proposal);
      out.t = next.value();
    } else {
      out.t = t + proposal;
    }
  }

  switch (cfg.kind) {
    case StrategyKind::FixedEM:
      out.backstopped = false;
      break;
    case StrategyKind::FixedTamed:
      out.backstopped = true;
      break;
    default:
      out.backstopped = proposal <= h_min || out.h <= h_min;
  }

  const Vector dw = path.increment(t, out.t);
  out.y = y + drift_increment(fy, out.h, out.backstopped ? std::optional<double>(h_min) : std::nullopt) +
          problem.noise(y, dw);
  if (!out.y.allFinite()) throw DivergenceError(index, out.t);
  return out;
}

}  // namespace

std::string to_string(StrategyKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : kKinds) out.emplace_back(k.name);
    return out;
  }();
  return names;
}

StrategyKind parse_strategy(const std::string& name) {
  for (const auto& k : kKinds) {
    if (name == k.name) return k.kind;
  }
  std::string valid;
  for (const auto& n : strategy_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown strategy '" + name + "' (valid: " + valid + ")");
}

bool is_fixed(StrategyKind kind) { return kind == StrategyKind::FixedEM || kind == StrategyKind::FixedTamed; }

double max_admissible_epsilon(double h_max) { return h_max * h_max / (1.0 + h_max); }

double delta_from_epsilon(double epsilon) { return 0.5 * (epsilon + std::sqrt(epsilon * epsilon + 4.0 * epsilon)); }

double StrategyConfig::resolved_epsilon() const { return epsilon.value_or(0.9 * max_admissible_epsilon(h_max)); }

double StrategyConfig::resolved_delta() const {
  if (kind == StrategyKind::AT) return delta_from_epsilon(resolved_epsilon());
  return delta.value_or(h_max);
}

void StrategyConfig::validate() const {
  if (!(h_max > 0.0) || !std::isfinite(h_max)) fail("h_max must be positive and finite");
  if (is_fixed(kind)) return;
  if (!(rho >= 1.0) || !std::isfinite(rho)) fail("rho must be finite and >= 1");
  switch (kind) {
    case StrategyKind::AT: {
      const double eps = resolved_epsilon();
      if (!(eps > 0.0)) fail("epsilon must be positive");
      if (!(eps < max_admissible_epsilon(h_max))) {
        fail("epsilon must be below h_max^2/(1+h_max) = " + format_double(max_admissible_epsilon(h_max)));
      }
      break;
    }
    case StrategyKind::Basin:
      if (!(beta_exp > 1.0)) fail("beta_exp must exceed 1");
      break;
    case StrategyKind::AdmII:
    case StrategyKind::AdmIV:
      if (!(c_growth > 0.0)) fail("c_growth must be positive");
      break;
    default:
      break;
  }
  if (kind != StrategyKind::AT) {
    const double d = resolved_delta();
    if (!(d > 0.0 && d <= h_max)) fail("delta must lie in (0, h_max]");
  }
}

double propose_step(const Vector& y, const SdeProblem& problem, const StrategyConfig& cfg) {
  return propose_step(y, problem.drift(y), problem, cfg);
}

double propose_step(const Vector& y, const Vector& fy, const SdeProblem& problem, const StrategyConfig& cfg) {
  const double h_max = cfg.h_max;
  if (is_fixed(cfg.kind)) return h_max;
  const double delta = cfg.resolved_delta();
  double numerator = delta;
  double denominator = 1.0;
  switch (cfg.kind) {
    case StrategyKind::AT:
    case StrategyKind::AdmI:
      denominator = fy.norm();
      break;
    case StrategyKind::ALD:
      denominator = problem.jacobian_at(y).norm();
      break;
    case StrategyKind::Basin:
      denominator = std::pow(y.norm(), cfg.beta_exp - 1.0);
      break;
    case StrategyKind::AdmII:
      denominator = 1.0 + std::pow(y.norm(), 1.0 + cfg.c_growth);
      break;
    case StrategyKind::AdmIII:
      numerator = delta * y.norm();
      denominator = fy.norm();
      break;
    case StrategyKind::AdmIV:
      numerator = delta * y.norm();
      denominator = 1.0 + std::pow(y.norm(), 1.0 + cfg.c_growth);
      break;
    case StrategyKind::FG:
      numerator = delta * y.squaredNorm();
      denominator = fy.squaredNorm();
      break;
    default:
      break;
  }
  // A vanishing denominator means nothing constrains the step.
  const double proposal = denominator == 0.0 ? std::numeric_limits<double>::infinity() : numerator / denominator;
  return std::max(cfg.h_min(), std::min(h_max, proposal));
}

Vector drift_increment(const Vector& fy, double h, std::optional<double> taming_step) {
  if (!taming_step) return h * fy;
  return (h / (1.0 + *taming_step * fy.norm())) * fy;
}

StepResult step(const Vector& y, double t, const SdeProblem& problem, const StrategyConfig& cfg, BrownianPath& path,
                double horizon) {
  return step_impl(y, t, problem, cfg, path, horizon, 0, nullptr);
}

Eigen::Map<const Vector> Trajectory::state(std::size_t n) const {
  if (!states_recorded) throw std::logic_error("Trajectory: states were not recorded");
  return Eigen::Map<const Vector>(states.data() + n * static_cast<std::size_t>(dim), dim);
}

Eigen::Map<const Vector> Trajectory::final_state() const {
  return Eigen::Map<const Vector>(states.data() + states.size() - static_cast<std::size_t>(dim), dim);
}

std::vector<double> Trajectory::component(int index) const {
  if (!states_recorded) throw std::logic_error("Trajectory: states were not recorded");
  if (index < 0 || index >= dim) throw std::out_of_range("Trajectory: component index out of range");
  std::vector<double> out;
  out.reserve(times.size());
  for (std::size_t n = 0; n < times.size(); ++n) out.push_back(states[n * dim + index]);
  return out;
}

Trajectory simulate(const SdeProblem& problem, const StrategyConfig& cfg, double horizon, BrownianPath& path,
                    const SimulateOptions& options) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("simulate: horizon must be positive");
  if (path.dimension() != problem.m) throw std::invalid_argument("simulate: path dimension must equal noise dimension");
  cfg.validate();

  const auto started = std::chrono::steady_clock::now();
  Trajectory traj;
  traj.dim = problem.d;
  traj.states_recorded = options.record_states;
  traj.times.push_back(0.0);
  Vector y = problem.initial_state;
  if (options.record_states) traj.states.assign(y.data(), y.data() + y.size());

  CompensatedClock clock;
  double t = 0.0;
  std::size_t n = 0;
  while (t < horizon) {
    StepResult r = step_impl(y, t, problem, cfg, path, horizon, ++n, &clock);
    clock.add(r.h);
    t = r.t;
    y = std::move(r.y);
    traj.times.push_back(t);
    traj.steps.push_back(r.h);
    traj.backstopped.push_back(r.backstopped ? 1 : 0);
    traj.backstop_count += r.backstopped ? 1 : 0;
    traj.final_truncated = r.truncated;
    if (options.record_states) traj.states.insert(traj.states.end(), y.data(), y.data() + y.size());
  }
  if (!options.record_states) traj.states.assign(y.data(), y.data() + y.size());
  traj.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  CsvWriter csv(out);
  std::vector<std::string> header{"n", "t", "h", "backstopped"};
  for (int j = 1; j <= traj.dim; ++j) header.push_back("Y_" + std::to_string(j));
  csv.header(header);
  for (std::size_t n = 0; n < traj.times.size(); ++n) {
    csv.field(n).field(traj.times[n]);
    if (n == 0) {
      csv.field("").field("");
    } else {
      csv.field(traj.steps[n - 1]).field(traj.backstopped[n - 1] != 0);
    }
    if (traj.states_recorded || n + 1 == traj.times.size()) {
      const auto y = traj.states_recorded ? traj.state(n) : traj.final_state();
      for (int j = 0; j < traj.dim; ++j) csv.field(y[j]);
    } else {
      for (int j = 0; j < traj.dim; ++j) csv.field("");
    }
    csv.end_row();
  }
}

double euler_map_two_cycle_check(double gamma, double nu, double h) {
  if (!(gamma > 0.0 && nu > 0.0 && h > 0.0)) {
    throw std::invalid_argument("euler_map_two_cycle_check: gamma, nu, h must be positive");
  }
  auto map = [&](double x) { return x - h * gamma * x * std::pow(std::abs(x), nu); };
  const double x_star = std::pow(2.0 / (h * gamma), 1.0 / nu);
  const double tol = 1e-10 * x_star;
  if (std::abs(map(x_star) + x_star) > tol || std::abs(map(-x_star) - x_star) > tol) {
    throw std::logic_error("euler_map_two_cycle_check: +-x* is not a two-cycle");
  }
  return x_star;
}

}  // namespace sdeadapt
