#pragma once

#include "sdeadapt/models.hpp"
#include "sdeadapt/stepping.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdeadapt {

/// Mean of per-path mean step sizes, (1/M) sum_m (1/N_m) sum_n h_n^(m).
/// Throws std::invalid_argument on an empty list or a path without steps.
double h_mean(const std::vector<Trajectory>& trajectories);
double h_mean_of(const std::vector<double>& per_path_mean_steps);

/// Least-squares slope of log(y) against log(x); empty with fewer than two
/// usable (positive) points.
std::optional<double> fit_order(const std::vector<double>& x, const std::vector<double>& y);

/// Adaptive runs are labelled by strategy (AT, ALD, ...); their step-matched
/// fixed tamed comparisons FT, FLD, ...
std::string method_label(StrategyKind kind);
std::string matched_fixed_label(StrategyKind kind);

// ---------------------------------------------------------------------------
// Strong convergence

struct ReferenceSpec {
  enum class Kind { Exact, FineTamed };
  Kind kind = Kind::Exact;
  double h_ref = 1e-4;  ///< step of the fixed tamed reference
};

struct ConvergenceOptions {
  std::vector<double> h_max_list;  ///< strictly decreasing
  std::size_t paths = 100;
  double horizon = 2.0;
  std::uint64_t seed = 1;
  ReferenceSpec reference;
  int workers = 0;  ///< 0 = all cores
};

struct ConvergenceRow {
  std::string method;
  double h_max = 0.0;
  double rho = 0.0;
  double h_mean = 0.0;
  double rms_error = 0.0;
  double wall_seconds = 0.0;
  std::size_t n_paths = 0;   ///< paths that finished and entered the error
  std::size_t diverged = 0;
};

struct ConvergenceReport {
  std::string problem;
  StrategyKind kind = StrategyKind::AT;
  std::vector<ConvergenceRow> adaptive;
  std::vector<ConvergenceRow> matched_fixed;
  std::optional<double> fitted_order;
  std::optional<double> matched_fitted_order;
};

/// For each h_max runs the adaptive scheme on `paths` shared Brownian paths,
/// then the fixed tamed scheme at that row's h_mean on the same paths, then
/// the reference solution on the same paths. The paths are queried in that
/// order so the whole study is reproducible from the seed.
ConvergenceReport convergence_study(const SdeProblem& problem, const StrategyConfig& cfg_template,
                                    const ConvergenceOptions& options);

void write_convergence_csv(std::ostream& out, const ConvergenceReport& report);
nlohmann::json to_json(const ConvergenceReport& report);

// ---------------------------------------------------------------------------
// Step-size statistics

struct StepStats {
  std::string strategy;
  double rho = 0.0;
  double h_mean = 0.0;
  double step_variance = 0.0;
  double step_min = 0.0;
  double step_max = 0.0;
  double wall_seconds = 0.0;
  double pct_at_hmin = 0.0;
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;
  std::size_t diverged = 0;
};

/// Pools the steps of `paths` realisations. Variance, extrema and the share
/// of steps clamped at h_min leave out horizon-truncated final steps; h_mean
/// uses every step.
StepStats step_statistics(const SdeProblem& problem, const StrategyConfig& cfg, double horizon, std::size_t paths,
                          std::uint64_t seed, int workers = 0);

void write_step_stats_csv(std::ostream& out, const std::vector<StepStats>& rows);
nlohmann::json to_json(const StepStats& stats);

// ---------------------------------------------------------------------------
// Period estimation

class NoPeriodError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PeriodEstimate {
  double period = 0.0;
  std::size_t crossings = 0;
  std::vector<double> crossing_times;  ///< linearly interpolated
};

/// Counts upward zero crossings (y_n <= 0 < y_{n+1}) of one component and
/// returns (t_N - t_0) / count. Throws NoPeriodError without a crossing.
PeriodEstimate estimate_period(const Trajectory& traj, int component);

struct PeriodRow {
  std::string method;
  double rel_error = 0.0;
  double mean_period = 0.0;
  double variance = 0.0;
  double min_period = 0.0;
  double max_period = 0.0;
  double h = 0.0;
  std::size_t n_paths = 0;
  std::size_t failures = 0;
};

struct PeriodReport {
  std::vector<PeriodRow> rows;
  const PeriodRow& row(const std::string& method) const;
};

struct PeriodStudyOptions {
  std::size_t paths = 100;
  double rho = 100.0;
  double h_max = 1.0;
  double horizon = 100.0;
  std::uint64_t seed = 1;
  /// AT tolerance used for the oscillator.
  double at_epsilon = 0.03;
  /// ALD numerator used for the oscillator.
  double ald_delta = 0.5;
  double baseline_h = 5e-4;
  ProblemParams vdp_params;
  int workers = 0;
};

/// Van der Pol periods from AT, ALD, their step-matched fixed tamed runs FT
/// and FLD, and a fine fixed tamed baseline TE, all on the same paths.
PeriodReport period_study(const PeriodStudyOptions& options);

void write_period_csv(std::ostream& out, const PeriodReport& report);
nlohmann::json to_json(const PeriodReport& report);

// ---------------------------------------------------------------------------
// Euler–Maruyama divergence

struct DivergenceOptions {
  std::vector<double> steps{0.5, 0.25, 0.125, 0.0625};
  std::size_t paths = 1000;
  double horizon = 5.0;
  double moment = 2.0;
  std::uint64_t seed = 1;
  int workers = 0;
};

struct DivergenceRow {
  std::string scheme;
  double h = 0.0;
  std::size_t paths = 0;
  std::size_t nonfinite = 0;
  /// E|Y_N|^p over the paths that stayed finite.
  double moment_finite = 0.0;
  /// E|Y_N|^p over all paths; +inf as soon as one path overflowed.
  double moment_all = 0.0;
};

/// Runs fixed-step Euler–Maruyama and fixed-step tamed Euler for each step
/// size on the same paths and reports the p-th moment of |Y_N| and the number
/// of paths that overflowed.
std::vector<DivergenceRow> divergence_demo(const SdeProblem& problem, const DivergenceOptions& options);

void write_divergence_csv(std::ostream& out, const std::vector<DivergenceRow>& rows);
nlohmann::json to_json(const std::vector<DivergenceRow>& rows);

}  // namespace sdeadapt
