#pragma once

#include "sdeadapt/brownian.hpp"
#include "sdeadapt/common.hpp"
#include "sdeadapt/models.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sdeadapt {

/// Step-selection rules. Every adaptive rule proposes a step from the current
/// state only, which is then clamped to [h_min, h_max].
enum class StrategyKind {
  AT,      ///< taming-gap rule: delta(eps) / |f(y)|
  ALD,     ///< local dynamics: delta / |Df(y)|_F
  Basin,   ///< basin of attraction: delta / |y|^(beta-1)
  AdmI,    ///< delta / |f(y)|
  AdmII,   ///< delta / (1 + |y|^(1+c))
  AdmIII,  ///< delta |y| / |f(y)|
  AdmIV,   ///< delta |y| / (1 + |y|^(1+c))
  FG,      ///< delta |y|^2 / |f(y)|^2
  FixedEM,
  FixedTamed,
};

std::string to_string(StrategyKind kind);
/// Accepts the lowercase CLI names: at, ald, basin, adm-i .. adm-iv, fg,
/// fixed-em, fixed-tamed.
StrategyKind parse_strategy(const std::string& name);
const std::vector<std::string>& strategy_names();
bool is_fixed(StrategyKind kind);

/// Largest tolerance for which the AT rule stays admissible.
double max_admissible_epsilon(double h_max);
/// The AT step numerator (eps + sqrt(eps^2 + 4 eps)) / 2.
double delta_from_epsilon(double epsilon);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::AT;
  double h_max = 0.1;
  /// h_max / h_min. Ignored by the fixed-step kinds.
  double rho = 1.0;
  /// AT tolerance; defaults to 0.9 * h_max^2 / (1 + h_max).
  std::optional<double> epsilon;
  /// Numerator for ALD/Basin/ADM/FG; defaults to h_max.
  std::optional<double> delta;
  double beta_exp = 3.0;
  double c_growth = 1.0;

  double h_min() const { return is_fixed(kind) ? h_max : h_max / rho; }
  double resolved_epsilon() const;
  /// The numerator actually used by the proposal (delta(eps) for AT).
  double resolved_delta() const;
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

/// Proposed step for state y, already clamped to [h_min, h_max]. Pure: the
/// result depends only on y, the config and the problem coefficients.
double propose_step(const Vector& y, const SdeProblem& problem, const StrategyConfig& cfg);

/// Same, reusing an already evaluated f(y).
double propose_step(const Vector& y, const Vector& fy, const SdeProblem& problem, const StrategyConfig& cfg);

/// Drift part of one step: h f, or the tamed h f / (1 + taming_step |f|).
Vector drift_increment(const Vector& fy, double h, std::optional<double> taming_step);

struct StepResult {
  Vector y;
  double t = 0.0;
  double h = 0.0;
  bool backstopped = false;
  bool truncated = false;  ///< shortened to land exactly on the horizon
};

/// One step of the adaptive scheme: explicit Euler–Maruyama when the chosen
/// step exceeds h_min, the drift-tamed step otherwise. Throws DivergenceError
/// when the new state is not finite.
StepResult step(const Vector& y, double t, const SdeProblem& problem, const StrategyConfig& cfg,
                BrownianPath& path, double horizon);

struct Trajectory {
  int dim = 0;
  std::vector<double> times;
  std::vector<double> steps;
  std::vector<std::uint8_t> backstopped;
  /// Row-major states Y_0..Y_N when recorded, otherwise only Y_N.
  std::vector<double> states;
  bool states_recorded = true;
  bool final_truncated = false;
  std::size_t backstop_count = 0;
  double wall_time = 0.0;

  std::size_t step_count() const { return steps.size(); }
  double final_time() const { return times.back(); }
  Eigen::Map<const Vector> state(std::size_t n) const;
  Eigen::Map<const Vector> final_state() const;
  /// Values of one state component at every recorded time.
  std::vector<double> component(int index) const;
};

struct SimulateOptions {
  bool record_states = true;
};

/// Runs the scheme from t = 0 to exactly t = horizon.
Trajectory simulate(const SdeProblem& problem, const StrategyConfig& cfg, double horizon, BrownianPath& path,
                    const SimulateOptions& options = {});

/// CSV with columns n, t, h, backstopped, Y_1..Y_d. Row 0 is the initial
/// state with empty h.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

/// For F_h(x) = x - h*gamma*x*|x|^nu returns the two-cycle amplitude
/// x* = (2/(h*gamma))^(1/nu) after confirming F_h(+-x*) = -+x*.
double euler_map_two_cycle_check(double gamma, double nu, double h);

}  // namespace sdeadapt
