#pragma once

#include "sdeadapt/models.hpp"
#include "sdeadapt/stepping.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sdeadapt {

enum class Qoi {
  FirstComponent,  ///< X_1(T)
  Norm,            ///< |X(T)|
};

Qoi parse_qoi(const std::string& name);
std::string to_string(Qoi qoi);
double evaluate_qoi(Qoi qoi, const Vector& x);

struct MlmcConfig {
  int L0 = 0;
  int L = 3;
  double h_max0 = 1.0;
  double k = 4.0;
  double horizon = 2.0;
  /// Target root-mean-square accuracy; when set, sample counts come from
  /// the variance-optimal allocation after the pilot runs.
  std::optional<double> target_rms;
  /// Explicit N per level (L - L0 + 1 entries); used when no target is set.
  std::vector<std::size_t> fixed_schedule;
  std::size_t pilot = 100;
  Qoi qoi = Qoi::FirstComponent;
  /// Optional per-level h_max replacing h_max0 * k^-level.
  std::vector<double> level_h_max;
  /// Resamples allowed for one diverged pair before giving up.
  std::size_t max_resamples = 20;
  int workers = 0;

  double h_max_at(int level) const;
  void validate() const;
};

struct PairResult {
  double fine = 0.0;
  double coarse = 0.0;
  std::size_t fine_steps = 0;
  std::size_t coarse_steps = 0;
  double fine_mean_step = 0.0;
};

/// Runs the fine configuration first and then the coarse one on the same
/// path. Throws DivergenceError when either leg diverges.
PairResult coupled_pair(const SdeProblem& problem, const StrategyConfig& cfg_fine, const StrategyConfig& cfg_coarse,
                        double horizon, BrownianPath& path, Qoi qoi = Qoi::FirstComponent);

struct MlmcLevel {
  int level = 0;
  double h_max = 0.0;
  double mean_diff = 0.0;
  double variance = 0.0;
  std::size_t n_samples = 0;
  double cost_steps = 0.0;  ///< total steps over all samples, both legs
  double cost_per_sample = 0.0;
  double h_mean = 0.0;      ///< of the fine leg
  std::size_t resampled = 0;
};

struct MlmcReport {
  std::vector<MlmcLevel> levels;
  double estimate = 0.0;
  double std_error = 0.0;
  std::optional<double> target_rms;
  std::size_t resampled = 0;
};

MlmcReport mlmc_estimate(const SdeProblem& problem, const StrategyConfig& strategy_template, const MlmcConfig& cfg,
                         std::uint64_t seed);

/// N_l = ceil(2 / eps^2 * sqrt(V_l / C_l) * sum_j sqrt(V_j C_j)).
std::vector<std::size_t> optimal_allocation(const std::vector<double>& variance, const std::vector<double>& cost,
                                            double target_rms);

void write_mlmc_csv(std::ostream& out, const MlmcReport& report);
nlohmann::json to_json(const MlmcReport& report);

}  // namespace sdeadapt
