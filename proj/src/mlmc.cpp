#include "sdeadapt/mlmc.hpp"

#include "sdeadapt/io.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace sdeadapt {

Qoi parse_qoi(const std::string& name) {
  if (name == "first") return Qoi::FirstComponent;
  if (name == "norm") return Qoi::Norm;
  throw std::invalid_argument("unknown quantity of interest '" + name + "' (valid: first, norm)");
}

std::string to_string(Qoi qoi) { return qoi == Qoi::Norm ? "norm" : "first"; }

double evaluate_qoi(Qoi qoi, const Vector& x) { return qoi == Qoi::Norm ? x.norm() : x[0]; }

double MlmcConfig::h_max_at(int level) const {
  if (!level_h_max.empty()) return level_h_max.at(static_cast<std::size_t>(level - L0));
  return h_max0 * std::pow(k, -level);
}

void MlmcConfig::validate() const {
  if (L0 < 0) throw std::invalid_argument("L0 must be non-negative");
  if (L < L0) throw std::invalid_argument("L must be at least L0");
  if (!(h_max0 > 0)) throw std::invalid_argument("h_max0 must be positive");
  if (!(k > 1)) throw std::invalid_argument("refinement factor k must exceed 1");
  if (!(horizon > 0)) throw std::invalid_argument("horizon must be positive");
  const auto levels = static_cast<std::size_t>(L - L0 + 1);
  if (target_rms && !(*target_rms > 0)) throw std::invalid_argument("target rms must be positive");
  if (!target_rms && !fixed_schedule.empty() && fixed_schedule.size() != levels)
    throw std::invalid_argument("fixed schedule needs one sample count per level");
  for (std::size_t n : fixed_schedule)
    if (n < 2) throw std::invalid_argument("each level needs at least 2 samples");
  if (pilot < 2) throw std::invalid_argument("pilot size must be at least 2");
  if (!level_h_max.empty()) {
    if (level_h_max.size() != levels) throw std::invalid_argument("level h_max list needs one entry per level");
    for (std::size_t i = 0; i < levels; ++i) {
      if (!(level_h_max[i] > 0)) throw std::invalid_argument("level h_max must be positive");
      if (i > 0 && !(level_h_max[i] < level_h_max[i - 1]))
        throw std::invalid_argument("level h_max must decrease with the level");
    }
  }
}

PairResult coupled_pair(const SdeProblem& problem, const StrategyConfig& cfg_fine, const StrategyConfig& cfg_coarse,
                        double horizon, BrownianPath& path, Qoi qoi) {
  if (cfg_fine.kind != cfg_coarse.kind) throw std::invalid_argument("coupled legs must use the same strategy");
  if (cfg_fine.h_max > cfg_coarse.h_max) throw std::invalid_argument("fine leg must not have the larger h_max");
  const SimulateOptions opts{.record_states = false};
  const Trajectory fine = simulate(problem, cfg_fine, horizon, path, opts);
  const Trajectory coarse = simulate(problem, cfg_coarse, horizon, path, opts);
  PairResult out;
  out.fine = evaluate_qoi(qoi, fine.final_state());
  out.coarse = evaluate_qoi(qoi, coarse.final_state());
  out.fine_steps = fine.step_count();
  out.coarse_steps = coarse.step_count();
  out.fine_mean_step =
      std::accumulate(fine.steps.begin(), fine.steps.end(), 0.0) / static_cast<double>(fine.step_count());
  return out;
}

std::vector<std::size_t> optimal_allocation(const std::vector<double>& variance, const std::vector<double>& cost,
                                            double target_rms) {
  if (variance.size() != cost.size()) throw std::invalid_argument("allocation: size mismatch");
  if (!(target_rms > 0)) throw std::invalid_argument("allocation: target must be positive");
  double sum = 0.0;
  for (std::size_t l = 0; l < variance.size(); ++l) sum += std::sqrt(variance[l] * cost[l]);
  std::vector<std::size_t> n(variance.size());
  for (std::size_t l = 0; l < variance.size(); ++l) {
    if (!(cost[l] > 0)) throw std::invalid_argument("allocation: cost must be positive");
    const double x = 2.0 / (target_rms * target_rms) * std::sqrt(variance[l] / cost[l]) * sum;
    n[l] = static_cast<std::size_t>(std::ceil(x));
  }
  return n;
}

namespace {

struct LevelSample {
  double diff = 0.0;
  double steps = 0.0;
  double fine_mean_step = 0.0;
  std::size_t resamples = 0;
};

class LevelSampler {
 public:
  LevelSampler(const SdeProblem& problem, const StrategyConfig& tmpl, const MlmcConfig& cfg, int level,
               std::uint64_t seed)
      : problem_(problem), cfg_(cfg), level_(level), seed_(derive_seed(seed, static_cast<std::uint64_t>(level))) {
    fine_ = tmpl;
    fine_.h_max = cfg.h_max_at(level);
    fine_.validate();
    if (level > cfg.L0) {
      coarse_ = tmpl;
      coarse_.h_max = cfg.h_max_at(level - 1);
      coarse_.validate();
    }
  }

  void extend_to(std::size_t n) {
    const std::size_t start = samples_.size();
    if (n <= start) return;
    samples_.resize(n);
    std::vector<char> failed(n - start, 0);
    parallel_for(n - start, cfg_.workers, [&](std::size_t j) {
      const std::size_t i = start + j;
      for (std::size_t r = 0; r <= cfg_.max_resamples; ++r) {
        const std::uint64_t index = (static_cast<std::uint64_t>(r) << 40) | i;
        BrownianPath path = derive_path(seed_, index, problem_.m);
        const SdeProblem p = realise(problem_, seed_, index);
        try {
          LevelSample& s = samples_[i];
          if (level_ == cfg_.L0) {
            const Trajectory t = simulate(p, fine_, cfg_.horizon, path, {.record_states = false});
            s.diff = evaluate_qoi(cfg_.qoi, t.final_state());
            s.steps = static_cast<double>(t.step_count());
            s.fine_mean_step = std::accumulate(t.steps.begin(), t.steps.end(), 0.0) / s.steps;
          } else {
            const PairResult pr = coupled_pair(p, fine_, coarse_, cfg_.horizon, path, cfg_.qoi);
            s.diff = pr.fine - pr.coarse;
            s.steps = static_cast<double>(pr.fine_steps + pr.coarse_steps);
            s.fine_mean_step = pr.fine_mean_step;
          }
          s.resamples = r;
          return;
        } catch (const DivergenceError&) {
        }
      }
      failed[j] = 1;
    });
    for (char f : failed)
      if (f) throw AllPathsDivergedError("level " + std::to_string(level_) + ": sample diverged after every resample");
  }

  MlmcLevel summary() const {
    MlmcLevel out;
    out.level = level_;
    out.h_max = fine_.h_max;
    out.n_samples = samples_.size();
    const double n = static_cast<double>(samples_.size());
    double sum = 0.0, mean_step = 0.0;
    for (const auto& s : samples_) {
      sum += s.diff;
      out.cost_steps += s.steps;
      mean_step += s.fine_mean_step;
      out.resampled += s.resamples;
    }
    out.mean_diff = sum / n;
    double ss = 0.0;
    for (const auto& s : samples_) ss += (s.diff - out.mean_diff) * (s.diff - out.mean_diff);
    out.variance = samples_.size() > 1 ? ss / (n - 1.0) : 0.0;
    out.cost_per_sample = out.cost_steps / n;
    out.h_mean = mean_step / n;
    return out;
  }

 private:
  const SdeProblem& problem_;
  const MlmcConfig& cfg_;
  int level_;
  std::uint64_t seed_;
  StrategyConfig fine_;
  StrategyConfig coarse_;
  std::vector<LevelSample> samples_;
};

}  // namespace

MlmcReport mlmc_estimate(const SdeProblem& problem, const StrategyConfig& strategy_template, const MlmcConfig& cfg,
                         std::uint64_t seed) {
  cfg.validate();
  std::vector<LevelSampler> samplers;
  for (int l = cfg.L0; l <= cfg.L; ++l) samplers.emplace_back(problem, strategy_template, cfg, l, seed);
  const std::size_t levels = samplers.size();

  if (cfg.target_rms) {
    for (auto& s : samplers) s.extend_to(cfg.pilot);
    std::vector<double> v(levels), c(levels);
    for (std::size_t l = 0; l < levels; ++l) {
      const MlmcLevel m = samplers[l].summary();
      v[l] = m.variance;
      c[l] = m.cost_per_sample;
    }
    const auto n = optimal_allocation(v, c, *cfg.target_rms);
    for (std::size_t l = 0; l < levels; ++l) samplers[l].extend_to(n[l]);
  } else {
    for (std::size_t l = 0; l < levels; ++l)
      samplers[l].extend_to(cfg.fixed_schedule.empty() ? cfg.pilot : cfg.fixed_schedule[l]);
  }

  MlmcReport report;
  report.target_rms = cfg.target_rms;
  double var = 0.0;
  for (const auto& s : samplers) {
    const MlmcLevel m = s.summary();
    report.estimate += m.mean_diff;
    var += m.variance / static_cast<double>(m.n_samples);
    report.resampled += m.resampled;
    report.levels.push_back(m);
  }
  report.std_error = std::sqrt(var);
  return report;
}

void write_mlmc_csv(std::ostream& out, const MlmcReport& report) {
  CsvWriter csv(out);
  csv.header({"level", "h_max_level", "mean_diff", "variance", "n_samples", "cost_steps", "h_mean", "resampled"});
  for (const auto& l : report.levels) {
    csv.field(l.level).field(l.h_max).field(l.mean_diff).field(l.variance).field(l.n_samples).field(l.cost_steps);
    csv.field(l.h_mean).field(l.resampled);
    csv.end_row();
  }
}

nlohmann::json to_json(const MlmcReport& report) {
  nlohmann::json levels = nlohmann::json::array();
  double stat_var = 0.0;
  for (const auto& l : report.levels) {
    stat_var += l.variance / static_cast<double>(l.n_samples);
    levels.push_back({{"level", l.level},
                      {"h_max_level", l.h_max},
                      {"mean_diff", l.mean_diff},
                      {"variance", l.variance},
                      {"n_samples", l.n_samples},
                      {"cost_steps", l.cost_steps},
                      {"h_mean", l.h_mean},
                      {"resampled", l.resampled}});
  }
  nlohmann::json out{{"levels", levels},
                     {"estimate", report.estimate},
                     {"std_error", report.std_error},
                     {"statistical_variance", stat_var},
                     {"resampled", report.resampled}};
  out["target_rms"] = report.target_rms ? nlohmann::json(*report.target_rms) : nlohmann::json(nullptr);
  if (!report.levels.empty()) out["bias_estimate"] = std::abs(report.levels.back().mean_diff);
  return out;
}

}  // namespace sdeadapt
