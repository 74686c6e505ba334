#include "sdeadapt/experiments.hpp"

#include "sdeadapt/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace sdeadapt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_step(const Trajectory& traj) {
  if (traj.steps.empty()) throw std::invalid_argument("trajectory has no steps");
  return std::accumulate(traj.steps.begin(), traj.steps.end(), 0.0) / static_cast<double>(traj.steps.size());
}

struct Sample {
  bool ok = false;
  double value = 0.0;
};

struct Moments {
  double mean = kNaN;
  double variance = kNaN;
  double min = kNaN;
  double max = kNaN;
  std::size_t count = 0;
};

/// Sample statistics (unbiased variance) of the ok entries.
Moments moments(const std::vector<Sample>& samples) {
  Moments out;
  std::vector<double> v;
  for (const auto& s : samples)
    if (s.ok) v.push_back(s.value);
  out.count = v.size();
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.variance = v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  out.min = *lo;
  out.max = *hi;
  return out;
}

nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace

double h_mean_of(const std::vector<double>& per_path_mean_steps) {
  if (per_path_mean_steps.empty()) throw std::invalid_argument("h_mean of an empty path set");
  return std::accumulate(per_path_mean_steps.begin(), per_path_mean_steps.end(), 0.0) /
         static_cast<double>(per_path_mean_steps.size());
}

double h_mean(const std::vector<Trajectory>& trajectories) {
  std::vector<double> means;
  means.reserve(trajectories.size());
  for (const auto& t : trajectories) means.push_back(mean_step(t));
  return h_mean_of(means);
}

std::optional<double> fit_order(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_order: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0 && y[i] > 0 && std::isfinite(x[i]) && std::isfinite(y[i])) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

std::string method_label(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::FixedEM: return "EM";
    case StrategyKind::FixedTamed: return "TE";
    default: break;
  }
  std::string s = to_string(kind);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

std::string matched_fixed_label(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::AT: return "FT";
    case StrategyKind::ALD: return "FLD";
    default: return "F" + method_label(kind);
  }
}

// ---------------------------------------------------------------------------

ConvergenceReport convergence_study(const SdeProblem& problem, const StrategyConfig& cfg_template,
                                    const ConvergenceOptions& options) {
  const auto& hs = options.h_max_list;
  if (hs.empty()) throw std::invalid_argument("h_max list is empty");
  for (std::size_t i = 1; i < hs.size(); ++i)
    if (!(hs[i] < hs[i - 1])) throw std::invalid_argument("h_max list must be strictly decreasing");
  if (options.paths < 2) throw std::invalid_argument("convergence study needs at least 2 paths");
  if (!(options.horizon > 0)) throw std::invalid_argument("horizon must be positive");
  if (options.reference.kind == ReferenceSpec::Kind::Exact && !problem.has_exact_solution())
    throw std::invalid_argument("problem '" + problem.name + "' has no exact solution; use a fine tamed reference");
  if (options.reference.kind == ReferenceSpec::Kind::FineTamed && !(options.reference.h_ref > 0))
    throw std::invalid_argument("reference step must be positive");

  std::vector<StrategyConfig> adaptive_cfg(hs.size(), cfg_template);
  for (std::size_t k = 0; k < hs.size(); ++k) {
    adaptive_cfg[k].h_max = hs[k];
    adaptive_cfg[k].validate();
  }

  const std::size_t M = options.paths;
  const std::size_t K = hs.size();
  const double T = options.horizon;
  std::vector<BrownianPath> paths;
  std::vector<SdeProblem> problems;
  paths.reserve(M);
  problems.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    paths.push_back(derive_path(options.seed, m, problem.m));
    problems.push_back(realise(problem, options.seed, m));
  }

  struct Run {
    bool ok = false;
    Vector final;
    double mean_step = 0.0;
    double wall = 0.0;
  };
  auto run = [&](std::size_t m, const StrategyConfig& cfg) {
    Run r;
    try {
      const Trajectory traj = simulate(problems[m], cfg, T, paths[m], {.record_states = false});
      r.ok = true;
      r.final = traj.final_state();
      r.mean_step = mean_step(traj);
      r.wall = traj.wall_time;
    } catch (const DivergenceError&) {
    }
    return r;
  };

  std::vector<std::vector<Run>> adaptive(K, std::vector<Run>(M));
  parallel_for(M, options.workers, [&](std::size_t m) {
    for (std::size_t k = 0; k < K; ++k) adaptive[k][m] = run(m, adaptive_cfg[k]);
  });

  std::vector<StrategyConfig> fixed_cfg(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> means;
    for (const auto& r : adaptive[k])
      if (r.ok) means.push_back(r.mean_step);
    if (means.empty()) throw AllPathsDivergedError("every adaptive path diverged at h_max " + format_double(hs[k]));
    fixed_cfg[k].kind = StrategyKind::FixedTamed;
    fixed_cfg[k].h_max = h_mean_of(means);
  }

  std::vector<std::vector<Run>> fixed(K, std::vector<Run>(M));
  std::vector<Run> reference(M);
  parallel_for(M, options.workers, [&](std::size_t m) {
    for (std::size_t k = 0; k < K; ++k) fixed[k][m] = run(m, fixed_cfg[k]);
    if (options.reference.kind == ReferenceSpec::Kind::Exact) {
      reference[m].final = problems[m].exact_solution(T, paths[m]);
      reference[m].ok = reference[m].final.allFinite();
    } else {
      StrategyConfig ref;
      ref.kind = StrategyKind::FixedTamed;
      ref.h_max = options.reference.h_ref;
      reference[m] = run(m, ref);
    }
    paths[m] = BrownianPath(0, problem.m);
  });

  auto make_row = [&](const std::string& method, double h_max, double rho, double hm, const std::vector<Run>& runs) {
    ConvergenceRow row;
    row.method = method;
    row.h_max = h_max;
    row.rho = rho;
    row.h_mean = hm;
    double sq = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      row.wall_seconds += runs[m].wall;
      if (!runs[m].ok) {
        ++row.diverged;
        continue;
      }
      if (!reference[m].ok) continue;
      sq += (reference[m].final - runs[m].final).squaredNorm();
      ++row.n_paths;
    }
    row.rms_error = row.n_paths ? std::sqrt(sq / static_cast<double>(row.n_paths)) : kNaN;
    return row;
  };

  ConvergenceReport report;
  report.problem = problem.name;
  report.kind = cfg_template.kind;
  const std::string label = method_label(cfg_template.kind);
  const std::string fixed_label = matched_fixed_label(cfg_template.kind);
  for (std::size_t k = 0; k < K; ++k) {
    const double rho = is_fixed(cfg_template.kind) ? 1.0 : cfg_template.rho;
    report.adaptive.push_back(make_row(label, hs[k], rho, fixed_cfg[k].h_max, adaptive[k]));
    report.matched_fixed.push_back(make_row(fixed_label, fixed_cfg[k].h_max, 1.0, fixed_cfg[k].h_max, fixed[k]));
  }
  auto order = [](const std::vector<ConvergenceRow>& rows) {
    std::vector<double> x, y;
    for (const auto& r : rows) {
      x.push_back(r.h_mean);
      y.push_back(r.rms_error);
    }
    return fit_order(x, y);
  };
  report.fitted_order = order(report.adaptive);
  report.matched_fitted_order = order(report.matched_fixed);
  return report;
}

void write_convergence_csv(std::ostream& out, const ConvergenceReport& report) {
  CsvWriter csv(out);
  csv.header({"method", "h_max", "rho", "h_mean", "rms_error", "wall_seconds", "n_paths", "diverged"});
  for (const auto* rows : {&report.adaptive, &report.matched_fixed}) {
    for (const auto& r : *rows) {
      csv.field(r.method).field(r.h_max).field(r.rho).field(r.h_mean).field(r.rms_error).field(r.wall_seconds);
      csv.field(r.n_paths).field(r.diverged);
      csv.end_row();
    }
  }
}

nlohmann::json to_json(const ConvergenceReport& report) {
  auto rows = [](const std::vector<ConvergenceRow>& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : list) {
      arr.push_back({{"method", r.method},
                     {"h_max", r.h_max},
                     {"rho", r.rho},
                     {"h_mean", r.h_mean},
                     {"rms_error", number_or_null(r.rms_error)},
                     {"wall_seconds", r.wall_seconds},
                     {"n_paths", r.n_paths},
                     {"diverged", r.diverged}});
    }
    return arr;
  };
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"problem", report.problem},
          {"strategy", to_string(report.kind)},
          {"rows", rows(report.adaptive)},
          {"matched_fixed", rows(report.matched_fixed)},
          {"fitted_order", opt(report.fitted_order)},
          {"matched_fitted_order", opt(report.matched_fitted_order)}};
}

// ---------------------------------------------------------------------------

StepStats step_statistics(const SdeProblem& problem, const StrategyConfig& cfg, double horizon, std::size_t paths,
                          std::uint64_t seed, int workers) {
  if (paths < 1) throw std::invalid_argument("step statistics need at least one path");
  if (!(horizon > 0)) throw std::invalid_argument("horizon must be positive");
  cfg.validate();

  struct PathStats {
    bool ok = false;
    double mean = 0.0;
    double sum = 0.0;
    double sum_sq = 0.0;
    double min = std::numeric_limits<double>::infinity();
    double max = 0.0;
    std::size_t pooled = 0;
    std::size_t at_min = 0;
    std::size_t steps = 0;
    double wall = 0.0;
  };
  const double h_min = cfg.h_min();
  std::vector<PathStats> per(paths);
  parallel_for(paths, workers, [&](std::size_t m) {
    BrownianPath path = derive_path(seed, m, problem.m);
    const SdeProblem p = realise(problem, seed, m);
    PathStats& s = per[m];
    try {
      const Trajectory traj = simulate(p, cfg, horizon, path, {.record_states = false});
      s.ok = true;
      s.mean = mean_step(traj);
      s.steps = traj.step_count();
      s.wall = traj.wall_time;
      const std::size_t pooled = traj.final_truncated ? s.steps - 1 : s.steps;
      for (std::size_t n = 0; n < pooled; ++n) {
        const double h = traj.steps[n];
        s.sum += h;
        s.sum_sq += h * h;
        s.min = std::min(s.min, h);
        s.max = std::max(s.max, h);
        if (h == h_min) ++s.at_min;
      }
      s.pooled = pooled;
    } catch (const DivergenceError&) {
    }
  });

  StepStats out;
  out.strategy = to_string(cfg.kind);
  out.rho = is_fixed(cfg.kind) ? 1.0 : cfg.rho;
  std::vector<double> means;
  double sum = 0.0, sum_sq = 0.0;
  std::size_t pooled = 0, at_min = 0;
  out.step_min = std::numeric_limits<double>::infinity();
  for (const auto& s : per) {
    out.wall_seconds += s.wall;
    if (!s.ok) {
      ++out.diverged;
      continue;
    }
    ++out.n_paths;
    means.push_back(s.mean);
    out.n_steps += s.steps;
    sum += s.sum;
    sum_sq += s.sum_sq;
    pooled += s.pooled;
    at_min += s.at_min;
    out.step_min = std::min(out.step_min, s.min);
    out.step_max = std::max(out.step_max, s.max);
  }
  if (means.empty()) {
    out.h_mean = out.step_variance = out.step_min = out.step_max = out.pct_at_hmin = kNaN;
    return out;
  }
  out.h_mean = h_mean_of(means);
  if (pooled == 0) {
    out.step_variance = out.step_min = out.step_max = out.pct_at_hmin = kNaN;
    return out;
  }
  const double mu = sum / static_cast<double>(pooled);
  out.step_variance = std::max(0.0, sum_sq / static_cast<double>(pooled) - mu * mu);
  out.pct_at_hmin = 100.0 * static_cast<double>(at_min) / static_cast<double>(pooled);
  return out;
}

void write_step_stats_csv(std::ostream& out, const std::vector<StepStats>& rows) {
  CsvWriter csv(out);
  csv.header({"strategy", "rho", "h_mean", "var", "min", "max", "wall_seconds", "pct_min", "n_paths", "n_steps",
              "diverged"});
  for (const auto& r : rows) {
    csv.field(r.strategy).field(r.rho).field(r.h_mean).field(r.step_variance).field(r.step_min).field(r.step_max);
    csv.field(r.wall_seconds).field(r.pct_at_hmin).field(r.n_paths).field(r.n_steps).field(r.diverged);
    csv.end_row();
  }
}

nlohmann::json to_json(const StepStats& s) {
  return {{"strategy", s.strategy},
          {"rho", s.rho},
          {"h_mean", number_or_null(s.h_mean)},
          {"var", number_or_null(s.step_variance)},
          {"min", number_or_null(s.step_min)},
          {"max", number_or_null(s.step_max)},
          {"wall_seconds", s.wall_seconds},
          {"pct_min", number_or_null(s.pct_at_hmin)},
          {"n_paths", s.n_paths},
          {"n_steps", s.n_steps},
          {"diverged", s.diverged}};
}

// ---------------------------------------------------------------------------

PeriodEstimate estimate_period(const Trajectory& traj, int component) {
  if (!traj.states_recorded) throw std::invalid_argument("period estimation needs recorded states");
  if (component < 0 || component >= traj.dim) throw std::invalid_argument("component out of range");
  if (traj.times.size() < 2) throw NoPeriodError("trajectory has a single point");
  const std::vector<double> y = traj.component(component);
  PeriodEstimate out;
  for (std::size_t n = 0; n + 1 < y.size(); ++n) {
    if (y[n] <= 0.0 && y[n + 1] > 0.0) {
      const double t0 = traj.times[n], t1 = traj.times[n + 1];
      out.crossing_times.push_back(t0 + (t1 - t0) * (-y[n]) / (y[n + 1] - y[n]));
    }
  }
  out.crossings = out.crossing_times.size();
  if (out.crossings == 0) throw NoPeriodError("no upward zero crossing");
  out.period = (traj.final_time() - traj.times.front()) / static_cast<double>(out.crossings);
  return out;
}

const PeriodRow& PeriodReport::row(const std::string& method) const {
  for (const auto& r : rows)
    if (r.method == method) return r;
  throw std::out_of_range("no period row for " + method);
}

PeriodReport period_study(const PeriodStudyOptions& o) {
  if (o.paths < 1) throw std::invalid_argument("period study needs at least one path");
  if (!(o.baseline_h > 0)) throw std::invalid_argument("baseline step must be positive");
  const SdeProblem problem = make_problem("vdp", o.vdp_params);

  StrategyConfig at;
  at.kind = StrategyKind::AT;
  at.h_max = o.h_max;
  at.rho = o.rho;
  at.epsilon = o.at_epsilon;
  at.validate();
  StrategyConfig ald = at;
  ald.kind = StrategyKind::ALD;
  ald.epsilon.reset();
  ald.delta = o.ald_delta;
  ald.validate();

  const std::size_t M = o.paths;
  std::vector<BrownianPath> paths;
  paths.reserve(M);
  for (std::size_t m = 0; m < M; ++m) paths.push_back(derive_path(o.seed, m, problem.m));

  auto period_of = [&](std::size_t m, const StrategyConfig& cfg, double* mean_h) {
    Sample s;
    try {
      const Trajectory traj = simulate(problem, cfg, o.horizon, paths[m]);
      if (mean_h) *mean_h = mean_step(traj);
      s.value = estimate_period(traj, 0).period;
      s.ok = true;
    } catch (const DivergenceError&) {
    } catch (const NoPeriodError&) {
    }
    return s;
  };

  enum { TE, AT, FT, ALD, FLD, kMethods };
  std::vector<std::vector<Sample>> periods(kMethods, std::vector<Sample>(M));
  std::vector<double> at_h(M, kNaN), ald_h(M, kNaN);
  parallel_for(M, o.workers, [&](std::size_t m) {
    periods[AT][m] = period_of(m, at, &at_h[m]);
    periods[ALD][m] = period_of(m, ald, &ald_h[m]);
  });

  auto finite_mean = [](const std::vector<double>& v) {
    std::vector<double> ok;
    for (double x : v)
      if (std::isfinite(x)) ok.push_back(x);
    if (ok.empty()) throw AllPathsDivergedError("every adaptive van der Pol path diverged");
    return h_mean_of(ok);
  };
  StrategyConfig ft;
  ft.kind = StrategyKind::FixedTamed;
  ft.h_max = finite_mean(at_h);
  StrategyConfig fld = ft;
  fld.h_max = finite_mean(ald_h);
  StrategyConfig te = ft;
  te.h_max = o.baseline_h;

  parallel_for(M, o.workers, [&](std::size_t m) {
    periods[FT][m] = period_of(m, ft, nullptr);
    periods[FLD][m] = period_of(m, fld, nullptr);
    periods[TE][m] = period_of(m, te, nullptr);
    paths[m] = BrownianPath(0, problem.m);
  });

  const std::vector<std::pair<std::string, double>> methods{
      {"TE", te.h_max}, {"AT", ft.h_max}, {"FT", ft.h_max}, {"ALD", fld.h_max}, {"FLD", fld.h_max}};
  PeriodReport report;
  const Moments base = moments(periods[TE]);
  for (int i = 0; i < kMethods; ++i) {
    const Moments mo = moments(periods[i]);
    PeriodRow row;
    row.method = methods[i].first;
    row.h = methods[i].second;
    row.mean_period = mo.mean;
    row.variance = mo.variance;
    row.min_period = mo.min;
    row.max_period = mo.max;
    row.n_paths = mo.count;
    row.failures = M - mo.count;
    row.rel_error = i == TE ? 0.0 : std::abs(mo.mean - base.mean) / base.mean;
    report.rows.push_back(row);
  }
  return report;
}

void write_period_csv(std::ostream& out, const PeriodReport& report) {
  CsvWriter csv(out);
  csv.header({"method", "rel_error", "mean", "var", "min", "max", "h", "n_paths", "failures"});
  for (const auto& r : report.rows) {
    csv.field(r.method).field(r.rel_error).field(r.mean_period).field(r.variance).field(r.min_period);
    csv.field(r.max_period).field(r.h).field(r.n_paths).field(r.failures);
    csv.end_row();
  }
}

nlohmann::json to_json(const PeriodReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"method", r.method},
                    {"rel_error", number_or_null(r.rel_error)},
                    {"mean", number_or_null(r.mean_period)},
                    {"var", number_or_null(r.variance)},
                    {"min", number_or_null(r.min_period)},
                    {"max", number_or_null(r.max_period)},
                    {"h", r.h},
                    {"n_paths", r.n_paths},
                    {"failures", r.failures}});
  }
  return {{"rows", rows}};
}

// ---------------------------------------------------------------------------

std::vector<DivergenceRow> divergence_demo(const SdeProblem& problem, const DivergenceOptions& o) {
  if (o.steps.empty()) throw std::invalid_argument("no step sizes given");
  if (o.paths < 1) throw std::invalid_argument("divergence demo needs at least one path");
  if (!(o.moment > 0)) throw std::invalid_argument("moment order must be positive");

  const std::vector<StrategyKind> schemes{StrategyKind::FixedEM, StrategyKind::FixedTamed};
  const std::size_t S = o.steps.size() * schemes.size();
  std::vector<std::vector<Sample>> finals(S, std::vector<Sample>(o.paths));
  parallel_for(o.paths, o.workers, [&](std::size_t m) {
    BrownianPath path = derive_path(o.seed, m, problem.m);
    const SdeProblem p = realise(problem, o.seed, m);
    for (std::size_t i = 0; i < o.steps.size(); ++i) {
      for (std::size_t j = 0; j < schemes.size(); ++j) {
        StrategyConfig cfg;
        cfg.kind = schemes[j];
        cfg.h_max = o.steps[i];
        Sample& s = finals[i * schemes.size() + j][m];
        try {
          const Trajectory traj = simulate(p, cfg, o.horizon, path, {.record_states = false});
          s.value = std::pow(traj.final_state().norm(), o.moment);
          s.ok = std::isfinite(s.value);
        } catch (const DivergenceError&) {
        }
      }
    }
  });

  std::vector<DivergenceRow> rows;
  for (std::size_t i = 0; i < o.steps.size(); ++i) {
    for (std::size_t j = 0; j < schemes.size(); ++j) {
      const auto& samples = finals[i * schemes.size() + j];
      DivergenceRow row;
      row.scheme = to_string(schemes[j]);
      row.h = o.steps[i];
      row.paths = o.paths;
      double sum = 0.0;
      for (const auto& s : samples) {
        if (s.ok)
          sum += s.value;
        else
          ++row.nonfinite;
      }
      const std::size_t finite = o.paths - row.nonfinite;
      row.moment_finite = finite ? sum / static_cast<double>(finite) : kNaN;
      row.moment_all = row.nonfinite ? std::numeric_limits<double>::infinity() : row.moment_finite;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_divergence_csv(std::ostream& out, const std::vector<DivergenceRow>& rows) {
  CsvWriter csv(out);
  csv.header({"scheme", "h", "paths", "nonfinite", "moment_finite", "moment_all"});
  for (const auto& r : rows) {
    csv.field(r.scheme).field(r.h).field(r.paths).field(r.nonfinite).field(r.moment_finite).field(r.moment_all);
    csv.end_row();
  }
}

nlohmann::json to_json(const std::vector<DivergenceRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"scheme", r.scheme},
                   {"h", r.h},
                   {"paths", r.paths},
                   {"nonfinite", r.nonfinite},
                   {"moment_finite", number_or_null(r.moment_finite)},
                   {"moment_all", number_or_null(r.moment_all)}});
  }
  return {{"rows", arr}};
}

}  // namespace sdeadapt
