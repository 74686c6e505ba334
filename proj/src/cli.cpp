#include "sdeadapt/cli.hpp"

#include "sdeadapt/brownian.hpp"
#include "sdeadapt/experiments.hpp"
#include "sdeadapt/io.hpp"
#include "sdeadapt/mlmc.hpp"
#include "sdeadapt/models.hpp"
#include "sdeadapt/spde.hpp"
#include "sdeadapt/stepping.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

namespace sdeadapt::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> format_names() { return {"csv", "json"}; }

/// Settings shared by most subcommands; each subcommand registers only the
/// flags it uses and may change the defaults before registering.
struct Settings {
  std::string problem;
  std::string strategy = "at";
  double hmax = 0.1;
  double rho = 1.0;
  std::optional<double> eps;
  std::optional<double> delta;
  double beta = 3.0;
  double c_growth = 1.0;
  std::optional<double> horizon;
  std::size_t paths = 100;
  std::uint64_t seed = 1;
  std::string out = ".";
  std::string format = "csv";
  int workers = 0;
  std::string config;
  std::string params_file;
  std::vector<std::string> sets;
};

void add_problem_flags(CLI::App* sub, Settings& s) {
  sub->add_option("--problem", s.problem, "registry problem")
      ->check(CLI::IsMember(problem_names()))
      ->capture_default_str();
  sub->add_option("--params", s.params_file, "key=value file of problem parameters");
  sub->add_option("--set", s.sets, "problem parameter override key=value")->take_all();
}

void add_strategy_flags(CLI::App* sub, Settings& s, bool with_rho = true) {
  sub->add_option("--strategy", s.strategy, "step strategy")
      ->check(CLI::IsMember(strategy_names()))
      ->capture_default_str();
  sub->add_option("--hmax", s.hmax, "maximum step")->capture_default_str();
  if (with_rho) sub->add_option("--rho", s.rho, "h_max / h_min")->capture_default_str();
  sub->add_option("--eps", s.eps, "AT tolerance");
  sub->add_option("--delta", s.delta, "step numerator for ALD, BASIN, ADM and FG");
  sub->add_option("--beta", s.beta, "BASIN exponent")->capture_default_str();
  sub->add_option("--c-growth", s.c_growth, "ADM-II/IV growth exponent")->capture_default_str();
}

void add_run_flags(CLI::App* sub, Settings& s, bool with_paths = true) {
  sub->add_option("--T", s.horizon, "final time");
  if (with_paths) sub->add_option("--paths", s.paths, "number of realisations")->capture_default_str();
  sub->add_option("--seed", s.seed, "experiment seed")->envname("SDEADAPT_SEED")->capture_default_str();
  sub->add_option("--out", s.out, "output directory")->capture_default_str();
  sub->add_option("--format", s.format, "output format")->check(CLI::IsMember(format_names()))->capture_default_str();
  sub->add_option("--workers", s.workers, "worker threads (0 = all cores)")->capture_default_str();
  sub->add_option("--config", s.config, "key=value file of flag defaults");
}

ProblemParams problem_params(const Settings& s) {
  ProblemParams params = s.params_file.empty() ? ProblemParams{} : load_problem_params(s.params_file);
  for (const auto& item : s.sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    if (key == "seed") {
      params.seed = std::stoull(text);
      continue;
    }
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("--set " + key + ": not a number");
    params.values[key] = value;
  }
  return params;
}

SdeProblem problem_from(const Settings& s) { return make_problem(s.problem, problem_params(s)); }

StrategyConfig strategy_from(const Settings& s) {
  StrategyConfig c;
  c.kind = parse_strategy(s.strategy);
  c.h_max = s.hmax;
  c.rho = s.rho;
  c.epsilon = s.eps;
  c.delta = s.delta;
  c.beta_exp = s.beta;
  c.c_growth = s.c_growth;
  c.validate();
  return c;
}

double horizon_or(const Settings& s, double fallback) {
  const double T = s.horizon.value_or(fallback);
  if (!(T > 0) || !std::isfinite(T)) throw std::invalid_argument("--T must be positive");
  return T;
}

/// Records outputs and writes the manifest next to them.
class Run {
 public:
  Run(std::string command, CLI::App* sub, const Settings& s, std::ostream& out)
      : command_(std::move(command)), sub_(sub), settings_(s), out_(out), started_(std::chrono::steady_clock::now()) {
    fs::create_directories(settings_.out);
  }

  json metadata() const {
    return {{"command", command_},
            {"seed", settings_.seed},
            {"generator", std::string(kGeneratorName)},
            {"revision", std::string(code_revision())}};
  }

  std::string path(const std::string& name) const { return (fs::path(settings_.out) / name).string(); }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    const std::string file = path(name);
    std::ofstream stream(file, std::ios::binary);
    if (!stream) throw std::runtime_error("cannot write " + file);
    body(stream);
    stream.close();
    if (!stream) throw std::runtime_error("failed writing " + file);
    outputs_.push_back(file);
    out_ << "wrote " << file << "\n";
  }

  /// Writes base.csv, or base.json holding the metadata block and `data`.
  void table(const std::string& base, const std::function<void(std::ostream&)>& csv, const json& data) {
    if (settings_.format == "json") {
      json doc{{"metadata", metadata()}, {"data", data}};
      write(base + ".json", [&](std::ostream& o) { o << doc.dump(2) << "\n"; });
    } else {
      write(base + ".csv", csv);
    }
  }

  void finish(json results = json::object()) {
    json params = json::object();
    for (const CLI::Option* opt : sub_->get_options()) {
      const std::string name = opt->get_single_name();
      if (name.empty() || name == "help") continue;
      if (opt->count() > 0) {
        const auto& r = opt->results();
        params[name] = r.size() == 1 ? json(r.front()) : json(r);
      } else if (!opt->get_default_str().empty()) {
        params[name] = opt->get_default_str();
      }
    }
    json manifest = metadata();
    manifest["parameters"] = params;
    manifest["outputs"] = outputs_;
    manifest["results"] = std::move(results);
    manifest["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    const std::string file = path(command_ + ".manifest.json");
    std::ofstream stream(file, std::ios::binary);
    stream << manifest.dump(2) << "\n";
    if (!stream) throw std::runtime_error("cannot write " + file);
  }

 private:
  std::string command_;
  CLI::App* sub_;
  const Settings& settings_;
  std::ostream& out_;
  std::chrono::steady_clock::time_point started_;
  std::vector<std::string> outputs_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

using Action = std::function<int()>;

Action register_list(CLI::App& app, std::ostream& out) {
  app.add_subcommand("list-problems", "print the registry problem names");
  return [&out] {
    for (const auto& name : problem_names()) out << name << "\n";
    return kSuccess;
  };
}

Action register_simulate(CLI::App& app, std::ostream& out) {
  auto s = std::make_shared<Settings>();
  s->problem = "sgle-mult";
  auto index = std::make_shared<std::uint64_t>(0);
  auto dump_path = std::make_shared<bool>(false);
  CLI::App* sub = app.add_subcommand("simulate", "simulate one trajectory");
  add_problem_flags(sub, *s);
  add_strategy_flags(sub, *s);
  add_run_flags(sub, *s, false);
  sub->add_option("--index", *index, "realisation index")->capture_default_str();
  sub->add_flag("--dump-path", *dump_path, "also write the Brownian samples");
  return [=, &out] {
    const SdeProblem base = problem_from(*s);
    const StrategyConfig cfg = strategy_from(*s);
    const double T = horizon_or(*s, base.default_horizon);
    Run run("simulate", sub, *s, out);
    const SdeProblem problem = realise(base, s->seed, *index);
    BrownianPath path = derive_path(s->seed, *index, problem.m);
    Trajectory traj;
    try {
      traj = simulate(problem, cfg, T, path);
    } catch (const DivergenceError& e) {
      throw AllPathsDivergedError(std::string("the trajectory diverged: ") + e.what());
    }
    json data{{"times", traj.times}, {"steps", traj.steps}, {"backstopped", traj.backstopped}};
    json states = json::array();
    for (std::size_t n = 0; n < traj.times.size(); ++n) {
      const auto y = traj.state(n);
      states.push_back(std::vector<double>(y.data(), y.data() + y.size()));
    }
    data["states"] = states;
    run.table("trajectory", [&](std::ostream& o) { write_trajectory_csv(o, traj); }, data);
    if (*dump_path) run.write("brownian.csv", [&](std::ostream& o) { path.write_csv(o); });
    out << "steps " << traj.step_count() << ", backstops " << traj.backstop_count << "\n";
    run.finish({{"steps", traj.step_count()}, {"backstops", traj.backstop_count}});
    return kSuccess;
  };
}

Action register_converge(CLI::App& app, std::ostream& out) {
  auto s = std::make_shared<Settings>();
  s->problem = "sgle-mult";
  s->hmax = 0.25;
  s->rho = 100.0;
  struct Extra {
    int levels = 1;
    double ratio = 2.0;
    std::vector<double> hmax_list;
    std::string reference = "auto";
    double href = 1e-4;
  };
  auto x = std::make_shared<Extra>();
  CLI::App* sub = app.add_subcommand("converge", "strong convergence study");
  add_problem_flags(sub, *s);
  add_strategy_flags(sub, *s);
  add_run_flags(sub, *s);
  sub->add_option("--levels", x->levels, "number of h_max values, each --ratio times smaller")->capture_default_str();
  sub->add_option("--ratio", x->ratio, "ratio between successive h_max values")->capture_default_str();
  sub->add_option("--hmax-list", x->hmax_list, "explicit decreasing h_max values")->take_all();
  sub->add_option("--reference", x->reference, "reference solution")
      ->check(CLI::IsMember({"auto", "exact", "tamed"}))
      ->capture_default_str();
  sub->add_option("--href", x->href, "step of the fixed tamed reference")->capture_default_str();
  return [=, &out] {
    const SdeProblem problem = problem_from(*s);
    const StrategyConfig cfg = strategy_from(*s);
    ConvergenceOptions o;
    if (!x->hmax_list.empty()) {
      o.h_max_list = x->hmax_list;
    } else {
      if (x->levels < 1) throw std::invalid_argument("--levels must be at least 1");
      if (!(x->ratio > 1)) throw std::invalid_argument("--ratio must exceed 1");
      for (int i = 0; i < x->levels; ++i) o.h_max_list.push_back(s->hmax * std::pow(x->ratio, -i));
    }
    o.paths = s->paths;
    o.horizon = horizon_or(*s, problem.default_horizon);
    o.seed = s->seed;
    o.workers = s->workers;
    const bool exact = x->reference == "exact" || (x->reference == "auto" && problem.has_exact_solution());
    o.reference.kind = exact ? ReferenceSpec::Kind::Exact : ReferenceSpec::Kind::FineTamed;
    o.reference.h_ref = x->href;
    Run run("converge", sub, *s, out);
    const ConvergenceReport report = convergence_study(problem, cfg, o);
    run.table("converge", [&](std::ostream& os) { write_convergence_csv(os, report); }, to_json(report));
    if (report.fitted_order) out << "fitted order " << format_double(*report.fitted_order) << "\n";
    run.finish({{"fitted_order", optional_json(report.fitted_order)},
                {"matched_fitted_order", optional_json(report.matched_fitted_order)}});
    return kSuccess;
  };
}

Action register_steps(CLI::App& app, std::ostream& out) {
  auto s = std::make_shared<Settings>();
  s->problem = "vdp";
  s->hmax = 2.0;
  auto rhos = std::make_shared<std::vector<double>>(std::vector<double>{100.0});
  CLI::App* sub = app.add_subcommand("steps", "step-size statistics");
  add_problem_flags(sub, *s);
  add_strategy_flags(sub, *s, false);
  add_run_flags(sub, *s);
  sub->add_option("--rho", *rhos, "one or more step ratios, one row each")->take_all()->capture_default_str();
  return [=, &out] {
    const SdeProblem problem = problem_from(*s);
    const double T = horizon_or(*s, problem.default_horizon);
    Run run("steps", sub, *s, out);
    std::vector<StepStats> rows;
    json data = json::array();
    for (double rho : *rhos) {
      Settings one = *s;
      one.rho = rho;
      rows.push_back(step_statistics(problem, strategy_from(one), T, s->paths, s->seed, s->workers));
      if (rows.back().n_paths == 0) throw AllPathsDivergedError("every path diverged at rho " + format_double(rho));
      data.push_back(to_json(rows.back()));
    }
    run.table("steps", [&](std::ostream& o) { write_step_stats_csv(o, rows); }, data);
    run.finish({{"rows", data.size()}});
    return kSuccess;
  };
}

Action register_period(CLI::App& app, std::ostream& out) {
  auto s = std::make_shared<Settings>();
  s->hmax = 1.0;
  s->rho = 100.0;
  auto o = std::make_shared<PeriodStudyOptions>();
  CLI::App* sub = app.add_subcommand("period", "van der Pol period study");
  sub->add_option("--params", s->params_file, "key=value file of oscillator parameters");
  sub->add_option("--set", s->sets, "oscillator parameter override key=value")->take_all();
  sub->add_option("--hmax", s->hmax, "maximum step")->capture_default_str();
  sub->add_option("--rho", s->rho, "h_max / h_min")->capture_default_str();
  sub->add_option("--eps", o->at_epsilon, "AT tolerance")->capture_default_str();
  sub->add_option("--ald-delta", o->ald_delta, "ALD numerator")->capture_default_str();
  sub->add_option("--baseline-h", o->baseline_h, "step of the fine tamed baseline")->capture_default_str();
  add_run_flags(sub, *s);
  return [=, &out] {
    PeriodStudyOptions opts = *o;
    opts.vdp_params = problem_params(*s);
    opts.paths = s->paths;
    opts.rho = s->rho;
    opts.h_max = s->hmax;
    opts.horizon = horizon_or(*s, 100.0);
    opts.seed = s->seed;
    opts.workers = s->workers;
    Run run("period", sub, *s, out);
    const PeriodReport report = period_study(opts);
    run.table("period", [&](std::ostream& os) { write_period_csv(os, report); }, to_json(report));
    json results = json::object();
    for (const auto& r : report.rows) results[r.method] = r.rel_error;
    run.finish({{"rel_error", results}});
    return kSuccess;
  };
}

Action register_mlmc(CLI::App& app, std::ostream& out) {
  auto s = std::make_shared<Settings>();
  s->problem = "sgle-add";
  s->hmax = 1.0;
  s->rho = 100.0;
  auto m = std::make_shared<MlmcConfig>();
  auto qoi = std::make_shared<std::string>("first");
  auto target = std::make_shared<std::optional<double>>();
  CLI::App* sub = app.add_subcommand("mlmc", "multilevel Monte Carlo estimate");
  add_problem_flags(sub, *s);
  add_strategy_flags(sub, *s);
  add_run_flags(sub, *s, false);
  sub->add_option("--k", m->k, "refinement factor")->capture_default_str();
  sub->add_option("--L0", m->L0, "coarsest level")->capture_default_str();
  sub->add_option("--L", m->L, "finest level")->capture_default_str();
  sub->add_option("--target-rms", *target, "target root-mean-square accuracy");
  sub->add_option("--samples", m->fixed_schedule, "samples per level")->take_all();
  sub->add_option("--pilot", m->pilot, "pilot samples per level")->capture_default_str();
  sub->add_option("--qoi", *qoi, "quantity of interest")->check(CLI::IsMember({"first", "norm"}))->capture_default_str();
  sub->add_option("--level-hmax", m->level_h_max, "explicit h_max per level")->take_all();
  return [=, &out] {
    const SdeProblem problem = problem_from(*s);
    const StrategyConfig tmpl = strategy_from(*s);
    MlmcConfig cfg = *m;
    cfg.h_max0 = s->hmax;
    cfg.horizon = horizon_or(*s, 2.0);
    cfg.target_rms = *target;
    cfg.qoi = parse_qoi(*qoi);
    cfg.workers = s->workers;
    Run run("mlmc", sub, *s, out);
    const MlmcReport report = mlmc_estimate(problem, tmpl, cfg, s->seed);
    const json summary = to_json(report);
    run.table("mlmc", [&](std::ostream& o) { write_mlmc_csv(o, report); }, summary);
    if (s->format == "csv") {
      const json doc{{"metadata", run.metadata()}, {"data", summary}};
      run.write("mlmc_summary.json", [&](std::ostream& o) { o << doc.dump(2) << "\n"; });
    }
    out << "estimate " << format_double(report.estimate) << " +- " << format_double(report.std_error) << "\n";
    run.finish({{"estimate", report.estimate}, {"std_error", report.std_error}});
    return kSuccess;
  };
}

Action register_spde(CLI::App& app, std::ostream& out) {
  auto s = std::make_shared<Settings>();
  s->hmax = 0.05;
  s->rho = 100.0;
  auto g = std::make_shared<GalerkinConfig>();
  auto snapshots = std::make_shared<int>(5);
  auto grid = std::make_shared<int>(101);
  CLI::App* sub = app.add_subcommand("spde", "stochastic Allen-Cahn equation");
  add_strategy_flags(sub, *s);
  add_run_flags(sub, *s, false);
  sub->add_option("--J", g->J, "number of Galerkin modes")->capture_default_str();
  sub->add_option("--D", g->D, "diffusivity")->capture_default_str();
  sub->add_option("--sigma", g->sigma, "noise amplitude")->capture_default_str();
  sub->add_option("--q-decay", g->q_decay, "covariance decay exponent")->capture_default_str();
  sub->add_option("--collocation", g->collocation_points, "physical grid size (0 = 2J+2)")->capture_default_str();
  sub->add_option("--snapshots", *snapshots, "number of physical snapshots")->capture_default_str();
  sub->add_option("--grid", *grid, "points per snapshot")->capture_default_str();
  return [=, &out] {
    const SdeProblem problem = build_allen_cahn(*g);
    const StrategyConfig cfg = strategy_from(*s);
    const double T = horizon_or(*s, problem.default_horizon);
    if (*snapshots < 1) throw std::invalid_argument("--snapshots must be at least 1");
    Run run("spde", sub, *s, out);
    BrownianPath path = derive_path(s->seed, 0, problem.m);
    Trajectory traj;
    try {
      traj = simulate(problem, cfg, T, path);
    } catch (const DivergenceError& e) {
      throw AllPathsDivergedError(std::string("the trajectory diverged: ") + e.what());
    }
    std::vector<double> norms;
    for (std::size_t n = 0; n < traj.times.size(); ++n) norms.push_back(l2_norm(traj.state(n)));
    run.table("spde_trajectory", [&](std::ostream& o) { write_spde_trajectory_csv(o, traj); },
              {{"times", traj.times}, {"steps", traj.steps}, {"l2_norm", norms}});
    std::vector<std::size_t> picks;
    const std::size_t N = traj.step_count();
    for (int i = 0; i < *snapshots; ++i)
      picks.push_back(*snapshots == 1 ? N : N * static_cast<std::size_t>(i) / static_cast<std::size_t>(*snapshots - 1));
    const AllenCahnGalerkin system(*g);
    run.write("spde_snapshots.csv", [&](std::ostream& o) { write_spde_snapshots_csv(o, system, traj, picks, *grid); });
    run.finish({{"steps", N}, {"backstops", traj.backstop_count}});
    return kSuccess;
  };
}

Action register_diverge(CLI::App& app, std::ostream& out) {
  auto s = std::make_shared<Settings>();
  s->problem = "sgle-mult";
  s->paths = 1000;
  auto o = std::make_shared<DivergenceOptions>();
  CLI::App* sub = app.add_subcommand("diverge", "fixed-step Euler-Maruyama divergence demo");
  add_problem_flags(sub, *s);
  add_run_flags(sub, *s);
  sub->add_option("--steps", o->steps, "fixed step sizes")->take_all()->capture_default_str();
  sub->add_option("--moment", o->moment, "moment order p")->capture_default_str();
  return [=, &out] {
    const SdeProblem problem = problem_from(*s);
    DivergenceOptions opts = *o;
    opts.paths = s->paths;
    opts.horizon = horizon_or(*s, 5.0);
    opts.seed = s->seed;
    opts.workers = s->workers;
    Run run("diverge", sub, *s, out);
    const auto rows = divergence_demo(problem, opts);
    run.table("diverge", [&](std::ostream& os) { write_divergence_csv(os, rows); }, to_json(rows));
    run.finish();
    return kSuccess;
  };
}

/// Expands --config FILE into flags placed before the user's own flags;
/// keys the user also passed on the command line are dropped.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string file;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    }
  }
  if (file.empty() || args.size() < 2) return args;
  auto given = [&](const std::string& flag) {
    for (std::size_t i = 2; i < args.size(); ++i)
      if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> injected;
  for (const auto& [key, value] : read_key_value_file(file)) {
    const std::string flag = "--" + key;
    if (key == "config") throw std::invalid_argument("a config file cannot include another");
    if (given(flag)) continue;
    if (value == "true") {
      injected.push_back(flag);
      continue;
    }
    if (value == "false") continue;
    injected.push_back(flag);
    std::istringstream words(value);
    for (std::string w; words >> w;) injected.push_back(w);
  }
  std::vector<std::string> out(args.begin(), args.begin() + 2);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive-timestep Euler-Maruyama toolkit", "sdeadapt"};
  app.require_subcommand(1);
  std::map<std::string, Action> actions;
  actions["list-problems"] = register_list(app, out);
  actions["simulate"] = register_simulate(app, out);
  actions["converge"] = register_converge(app, out);
  actions["steps"] = register_steps(app, out);
  actions["period"] = register_period(app, out);
  actions["mlmc"] = register_mlmc(app, out);
  actions["spde"] = register_spde(app, out);
  actions["diverge"] = register_diverge(app, out);

  try {
    args = expand_config(args);
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kValidationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return actions.at(command)();
  } catch (const AllPathsDivergedError& e) {
    err << "error: " << e.what() << "\n";
    return kAllPathsDiverged;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

int run(int argc, const char* const* argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace sdeadapt::cli
