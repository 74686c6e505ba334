#pragma once

#include "sdeadapt/brownian.hpp"
#include "sdeadapt/common.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace sdeadapt {

/// Named real parameters overriding a problem's defaults, plus the seed of
/// the per-realisation coefficient sampler.
struct ProblemParams {
  std::map<std::string, double> values;
  std::uint64_t seed = 0;
};

/// An Itô SDE dX = f(X) dt + g(X) dW with X in R^d and W in R^m.
///
/// All evaluators are pure and may be called concurrently.
struct SdeProblem {
  std::string name;
  int d = 1;
  int m = 1;
  std::function<Vector(const Vector&)> drift;
  std::function<Matrix(const Vector&)> diffusion;
  /// Analytic Df; empty means "use central finite differences".
  std::function<Matrix(const Vector&)> jacobian;
  /// Optional fast path for g(y) * dw; empty means diffusion(y) * dw.
  std::function<Vector(const Vector&, const Vector&)> diffusion_action;
  Vector initial_state;
  /// Optional X(t) evaluated on a given Wiener path.
  std::function<Vector(double, BrownianPath&)> exact_solution;
  /// Optional randomiser returning this problem with freshly drawn
  /// coefficients. Called once per realisation before simulating.
  std::function<SdeProblem(std::uint64_t)> coefficient_sampler;
  std::uint64_t coefficient_seed = 0;
  double default_horizon = 1.0;
  /// False when g breaks the global Lipschitz condition (CIR).
  bool within_theory = true;
  /// Resolved parameter values, defaults merged with overrides.
  std::map<std::string, double> params;

  Vector noise(const Vector& y, const Vector& dw) const {
    return diffusion_action ? diffusion_action(y, dw) : Vector(diffusion(y) * dw);
  }
  /// Analytic Jacobian when available, otherwise the finite-difference one.
  Matrix jacobian_at(const Vector& y) const;
  bool has_exact_solution() const { return static_cast<bool>(exact_solution); }
};

/// Central differences with step max(1e-6, 1e-6 * |x|).
Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x);

/// The registry names, in a stable order.
const std::vector<std::string>& problem_names();

/// Default parameter table for a registry problem.
std::map<std::string, double> problem_defaults(const std::string& name);

/// Builds a registry problem. Throws std::invalid_argument for unknown
/// names, unknown parameter keys and out-of-range values.
SdeProblem make_problem(const std::string& name, const ProblemParams& params = {});

/// The problem to simulate for realisation `index`: a fresh coefficient draw
/// when the problem randomises, otherwise a copy of `problem`.
SdeProblem realise(const SdeProblem& problem, std::uint64_t experiment_seed, std::uint64_t index);

/// Loads ProblemParams from a key=value file; the key "seed" sets the
/// sampler seed, every other key is a parameter override.
ProblemParams load_problem_params(const std::string& path);

struct SgleParams {
  double eta = 0.1;
  double lambda = 2.0;
  double sigma = 0.5;
  double x0 = 1.0;
};

/// Closed-form solution of the multiplicative-noise Ginzburg–Landau
/// equation at time t on `path`, with the exponential integral done by the
/// composite trapezoid rule on n_quad uniform subintervals (bridge queries).
double sgle_exact(const SgleParams& params, double t, BrownianPath& path, int n_quad);

}  // namespace sdeadapt
