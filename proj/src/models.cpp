#include "sdeadapt/models.hpp"

#include <cmath>
#include <stdexcept>

#include "sdeadapt/io.hpp"

namespace sdeadapt {

Matrix SdeProblem::jacobian_at(const Vector& y) const {
  return jacobian ? jacobian(y) : finite_difference_jacobian(drift, y);
}

Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x) {
  const double step = std::max(1e-6, 1e-6 * x.norm());
  const Eigen::Index n = x.size();
  Matrix jac;
  Vector probe = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    probe[j] = x[j] + step;
    const Vector up = f(probe);
    probe[j] = x[j] - step;
    const Vector down = f(probe);
    probe[j] = x[j];
    if (j == 0) jac.resize(up.size(), n);
    jac.col(j) = (up - down) / (2.0 * step);
  }
  return jac;
}

namespace {

using Params = std::map<std::string, double>;

const std::map<std::string, Params>& default_tables() {
  static const std::map<std::string, Params> tables = {
      {"sgle-mult", {{"eta", 0.1}, {"lambda", 2.0}, {"sigma", 0.5}, {"x0", 1.0}, {"n_quad", 16384}}},
      {"sgle-add", {{"eta", 0.1}, {"lambda", 2.0}, {"sigma", 0.5}, {"x0", 1.0}}},
      {"vdp", {{"x1_0", 2.0}, {"x2_0", 0.0}}},
      {"langevin", {{"x1_0", 1.0}, {"x2_0", 1.0}}},
      {"sir",
       {{"x1_0", 0.5}, {"x2_0", 0.3}, {"x3_0", 0.2}, {"alpha", 5.0}, {"beta", 5.0}, {"gamma", 5.0},
        {"delta", 5.0}, {"coef_min", 0.0}, {"coef_max", 10.0}, {"randomize", 1.0}}},
      {"lv",
       {{"x1_0", 5.0}, {"x2_0", 10.0}, {"alpha", 0.5}, {"beta", 0.5}, {"gamma", 0.5}, {"delta", 0.5},
        {"sigma1", 0.01}, {"sigma2", 0.01}, {"coef_min", 0.0}, {"coef_max", 1.0}, {"randomize", 1.0}}},
      {"pk", {{"x0", 0.5}}},
      {"poly2d", {{"nu", 2.0}, {"x1_0", -1.0}, {"x2_0", -1.0}}},
      {"cir", {{"kappa", 0.1}, {"theta", 0.5}, {"sigma", 0.5}, {"x0", 1.0}}},
  };
  return tables;
}

void require(bool ok, const std::string& problem, const std::string& what) {
  if (!ok) throw std::invalid_argument(problem + ": parameter out of range: " + what);
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Matrix scalar_matrix(double x) { return Matrix::Constant(1, 1, x); }

SdeProblem make_sgle(const std::string& name, const Params& p) {
  const SgleParams sp{p.at("eta"), p.at("lambda"), p.at("sigma"), p.at("x0")};
  require(sp.eta >= 0.0, name, "eta >= 0");
  require(sp.lambda > 0.0, name, "lambda > 0");
  require(sp.sigma >= 0.0, name, "sigma >= 0");
  require(sp.x0 > 0.0, name, "x0 > 0");
  const bool multiplicative = name == "sgle-mult";
  const double linear = sp.eta + 0.5 * sp.sigma * sp.sigma;

  SdeProblem prob;
  prob.name = name;
  prob.d = prob.m = 1;
  prob.drift = [linear, lambda = sp.lambda](const Vector& x) {
    return Vector::Constant(1, linear * x[0] - lambda * x[0] * x[0] * x[0]);
  };
  prob.jacobian = [linear, lambda = sp.lambda](const Vector& x) {
    return scalar_matrix(linear - 3.0 * lambda * x[0] * x[0]);
  };
  if (multiplicative) {
    prob.diffusion = [sigma = sp.sigma](const Vector& x) { return scalar_matrix(sigma * x[0]); };
    prob.diffusion_action = [sigma = sp.sigma](const Vector& x, const Vector& dw) {
      return Vector::Constant(1, sigma * x[0] * dw[0]);
    };
    const int n_quad = static_cast<int>(p.at("n_quad"));
    require(n_quad >= 2, name, "n_quad >= 2");
    prob.exact_solution = [sp, n_quad](double t, BrownianPath& path) {
      return Vector::Constant(1, sgle_exact(sp, t, path, n_quad));
    };
  } else {
    prob.diffusion = [sigma = sp.sigma](const Vector&) { return scalar_matrix(sigma); };
    prob.diffusion_action = [sigma = sp.sigma](const Vector&, const Vector& dw) {
      return Vector::Constant(1, sigma * dw[0]);
    };
  }
  prob.initial_state = Vector::Constant(1, sp.x0);
  prob.default_horizon = 2.0;
  return prob;
}

SdeProblem make_vdp(const Params& p) {
  SdeProblem prob;
  prob.name = "vdp";
  prob.d = 2;
  prob.m = 1;
  prob.drift = [](const Vector& x) { return vec({x[1], (1.0 - x[0] * x[0]) * x[1] - x[0]}); };
  prob.jacobian = [](const Vector& x) {
    Matrix j(2, 2);
    j << 0.0, 1.0, -2.0 * x[0] * x[1] - 1.0, 1.0 - x[0] * x[0];
    return j;
  };
  prob.diffusion = [](const Vector&) {
    Matrix g(2, 1);
    g << 0.0, 1.0;
    return g;
  };
  prob.diffusion_action = [](const Vector&, const Vector& dw) { return vec({0.0, dw[0]}); };
  prob.initial_state = vec({p.at("x1_0"), p.at("x2_0")});
  prob.default_horizon = 100.0;
  return prob;
}

double langevin_scale(double x) { return 4.0 * (5.0 * x * x + 1.0) / (5.0 * (x * x + 1.0)); }

SdeProblem make_langevin(const Params& p) {
  SdeProblem prob;
  prob.name = "langevin";
  prob.d = 2;
  prob.m = 1;
  prob.drift = [](const Vector& x) {
    const double s = langevin_scale(x[0]);
    return vec({x[1], -0.5 * x[1] * s * s});
  };
  prob.jacobian = [](const Vector& x) {
    const double s = langevin_scale(x[0]);
    const double q = x[0] * x[0] + 1.0;
    const double ds = 32.0 * x[0] / (5.0 * q * q);
    Matrix j(2, 2);
    j << 0.0, 1.0, -x[1] * s * ds, -0.5 * s * s;
    return j;
  };
  prob.diffusion = [](const Vector& x) {
    Matrix g(2, 1);
    g << 0.0, langevin_scale(x[0]);
    return g;
  };
  prob.diffusion_action = [](const Vector& x, const Vector& dw) {
    return vec({0.0, langevin_scale(x[0]) * dw[0]});
  };
  prob.initial_state = vec({p.at("x1_0"), p.at("x2_0")});
  prob.default_horizon = 20.0;
  return prob;
}

struct RateCoefficients {
  double alpha, beta, gamma, delta;
};

RateCoefficients draw_rates(std::uint64_t seed, double lo, double hi) {
  NormalStream stream(seed);
  auto u = [&] { return lo + (hi - lo) * stream.uniform(); };
  const double a = u();
  const double b = u();
  const double g = u();
  const double d = u();
  return {a, b, g, d};
}

SdeProblem make_sir(const Params& p) {
  require(p.at("coef_min") >= 0.0 && p.at("coef_min") <= p.at("coef_max"), "sir", "0 <= coef_min <= coef_max");
  const RateCoefficients c{p.at("alpha"), p.at("beta"), p.at("gamma"), p.at("delta")};
  require(c.alpha >= 0 && c.beta >= 0 && c.gamma >= 0 && c.delta >= 0, "sir", "rates >= 0");
  SdeProblem prob;
  prob.name = "sir";
  prob.d = 3;
  prob.m = 2;
  prob.drift = [c](const Vector& x) {
    return vec({-c.alpha * x[0] * x[1] - c.delta * x[0] + c.delta,
                c.alpha * x[0] * x[1] - (c.gamma + c.delta) * x[1], c.gamma * x[1] - c.delta * x[2]});
  };
  prob.jacobian = [c](const Vector& x) {
    Matrix j(3, 3);
    j << -c.alpha * x[1] - c.delta, -c.alpha * x[0], 0.0,  //
        c.alpha * x[1], c.alpha * x[0] - (c.gamma + c.delta), 0.0,  //
        0.0, c.gamma, -c.delta;
    return j;
  };
  prob.diffusion = [c](const Vector& x) {
    Matrix g = Matrix::Zero(3, 2);
    g(0, 0) = -c.beta * x[0] * x[1];
    g(1, 1) = c.beta * x[0] * x[1];
    return g;
  };
  prob.initial_state = vec({p.at("x1_0"), p.at("x2_0"), p.at("x3_0")});
  prob.default_horizon = 2.0;
  if (p.at("randomize") != 0.0) {
    prob.coefficient_sampler = [p](std::uint64_t seed) {
      const RateCoefficients r = draw_rates(seed, p.at("coef_min"), p.at("coef_max"));
      Params q = p;
      q["alpha"] = r.alpha;
      q["beta"] = r.beta;
      q["gamma"] = r.gamma;
      q["delta"] = r.delta;
      q["randomize"] = 0.0;
      SdeProblem drawn = make_sir(q);
      drawn.params = q;
      return drawn;
    };
  }
  return prob;
}

SdeProblem make_lv(const Params& p) {
  require(p.at("coef_min") >= 0.0 && p.at("coef_min") <= p.at("coef_max"), "lv", "0 <= coef_min <= coef_max");
  require(p.at("sigma1") >= 0.0 && p.at("sigma2") >= 0.0, "lv", "sigma1, sigma2 >= 0");
  const RateCoefficients c{p.at("alpha"), p.at("beta"), p.at("gamma"), p.at("delta")};
  const double s1 = p.at("sigma1");
  const double s2 = p.at("sigma2");
  SdeProblem prob;
  prob.name = "lv";
  prob.d = 2;
  prob.m = 2;
  prob.drift = [c](const Vector& x) {
    return vec({x[0] * (c.alpha - c.beta * x[1]), x[1] * (c.gamma * x[0] - c.delta)});
  };
  prob.jacobian = [c](const Vector& x) {
    Matrix j(2, 2);
    j << c.alpha - c.beta * x[1], -c.beta * x[0], c.gamma * x[1], c.gamma * x[0] - c.delta;
    return j;
  };
  prob.diffusion = [s1, s2](const Vector& x) {
    Matrix g = Matrix::Zero(2, 2);
    g(0, 0) = s1 * x[0];
    g(1, 1) = s2 * x[1];
    return g;
  };
  prob.diffusion_action = [s1, s2](const Vector& x, const Vector& dw) {
    return vec({s1 * x[0] * dw[0], s2 * x[1] * dw[1]});
  };
  prob.initial_state = vec({p.at("x1_0"), p.at("x2_0")});
  prob.default_horizon = 20.0;
  if (p.at("randomize") != 0.0) {
    prob.coefficient_sampler = [p](std::uint64_t seed) {
      const RateCoefficients r = draw_rates(seed, p.at("coef_min"), p.at("coef_max"));
      Params q = p;
      q["alpha"] = r.alpha;
      q["beta"] = r.beta;
      q["gamma"] = r.gamma;
      q["delta"] = r.delta;
      q["randomize"] = 0.0;
      SdeProblem drawn = make_lv(q);
      drawn.params = q;
      return drawn;
    };
  }
  return prob;
}

SdeProblem make_pk(const Params& p) {
  SdeProblem prob;
  prob.name = "pk";
  prob.d = prob.m = 1;
  prob.drift = [](const Vector& v) {
    const double x = v[0];
    return Vector::Constant(1, 0.5 - x + x * (1.0 - x) + 0.5 * x * (1.0 - x) * (1.0 - 2.0 * x));
  };
  prob.jacobian = [](const Vector& v) {
    const double x = v[0];
    return scalar_matrix(0.5 - 5.0 * x + 3.0 * x * x);
  };
  prob.diffusion = [](const Vector& v) { return scalar_matrix(v[0] * (1.0 - v[0])); };
  prob.initial_state = Vector::Constant(1, p.at("x0"));
  prob.default_horizon = 100.0;
  return prob;
}

SdeProblem make_poly2d(const Params& p) {
  const double nu = p.at("nu");
  require(nu > 0.0, "poly2d", "nu > 0");
  Matrix a(2, 2);
  a << 0.807019, 0.589848, 0.080506, 0.477723;
  Matrix b(2, 2);
  b << 0.99133, 0.60672, 0.29234, 0.96434;
  Matrix g(2, 2);
  g << 0.5, 0.0, 0.0, 0.5;

  SdeProblem prob;
  prob.name = "poly2d";
  prob.d = prob.m = 2;
  // (beta X)|X|^nu with |X| the Euclidean norm.
  prob.drift = [a, b, nu](const Vector& x) -> Vector { return a * x - std::pow(x.norm(), nu) * (b * x); };
  prob.jacobian = [a, b, nu](const Vector& x) -> Matrix {
    const double r = x.norm();
    Matrix j = a - std::pow(r, nu) * b;
    if (r > 0.0) j -= nu * std::pow(r, nu - 2.0) * (b * x) * x.transpose();
    return j;
  };
  prob.diffusion = [g](const Vector&) { return g; };
  prob.initial_state = vec({p.at("x1_0"), p.at("x2_0")});
  prob.default_horizon = 10.0;
  return prob;
}

SdeProblem make_cir(const Params& p) {
  const double kappa = p.at("kappa");
  const double theta = p.at("theta");
  const double sigma = p.at("sigma");
  require(kappa > 0.0, "cir", "kappa > 0");
  require(sigma >= 0.0, "cir", "sigma >= 0");
  SdeProblem prob;
  prob.name = "cir";
  prob.d = prob.m = 1;
  prob.drift = [kappa, theta](const Vector& x) { return Vector::Constant(1, kappa * (theta - x[0])); };
  prob.jacobian = [kappa](const Vector&) { return scalar_matrix(-kappa); };
  prob.diffusion = [sigma](const Vector& x) { return scalar_matrix(sigma * std::sqrt(std::abs(x[0]))); };
  prob.initial_state = Vector::Constant(1, p.at("x0"));
  prob.default_horizon = 200.0;
  prob.within_theory = false;
  return prob;
}

}  // namespace

const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names = {"sgle-mult", "sgle-add", "vdp",    "langevin", "sir",
                                                 "lv",        "pk",       "poly2d", "cir"};
  return names;
}

std::map<std::string, double> problem_defaults(const std::string& name) {
  const auto& tables = default_tables();
  auto it = tables.find(name);
  if (it == tables.end()) {
    std::string valid;
    for (const auto& n : problem_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown problem '" + name + "' (valid: " + valid + ")");
  }
  return it->second;
}

SdeProblem make_problem(const std::string& name, const ProblemParams& params) {
  Params merged = problem_defaults(name);
  for (const auto& [key, value] : params.values) {
    if (!merged.count(key)) throw std::invalid_argument(name + ": unknown parameter '" + key + "'");
    if (!std::isfinite(value)) throw std::invalid_argument(name + ": parameter '" + key + "' must be finite");
    merged[key] = value;
  }
  SdeProblem prob;
  if (name == "sgle-mult" || name == "sgle-add") {
    prob = make_sgle(name, merged);
  } else if (name == "vdp") {
    prob = make_vdp(merged);
  } else if (name == "langevin") {
    prob = make_langevin(merged);
  } else if (name == "sir") {
    prob = make_sir(merged);
  } else if (name == "lv") {
    prob = make_lv(merged);
  } else if (name == "pk") {
    prob = make_pk(merged);
  } else if (name == "poly2d") {
    prob = make_poly2d(merged);
  } else {
    prob = make_cir(merged);
  }
  prob.params = merged;
  prob.coefficient_seed = params.seed;
  return prob;
}

SdeProblem realise(const SdeProblem& problem, std::uint64_t experiment_seed, std::uint64_t index) {
  if (!problem.coefficient_sampler) return problem;
  const std::uint64_t seed = derive_seed(mix64(experiment_seed) ^ problem.coefficient_seed, index);
  SdeProblem drawn = problem.coefficient_sampler(seed);
  drawn.coefficient_seed = problem.coefficient_seed;
  return drawn;
}

ProblemParams load_problem_params(const std::string& path) {
  ProblemParams out;
  for (const auto& [key, text] : read_key_value_file(path)) {
    if (key == "seed") {
      out.seed = std::stoull(text);
      continue;
    }
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(path + ": not a number for '" + key + "'");
    out.values[key] = value;
  }
  return out;
}

double sgle_exact(const SgleParams& params, double t, BrownianPath& path, int n_quad) {
  if (!(t >= 0.0)) throw std::invalid_argument("sgle_exact: t must be >= 0");
  if (n_quad < 2) throw std::invalid_argument("sgle_exact: n_quad must be >= 2");
  if (path.dimension() != 1) throw std::invalid_argument("sgle_exact: path must be one-dimensional");
  if (t == 0.0) return params.x0;
  const double dt = t / n_quad;
  auto integrand = [&](double s) {
    return std::exp(2.0 * params.eta * s + 2.0 * params.sigma * path.sample_at(s)[0]);
  };
  double sum = 0.5 * integrand(0.0);
  for (int i = 1; i < n_quad; ++i) sum += integrand(t * i / n_quad);
  const double w_t = path.sample_at(t)[0];
  sum += 0.5 * std::exp(2.0 * params.eta * t + 2.0 * params.sigma * w_t);
  const double integral = sum * dt;
  return params.x0 * std::exp(params.eta * t + params.sigma * w_t) /
         std::sqrt(1.0 + 2.0 * params.x0 * params.x0 * params.lambda * integral);
}

}  // namespace sdeadapt
