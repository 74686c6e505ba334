#include "sdeadapt/spde.hpp"

#include "sdeadapt/io.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

namespace sdeadapt {

namespace {

double basis_function(int i, double x) {
  if (i == 0) return 1.0;
  const double arg = 2.0 * std::numbers::pi * ((i + 1) / 2) * x;
  return std::numbers::sqrt2 * (i % 2 == 1 ? std::cos(arg) : std::sin(arg));
}

}  // namespace

void GalerkinConfig::validate() const {
  if (J < 2) throw std::invalid_argument("Galerkin truncation needs J >= 2");
  if (collocation_points != 0 && collocation_points < 2 * J)
    throw std::invalid_argument("collocation grid must have at least 2J points");
  if (!(D >= 0) || !std::isfinite(D)) throw std::invalid_argument("diffusivity must be non-negative");
  if (!(sigma >= 0) || !std::isfinite(sigma)) throw std::invalid_argument("noise amplitude must be non-negative");
  if (!(q_decay >= 0) || !std::isfinite(q_decay)) throw std::invalid_argument("covariance decay must be non-negative");
}

AllenCahnGalerkin::AllenCahnGalerkin(const GalerkinConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int J = cfg_.J;
  const int M = cfg_.grid_size();
  basis_.resize(M, J);
  for (int p = 0; p < M; ++p)
    for (int i = 0; i < J; ++i) basis_(p, i) = basis_function(i, static_cast<double>(p) / M);
  lambda_.resize(J);
  noise_.resize(J);
  for (int i = 0; i < J; ++i) {
    const double w = 2.0 * std::numbers::pi * cfg_.wavenumber(i);
    lambda_[i] = 1.0 - cfg_.D * w * w;
    noise_[i] = cfg_.sigma * std::sqrt(std::pow(1.0 + w * w, -cfg_.q_decay));
  }
}

Vector AllenCahnGalerkin::to_physical(const Vector& coeffs) const { return basis_ * coeffs; }

Vector AllenCahnGalerkin::to_coefficients(const Vector& values) const {
  return basis_.transpose() * values / static_cast<double>(basis_.rows());
}

Vector AllenCahnGalerkin::cubic(const Vector& coeffs) const {
  const Vector u = to_physical(coeffs);
  return to_coefficients(u.array().cube().matrix());
}

Vector AllenCahnGalerkin::drift(const Vector& coeffs) const {
  return lambda_.cwiseProduct(coeffs) - cubic(coeffs);
}

Matrix AllenCahnGalerkin::jacobian(const Vector& coeffs) const {
  const Vector u = to_physical(coeffs);
  const Vector w = 3.0 * u.array().square() / static_cast<double>(basis_.rows());
  Matrix jac = -basis_.transpose() * w.asDiagonal() * basis_;
  jac.diagonal() += lambda_;
  return jac;
}

Vector AllenCahnGalerkin::evaluate(const Vector& coeffs, const std::vector<double>& x) const {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(x.size()));
  for (std::size_t p = 0; p < x.size(); ++p)
    for (int i = 0; i < cfg_.J; ++i) out[static_cast<Eigen::Index>(p)] += coeffs[i] * basis_function(i, x[p]);
  return out;
}

Vector AllenCahnGalerkin::sine_initial_state() const {
  Vector c = Vector::Zero(cfg_.J);
  c[2] = 1.0 / std::numbers::sqrt2;
  return c;
}

SdeProblem build_allen_cahn(const GalerkinConfig& cfg) {
  auto system = std::make_shared<const AllenCahnGalerkin>(cfg);
  SdeProblem p;
  p.name = "allen-cahn";
  p.d = cfg.J;
  p.m = cfg.J;
  p.drift = [system](const Vector& c) { return system->drift(c); };
  p.jacobian = [system](const Vector& c) { return system->jacobian(c); };
  p.diffusion = [system](const Vector&) {
    Vector s(system->config().J);
    for (int i = 0; i < s.size(); ++i) s[i] = system->noise_scale(i);
    return Matrix(s.asDiagonal());
  };
  p.diffusion_action = [system](const Vector&, const Vector& dw) {
    Vector out(dw.size());
    for (int i = 0; i < dw.size(); ++i) out[i] = system->noise_scale(i) * dw[i];
    return out;
  };
  p.initial_state = system->sine_initial_state();
  p.default_horizon = 10.0;
  p.params = {{"J", cfg.J},
              {"D", cfg.D},
              {"sigma", cfg.sigma},
              {"q_decay", cfg.q_decay},
              {"collocation_points", cfg.grid_size()}};
  return p;
}

double l2_norm(const Vector& state) { return state.norm(); }

void write_spde_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  if (!traj.states_recorded) throw std::invalid_argument("trajectory states were not recorded");
  CsvWriter csv(out);
  csv.header({"n", "t", "h", "backstopped", "l2_norm"});
  for (std::size_t n = 0; n < traj.times.size(); ++n) {
    csv.field(n).field(traj.times[n]);
    if (n == 0)
      csv.field("").field("");
    else
      csv.field(traj.steps[n - 1]).field(traj.backstopped[n - 1] != 0);
    csv.field(l2_norm(traj.state(n)));
    csv.end_row();
  }
}

void write_spde_snapshots_csv(std::ostream& out, const AllenCahnGalerkin& system, const Trajectory& traj,
                              const std::vector<std::size_t>& step_indices, int grid_points) {
  if (!traj.states_recorded) throw std::invalid_argument("trajectory states were not recorded");
  if (grid_points < 2) throw std::invalid_argument("snapshot grid needs at least 2 points");
  std::vector<double> x(static_cast<std::size_t>(grid_points));
  for (int p = 0; p < grid_points; ++p) x[p] = static_cast<double>(p) / (grid_points - 1);
  std::vector<std::string> header{"x"};
  std::vector<Vector> columns;
  for (std::size_t n : step_indices) {
    if (n >= traj.times.size()) throw std::out_of_range("snapshot index past the end of the trajectory");
    header.push_back("t=" + format_double(traj.times[n]));
    columns.push_back(system.evaluate(traj.state(n), x));
  }
  CsvWriter csv(out);
  csv.header(header);
  for (int p = 0; p < grid_points; ++p) {
    csv.field(x[p]);
    for (const auto& c : columns) csv.field(c[p]);
    csv.end_row();
  }
}

}  // namespace sdeadapt
