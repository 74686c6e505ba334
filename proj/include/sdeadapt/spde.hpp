#pragma once

#include "sdeadapt/models.hpp"
#include "sdeadapt/stepping.hpp"

#include <iosfwd>
#include <vector>

namespace sdeadapt {

/// Spectral Galerkin truncation of du = (D u_xx + u - u^3) dt + sigma dW on
/// the periodic unit interval.
///
/// Coefficient i refers to the orthonormal basis function
///   i = 0: 1,  i odd: sqrt(2) cos(2 pi k x),  i even: sqrt(2) sin(2 pi k x)
/// with wavenumber k = (i + 1) / 2.
struct GalerkinConfig {
  int J = 100;
  double D = 0.01;
  double sigma = 0.5;
  double q_decay = 2.0;
  /// Physical grid for the cubic term; 0 picks 2J + 2, which is alias free.
  int collocation_points = 0;

  int wavenumber(int i) const { return (i + 1) / 2; }
  int grid_size() const { return collocation_points > 0 ? collocation_points : 2 * J + 2; }
  void validate() const;
};

class AllenCahnGalerkin {
 public:
  explicit AllenCahnGalerkin(const GalerkinConfig& cfg);

  const GalerkinConfig& config() const { return cfg_; }
  /// Linear eigenvalue 1 - D (2 pi k)^2 of mode i.
  double eigenvalue(int i) const { return lambda_[i]; }
  /// Standard deviation sigma sqrt(q_k) of the noise on mode i.
  double noise_scale(int i) const { return noise_[i]; }

  Vector to_physical(const Vector& coeffs) const;
  Vector to_coefficients(const Vector& values) const;
  /// P_J(u^3) evaluated by collocation.
  Vector cubic(const Vector& coeffs) const;
  Vector drift(const Vector& coeffs) const;
  Matrix jacobian(const Vector& coeffs) const;
  /// u(x) at arbitrary points in [0, 1].
  Vector evaluate(const Vector& coeffs, const std::vector<double>& x) const;
  /// Coefficients of sin(2 pi x).
  Vector sine_initial_state() const;

 private:
  GalerkinConfig cfg_;
  Matrix basis_;  ///< grid_size x J
  Vector lambda_;
  Vector noise_;
};

/// The Galerkin system as an SdeProblem with d = m = J.
SdeProblem build_allen_cahn(const GalerkinConfig& cfg);

/// L2(0,1) norm of the field, equal to the coefficient norm by Parseval.
double l2_norm(const Vector& state);

/// Trajectory CSV (n, t, h, backstopped, l2_norm).
void write_spde_trajectory_csv(std::ostream& out, const Trajectory& traj);

/// Physical snapshots: columns x, then u at each requested step index.
void write_spde_snapshots_csv(std::ostream& out, const AllenCahnGalerkin& system, const Trajectory& traj,
                              const std::vector<std::size_t>& step_indices, int grid_points);

}  // namespace sdeadapt
