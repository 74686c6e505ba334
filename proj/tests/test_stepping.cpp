#include <doctest.h>

#include <cmath>
#include <sstream>

#include "admissibility.hpp"
#include "sdeadapt/stepping.hpp"
#include "stats_helpers.hpp"

using namespace sdeadapt;

namespace {

StrategyConfig at_config(double h_max, double rho, std::optional<double> eps = std::nullopt) {
  StrategyConfig cfg;
  cfg.kind = StrategyKind::AT;
  cfg.h_max = h_max;
  cfg.rho = rho;
  cfg.epsilon = eps;
  return cfg;
}

SdeProblem linear_problem(double a, double b) {
  SdeProblem p;
  p.name = "linear";
  p.d = p.m = 1;
  p.drift = [a](const Vector& x) { return Vector::Constant(1, a * x[0]); };
  p.diffusion = [b](const Vector&) { return Matrix::Constant(1, 1, b); };
  p.initial_state = Vector::Constant(1, 1.0);
  return p;
}

Vector scalar(double x) { return Vector::Constant(1, x); }

}  // namespace

TEST_CASE("strategy names round trip") {
  for (const auto& name : strategy_names()) CHECK(to_string(parse_strategy(name)) == name);
  CHECK_THROWS_AS(parse_strategy("rk4"), std::invalid_argument);
}

TEST_CASE("config defaults and validation") {
  const StrategyConfig cfg = at_config(0.5, 10.0);
  CHECK(cfg.h_min() == 0.5 / 10.0);
  CHECK(cfg.resolved_epsilon() == doctest::Approx(0.9 * 0.25 / 1.5));
  CHECK(cfg.resolved_delta() <= cfg.h_max);
  for (double h : {1e-3, 0.1, 1.0, 4.0}) {
    const double eps = 0.999 * max_admissible_epsilon(h);
    CHECK(delta_from_epsilon(eps) <= h);
  }
  CHECK_NOTHROW(cfg.validate());
  CHECK_THROWS(at_config(0.5, 0.5).validate());
  CHECK_THROWS(at_config(-1.0, 2.0).validate());
  CHECK_THROWS(at_config(1.0, 2.0, 0.5).validate());
  StrategyConfig ald;
  ald.kind = StrategyKind::ALD;
  ald.h_max = 1.0;
  ald.rho = 10.0;
  ald.delta = 2.0;
  CHECK_THROWS(ald.validate());
  ald.delta = 0.5;
  CHECK_NOTHROW(ald.validate());
  StrategyConfig basin = ald;
  basin.kind = StrategyKind::Basin;
  basin.beta_exp = 1.0;
  CHECK_THROWS(basin.validate());
}

TEST_CASE("AT proposals") {
  const SdeProblem sgle = make_problem("sgle-mult");
  SUBCASE("vanishing drift gives h_max") { CHECK(propose_step(scalar(0.0), sgle, at_config(1.0, 100.0)) == 1.0); }
  SUBCASE("interior step") {
    // delta(0.01) = (0.01 + sqrt(0.0401)) / 2, |f(1)| = 1.775
    const double h = propose_step(scalar(1.0), sgle, at_config(1.0, 100.0, 0.01));
    CHECK(h == doctest::Approx(0.059225308153523344).epsilon(1e-14));
  }
  SUBCASE("huge drift clamps to h_min") {
    CHECK(propose_step(scalar(100.0), sgle, at_config(1.0, 100.0, 0.01)) == 0.01);
  }
}

TEST_CASE("other strategies follow their formulas") {
  const SdeProblem vdp = make_problem("vdp");
  const Vector y = (Vector(2) << 0.7, -0.4).finished();
  const Vector fy = vdp.drift(y);
  StrategyConfig cfg;
  cfg.h_max = 10.0;
  cfg.rho = 1e6;
  cfg.delta = 0.3;
  cfg.c_growth = 1.5;
  cfg.beta_exp = 3.0;
  auto with = [&](StrategyKind k) {
    cfg.kind = k;
    return propose_step(y, vdp, cfg);
  };
  CHECK(with(StrategyKind::ALD) == doctest::Approx(0.3 / vdp.jacobian(y).norm()));
  CHECK(with(StrategyKind::Basin) == doctest::Approx(0.3 / std::pow(y.norm(), 2.0)));
  CHECK(with(StrategyKind::AdmI) == doctest::Approx(0.3 / fy.norm()));
  CHECK(with(StrategyKind::AdmII) == doctest::Approx(0.3 / (1.0 + std::pow(y.norm(), 2.5))));
  CHECK(with(StrategyKind::AdmIII) == doctest::Approx(0.3 * y.norm() / fy.norm()));
  CHECK(with(StrategyKind::AdmIV) == doctest::Approx(0.3 * y.norm() / (1.0 + std::pow(y.norm(), 2.5))));
  CHECK(with(StrategyKind::FG) == doctest::Approx(0.3 * y.squaredNorm() / fy.squaredNorm()));
  CHECK(with(StrategyKind::FixedEM) == 10.0);
  // 0/0 at the origin is treated as unconstrained
  cfg.kind = StrategyKind::FG;
  CHECK(propose_step(Vector::Zero(2), vdp, cfg) == 10.0);
}

TEST_CASE("proposals do not depend on generator state") {
  const SdeProblem sgle = make_problem("sgle-mult");
  const StrategyConfig cfg = at_config(0.25, 100.0);
  const double first = propose_step(scalar(1.3), sgle, cfg);
  BrownianPath noise(1, 1);
  for (int i = 1; i < 100; ++i) noise.sample_at(0.01 * i);
  CHECK(propose_step(scalar(1.3), sgle, cfg) == first);
}

TEST_CASE("backstop step") {
  // y = 1, h = h_min = 0.01, f = -1.775, g = 0.5, dW = 0.1
  const Vector drift = drift_increment(scalar(-1.775), 0.01, 0.01);
  CHECK(1.0 + drift[0] + 0.5 * 0.1 == doctest::Approx(1.0325595676737902).epsilon(1e-14));

  // Forcing the clamp: huge drift with AT sends h to h_min and tames.
  const SdeProblem sgle = make_problem("sgle-mult");
  BrownianPath path(9, 1);
  const StepResult r = step(scalar(3.0), 0.0, sgle, at_config(1.0, 100.0, 0.01), path, 2.0);
  CHECK(r.h == 0.01);
  CHECK(r.backstopped);
  const double f = sgle.drift(scalar(3.0))[0];
  const double dw = path.stored(0.01)[0];
  CHECK(r.y[0] == doctest::Approx(3.0 + 0.01 * f / (1.0 + 0.01 * std::abs(f)) + 0.5 * 3.0 * dw).epsilon(1e-14));
}

TEST_CASE("zero coefficients leave the state alone") {
  SdeProblem zero = linear_problem(0.0, 0.0);
  BrownianPath path(2, 1);
  for (auto kind : {StrategyKind::AT, StrategyKind::FixedEM, StrategyKind::FixedTamed}) {
    StrategyConfig cfg = at_config(0.3, 4.0);
    cfg.kind = kind;
    const StepResult r = step(scalar(1.25), 0.0, zero, cfg, path, 1.0);
    CHECK(r.y[0] == 1.25);
  }
}

TEST_CASE("last step lands on the horizon") {
  const SdeProblem sgle = make_problem("sgle-mult");
  const StrategyConfig cfg = at_config(0.25, 100.0);
  BrownianPath path(4, 1);
  const double t = 2.0 - cfg.h_min() / 2.0;
  const StepResult r = step(scalar(1.0), t, sgle, cfg, path, 2.0);
  CHECK(r.h == 2.0 - t);
  CHECK(r.t == 2.0);
  CHECK(r.backstopped);
  CHECK(r.truncated);
}

TEST_CASE("fixed tamed with h = T/N takes N equal steps") {
  const SdeProblem sgle = make_problem("sgle-mult");
  for (int n : {7, 100, 20000}) {
    StrategyConfig cfg;
    cfg.kind = StrategyKind::FixedTamed;
    cfg.h_max = 2.0 / n;
    BrownianPath path(n, 1);
    const Trajectory traj = simulate(sgle, cfg, 2.0, path, {false});
    CHECK(traj.step_count() == static_cast<std::size_t>(n));
    CHECK(traj.final_time() == 2.0);
    for (double h : traj.steps) CHECK(h == doctest::Approx(cfg.h_max).epsilon(1e-12));
    CHECK(traj.backstop_count == static_cast<std::size_t>(n));
  }
}

TEST_CASE("AT with rho = 1 reproduces fixed tamed Euler") {
  for (const std::string name : {"sgle-mult", "vdp"}) {
    const SdeProblem prob = make_problem(name);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      BrownianPath a = derive_path(seed, 0, prob.m);
      BrownianPath b = derive_path(seed, 0, prob.m);
      StrategyConfig fixed;
      fixed.kind = StrategyKind::FixedTamed;
      fixed.h_max = 0.03;
      const Trajectory adaptive = simulate(prob, at_config(0.03, 1.0), 2.0, a);
      const Trajectory tamed = simulate(prob, fixed, 2.0, b);
      CHECK(adaptive.states == tamed.states);
      CHECK(adaptive.times == tamed.times);
    }
  }
}

TEST_CASE("un-clamped steps respect the admissibility bounds") {
  for (const std::string name : {"sgle-mult", "vdp"}) {
    const SdeProblem prob = make_problem(name);
    for (StrategyKind kind : {StrategyKind::AT, StrategyKind::AdmI, StrategyKind::AdmIII, StrategyKind::FG}) {
      StrategyConfig c;
      c.kind = kind;
      c.h_max = 0.5;
      c.rho = 50.0;
      const auto tally = testing::check_admissibility(prob, c, 5.0, 5, 3);
      INFO(name << " " << to_string(kind));
      CHECK(tally.unclamped > 0);
      CHECK(tally.bound_violations == 0);
      CHECK(tally.gap_violations == 0);
    }
  }
}

TEST_CASE("admissibility check rejects oversized steps") {
  const SdeProblem sgle = make_problem("sgle-mult");
  const Vector y = scalar(1.5);
  const Vector fy = sgle.drift(y);
  const StrategyConfig at = at_config(0.5, 50.0);
  const double h = at.resolved_delta() / fy.norm();
  CHECK(testing::step_bound_holds(at, y, fy, h));
  CHECK_FALSE(testing::step_bound_holds(at, y, fy, 1.01 * h));
  StrategyConfig fg = at;
  fg.kind = StrategyKind::FG;
  CHECK_FALSE(testing::step_bound_holds(fg, y, fy * 100.0, h));
}

TEST_CASE("clamp and horizon invariants") {
  const SdeProblem sgle = make_problem("sgle-mult");
  const StrategyConfig cfg = at_config(0.25, 100.0);
  BrownianPath path(17, 1);
  const Trajectory traj = simulate(sgle, cfg, 2.0, path);
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.final_time() == 2.0);
  for (std::size_t n = 0; n < traj.step_count(); ++n) {
    CHECK(traj.steps[n] <= 0.25);
    if (n + 1 < traj.step_count() || !traj.final_truncated) CHECK(traj.steps[n] >= 0.0025);
    CHECK(traj.times[n + 1] - traj.times[n] == doctest::Approx(traj.steps[n]).epsilon(1e-12));
  }

  for (const std::string name : {"sgle-mult", "vdp", "langevin", "poly2d"}) {
    const SdeProblem prob = make_problem(name);
    for (const auto& kname : strategy_names()) {
      StrategyConfig c;
      c.kind = parse_strategy(kname);
      c.h_max = 0.2;
      c.rho = 50.0;
      BrownianPath p(3, prob.m);
      const Trajectory t = simulate(prob, c, 3.0, p, {false});
      for (std::size_t n = 0; n < t.step_count(); ++n) {
        CHECK(t.steps[n] <= c.h_max);
        if (n + 1 < t.step_count() || !t.final_truncated) CHECK(t.steps[n] >= c.h_min());
      }
      if (t.final_truncated && t.steps.back() < c.h_min() && !is_fixed(c.kind)) CHECK(t.backstopped.back() == 1);
    }
  }
}

TEST_CASE("simulate is deterministic") {
  const SdeProblem vdp = make_problem("vdp");
  StrategyConfig cfg;
  cfg.kind = StrategyKind::ALD;
  cfg.h_max = 1.0;
  cfg.rho = 100.0;
  cfg.delta = 0.5;
  BrownianPath a(101, 1), b(101, 1);
  const Trajectory x = simulate(vdp, cfg, 20.0, a);
  const Trajectory y = simulate(vdp, cfg, 20.0, b);
  CHECK(x.states == y.states);
  CHECK(x.steps == y.steps);
}

TEST_CASE("divergence is reported with its step index") {
  const SdeProblem sgle = make_problem("sgle-mult", {{{"x0", 5.0}}});
  StrategyConfig cfg;
  cfg.kind = StrategyKind::FixedEM;
  cfg.h_max = 0.5;
  BrownianPath path(1, 1);
  try {
    simulate(sgle, cfg, 10.0, path);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step_index() > 1);
    CHECK(e.step_index() <= 20);
  }
}

TEST_CASE("fixed Euler-Maruyama matches the Ornstein-Uhlenbeck mean") {
  const SdeProblem ou = linear_problem(-1.0, 0.1);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::FixedEM;
  cfg.h_max = 1e-3;
  constexpr int n = 10000;
  std::vector<double> finals(n);
  for (int i = 0; i < n; ++i) {
    BrownianPath path = derive_path(314, i);
    finals[i] = simulate(ou, cfg, 1.0, path, {false}).final_state()[0];
  }
  const double se = std::sqrt(sdeadapt::testing::variance(finals) / n);
  CHECK(std::abs(sdeadapt::testing::mean(finals) - std::exp(-1.0)) < 4.0 * se);
}

TEST_CASE("Euler map two-cycle") {
  CHECK(euler_map_two_cycle_check(1.0, 2.0, 0.5) == doctest::Approx(2.0));
  CHECK(euler_map_two_cycle_check(2.0, 1.0, 1.0) == doctest::Approx(1.0));
  CHECK_NOTHROW(euler_map_two_cycle_check(0.3, 3.0, 0.01));
  CHECK_THROWS(euler_map_two_cycle_check(0.0, 1.0, 1.0));
  for (double gamma : {0.5, 2.0})
    for (double nu : {1.0, 2.0, 3.5}) {
      const double h = 0.1;
      CHECK(0.0 - h * gamma * 0.0 * std::pow(0.0, nu) == 0.0);
      const double x = euler_map_two_cycle_check(gamma, nu, h);
      CHECK(x - h * gamma * x * std::pow(x, nu) == doctest::Approx(-x));
    }
}

TEST_CASE("trajectory csv") {
  const SdeProblem vdp = make_problem("vdp");
  StrategyConfig cfg;
  cfg.kind = StrategyKind::FixedEM;
  cfg.h_max = 0.5;
  BrownianPath path(1, 1);
  const Trajectory t = simulate(vdp, cfg, 1.0, path);
  std::ostringstream out;
  write_trajectory_csv(out, t);
  CHECK(out.str().rfind("n,t,h,backstopped,Y_1,Y_2\n0,0,,,2,0\n1,0.5,0.5,0,", 0) == 0);
}
