#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sdeadapt/models.hpp"

using namespace sdeadapt;

namespace {
Vector random_state(NormalStream& rng, int d, double radius) {
  Vector x(d);
  for (int i = 0; i < d; ++i) x[i] = rng.next();
  const double r = radius * rng.uniform();
  return x.norm() > 0 ? Vector(x * (r / x.norm())) : x;
}
}  // namespace

TEST_CASE("registry lists nine problems") {
  CHECK(problem_names().size() == 9);
  for (const auto& name : problem_names()) {
    const SdeProblem p = make_problem(name);
    CHECK(p.initial_state.size() == p.d);
    CHECK(p.drift(p.initial_state).size() == p.d);
    CHECK(p.diffusion(p.initial_state).rows() == p.d);
    CHECK(p.diffusion(p.initial_state).cols() == p.m);
    CHECK(p.default_horizon > 0.0);
  }
  CHECK_FALSE(make_problem("cir").within_theory);
  CHECK(make_problem("sgle-mult").within_theory);
}

TEST_CASE("hand-evaluated coefficients") {
  const SdeProblem vdp = make_problem("vdp");
  const Vector f = vdp.drift((Vector(2) << 2.0, 1.0).finished());
  CHECK(f[0] == 1.0);
  CHECK(f[1] == -5.0);
  CHECK(vdp.initial_state == (Vector(2) << 2.0, 0.0).finished());

  const SdeProblem sgle = make_problem("sgle-mult", {{{"eta", 0.1}, {"lambda", 2.0}, {"sigma", 0.5}}});
  CHECK(sgle.drift(Vector::Constant(1, 1.0))[0] == doctest::Approx(-1.775).epsilon(1e-15));
  CHECK(sgle.diffusion(Vector::Constant(1, 0.0))(0, 0) == 0.0);
  CHECK(make_problem("sgle-add").diffusion(Vector::Constant(1, 3.0))(0, 0) == 0.5);

  const SdeProblem poly = make_problem("poly2d");
  const Vector x = (Vector(2) << -1.0, -1.0).finished();
  // A x - |x|^2 (beta x), |x|^2 = 2
  CHECK(poly.drift(x)[0] == doctest::Approx(-(0.807019 + 0.589848) + 2.0 * (0.99133 + 0.60672)));
  CHECK(poly.drift(x)[1] == doctest::Approx(-(0.080506 + 0.477723) + 2.0 * (0.29234 + 0.96434)));
  CHECK(make_problem("cir").drift(Vector::Constant(1, 1.0))[0] == doctest::Approx(0.1 * (0.5 - 1.0)));
  CHECK(make_problem("pk").drift(Vector::Constant(1, 0.0))[0] == 0.5);
}

TEST_CASE("invalid problems and parameters are rejected") {
  CHECK_THROWS_AS(make_problem("lorenz"), std::invalid_argument);
  CHECK_THROWS_AS(make_problem("sgle-mult", {{{"lambda", 0.0}}}), std::invalid_argument);
  CHECK_THROWS_AS(make_problem("sgle-mult", {{{"lambda", -1.0}}}), std::invalid_argument);
  CHECK_THROWS_AS(make_problem("vdp", {{{"mu", 1.0}}}), std::invalid_argument);
  CHECK_THROWS_AS(make_problem("cir", {{{"kappa", 0.0}}}), std::invalid_argument);
  CHECK_THROWS_AS(make_problem("vdp", {{{"x1_0", std::nan("")}}}), std::invalid_argument);
  CHECK(make_problem("vdp", {{{"x1_0", 0.5}}}).initial_state[0] == 0.5);
}

TEST_CASE("finite-difference Jacobian matches the analytic one") {
  NormalStream rng(31);
  for (const auto& name : problem_names()) {
    const SdeProblem p = make_problem(name);
    REQUIRE(p.jacobian);
    for (int k = 0; k < 100; ++k) {
      const Vector x = random_state(rng, p.d, 10.0);
      const Matrix exact = p.jacobian(x);
      const Matrix approx = finite_difference_jacobian(p.drift, x);
      INFO(name << " at " << x.transpose());
      CHECK((approx - exact).norm() <= 1e-4 * std::max(1.0, exact.norm()));
    }
  }
  SdeProblem stripped = make_problem("vdp");
  stripped.jacobian = nullptr;
  const Vector x = (Vector(2) << 0.3, -1.2).finished();
  CHECK((stripped.jacobian_at(x) - make_problem("vdp").jacobian(x)).norm() < 1e-6);
}

TEST_CASE("Ginzburg-Landau drift is one-sided Lipschitz") {
  const SdeProblem p = make_problem("sgle-mult");
  const double alpha = 0.1 + 0.5 * 0.5 * 0.5;
  NormalStream rng(4);
  for (int k = 0; k < 1000; ++k) {
    const double x = -10.0 + 20.0 * rng.uniform();
    const double y = -10.0 + 20.0 * rng.uniform();
    const double lhs = (p.drift(Vector::Constant(1, x))[0] - p.drift(Vector::Constant(1, y))[0]) * (x - y);
    CHECK(lhs <= alpha * (x - y) * (x - y) * (1.0 + 1e-12) + 1e-12);
  }
}

TEST_CASE("coefficient samplers are seeded") {
  for (const std::string name : {"sir", "lv"}) {
    const SdeProblem p = make_problem(name, {{}, 17});
    REQUIRE(p.coefficient_sampler);
    const SdeProblem a = realise(p, 5, 3);
    const SdeProblem b = realise(p, 5, 3);
    const SdeProblem c = realise(p, 5, 4);
    CHECK(a.params == b.params);
    CHECK(a.params != c.params);
    const double hi = name == "sir" ? 10.0 : 1.0;
    for (const char* key : {"alpha", "beta", "gamma", "delta"}) {
      CHECK(a.params.at(key) >= 0.0);
      CHECK(a.params.at(key) <= hi);
    }
    CHECK_FALSE(a.coefficient_sampler);
  }
  const SdeProblem fixed = make_problem("sir", {{{"randomize", 0.0}}});
  CHECK_FALSE(fixed.coefficient_sampler);
  CHECK(realise(make_problem("vdp"), 1, 2).params == make_problem("vdp").params);
}

TEST_CASE("params file round trip") {
  const std::string path = (std::filesystem::temp_directory_path() / "sdeadapt_params.cfg").string();
  {
    std::ofstream out(path);
    out << "# comment\nseed = 9\nlambda=3\n\n eta = 0.2\n";
  }
  const ProblemParams params = load_problem_params(path);
  CHECK(params.seed == 9);
  CHECK(params.values.at("lambda") == 3.0);
  CHECK(params.values.at("eta") == 0.2);
  CHECK(make_problem("sgle-mult", params).params.at("lambda") == 3.0);
}

TEST_CASE("sgle exact solution") {
  BrownianPath path(1, 1);
  const SgleParams p{0.1, 2.0, 0.5, 1.0};
  CHECK(sgle_exact(p, 0.0, path, 16) == 1.0);

  SUBCASE("deterministic closed form when sigma = 0") {
    const SgleParams det{0.1, 2.0, 0.0, 1.0};
    BrownianPath any(3, 1);
    // x0 e^{eta t} / sqrt(1 + 2 x0^2 lambda (e^{2 eta t} - 1) / (2 eta)) at t = 2
    CHECK(sgle_exact(det, 2.0, any, 1 << 12) == doctest::Approx(0.37103467623406794).epsilon(1e-6));
  }

  SUBCASE("quadrature self-consistency") {
    BrownianPath a(55, 1);
    const double coarse = sgle_exact(p, 2.0, a, 1 << 12);
    const double fine = sgle_exact(p, 2.0, a, 1 << 13);
    CHECK(std::abs(fine - coarse) < 1e-4 * std::abs(fine));
  }

  const SdeProblem prob = make_problem("sgle-mult");
  BrownianPath b(8, 1);
  CHECK(prob.exact_solution(0.0, b)[0] == 1.0);
  CHECK_THROWS(sgle_exact(p, 1.0, b, 1));
}
