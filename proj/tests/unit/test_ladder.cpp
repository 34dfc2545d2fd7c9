#include "rl/errors.hpp"
#include "rl/ladder.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace rl;

namespace {

// Independent check of the inaction ODE on a dense grid: long-double
// five-point differences of V, no use of the closed-form derivatives.
double fd_ode_residual(const LadderSolution& sol, const ModelParams& p, int n) {
  using ld = long double;
  const ld h = 1e-3L;
  auto V = [&](ld z) {
    const auto& v = sol.value;
    ld acc = 0;
    for (int k = 4; k >= 0; --k) acc = acc * z + v.particular[k];
    return acc + v.A * std::exp(v.roots.plus * (z - v.z_ref)) + v.B * std::exp(v.roots.minus * (z - v.z_ref));
  };
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const ld z = sol.beta1 + (sol.beta2 - sol.beta1) * ld(i) / (n - 1);
    const ld v0 = V(z), vp1 = V(z + h), vm1 = V(z - h), vp2 = V(z + 2 * h), vm2 = V(z - 2 * h);
    const ld d1 = (-vp2 + 8 * vp1 - 8 * vm1 + vm2) / (12 * h);
    const ld d2 = (-vp2 + 16 * vp1 - 30 * v0 + 16 * vm1 - vm2) / (12 * h * h);
    const ld res = p.r * v0 - p.payoff.base(double(z)) - p.mu * d1 - 0.5L * p.sigma * p.sigma * d2;
    worst = std::max(worst, double(std::fabs(res)));
  }
  return worst;
}

} // namespace

TEST_CASE("characteristic roots") {
  auto r1 = characteristic_roots(0.0, std::sqrt(2.0), 1.0);
  CHECK(r1.plus == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r1.minus == doctest::Approx(-1.0).epsilon(1e-14));

  // textbook quadratic formula as the oracle
  auto oracle = [](double mu, double sigma, double r) {
    const double a = 0.5 * sigma * sigma;
    const double d = std::sqrt(mu * mu + 4 * a * r);
    return std::pair{(-mu + d) / (2 * a), (-mu - d) / (2 * a)};
  };
  auto r2 = characteristic_roots(0.1, 1.0, 0.05);
  auto [op, om] = oracle(0.1, 1.0, 0.05);
  CHECK(r2.plus == doctest::Approx(op).epsilon(1e-13));
  CHECK(r2.minus == doctest::Approx(om).epsilon(1e-13));
  CHECK(r2.plus == doctest::Approx(0.23166).epsilon(1e-4));
  CHECK(r2.minus == doctest::Approx(-0.43166).epsilon(1e-4));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.05, 2.0), M(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double mu = M(rng), s = U(rng), r = U(rng);
    auto rt = characteristic_roots(mu, s, r);
    REQUIRE(rt.plus > 0.0);
    REQUIRE(rt.minus < 0.0);
    CHECK(rt.plus * rt.minus == doctest::Approx(-2 * r / (s * s)).epsilon(1e-12));
    for (double e : {rt.plus, rt.minus})
      CHECK(std::abs(0.5 * s * s * e * e + mu * e - r) <= 1e-12 * (1 + r + std::abs(mu * e)));
  }
}

TEST_CASE("particular solution") {
  SUBCASE("constant payoff") {
    auto c = particular_solution(FlowPayoff::constant(2.0), 0.3, 0.7, 0.5);
    CHECK(c[0] == doctest::Approx(4.0));
    for (int k = 1; k < 5; ++k) CHECK(c[k] == 0.0);
    auto ck = particular_solution(FlowPayoff::constant(2.0), 0.3, 0.7, 0.5, 0.4);
    CHECK(ck[0] == doctest::Approx((2.0 - 0.4) / 0.5));
  }
  SUBCASE("-z^2 with zero drift") {
    const double s = 0.8, r = 0.3;
    auto c = particular_solution(FlowPayoff::quadratic(0.0, 1.0), 0.0, s, r);
    CHECK(c[2] == doctest::Approx(-1.0 / r));
    CHECK(c[1] == doctest::Approx(0.0));
    CHECK(c[0] == doctest::Approx(-s * s / (r * r)));
  }
  SUBCASE("quartic satisfies the ODE identically") {
    FlowPayoff pay = FlowPayoff::double_peak(1.0, 0.3, 1.2, 0.4);
    pay.c_q = 0.1;
    const double mu = 0.15, s = 0.6, r = 0.4;
    auto c = particular_solution(pay, mu, s, r);
    for (double z : {-2.0, -0.3, 0.0, 0.9, 2.5}) {
      const double v = poly_eval(c, z), d1 = poly_eval(poly_derivative(c), z),
                   d2 = poly_eval(poly_derivative(poly_derivative(c)), z);
      CHECK(r * v - pay.base(z) - mu * d1 - 0.5 * s * s * d2 == doctest::Approx(0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("symmetric benchmark ladder") {
  const ModelParams p = symmetric_benchmark();
  const LadderSolution sol = solve_ladder(p);
  CHECK(sol.beta1 < sol.z1_star);
  CHECK(sol.z1_star < sol.z2_star);
  CHECK(sol.z2_star < sol.beta2);
  CHECK(sol.residuals.max_boundary() <= 1e-10);
  CHECK(std::abs(sol.beta1 + sol.beta2) <= 1e-8);
  CHECK(std::abs(sol.z1_star + sol.z2_star) <= 1e-8);
  CHECK(sol.beta2 == doctest::Approx(1.6657).epsilon(1e-3));
  CHECK(sol.z2_star == doctest::Approx(0.8362).epsilon(1e-3));

  const QviReport q = qvi_check(sol, p);
  CHECK(q.ode_residual <= 1e-8);
  CHECK(q.dominance_margin >= -1e-8);
  CHECK(std::abs(q.delta_ic) <= 1e-8);
  CHECK(q.classification == IcClass::TwoImpulseConsistent);

  CHECK(fd_ode_residual(sol, p, 10000) <= 1e-9);

  // curvature sign pattern
  CHECK(sol.value.d2(sol.beta1) * sol.value.d2(sol.z1_star) < 0.0);
  CHECK(sol.value.d2(sol.beta2) * sol.value.d2(sol.z2_star) < 0.0);
}

TEST_CASE("uniqueness from randomized admissible starts") {
  const ModelParams p = symmetric_benchmark();
  const LadderSolution ref = solve_ladder(p);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> jitter(-0.15, 0.15);
  int runs = 0;
  while (runs < 10) {
    LadderGuess g = default_guess(p);
    g.beta1 += jitter(rng);
    g.z1_star += jitter(rng);
    g.z2_star += jitter(rng);
    g.beta2 += jitter(rng);
    if (!(g.beta1 < g.z1_star && g.z1_star < g.z2_star && g.z2_star < g.beta2)) continue;
    ++runs;
    const LadderSolution s = solve_ladder(p, g);
    const auto a = s.theta(), b = ref.theta();
    for (int i = 0; i < 6; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-9);
  }
}

TEST_CASE("asymmetric costs give a nonzero IC residual") {
  ModelParams p = symmetric_benchmark();
  p.k2 += 0.1;
  const LadderSolution sol = solve_ladder(p);
  CHECK(sol.residuals.max_boundary() <= 1e-10);
  const QviReport q = qvi_check(sol, p);
  CHECK(std::abs(q.delta_ic) > 1e-6);
  CHECK(q.classification != IcClass::TwoImpulseConsistent);
}

TEST_CASE("comparative statics") {
  const ModelParams p = symmetric_benchmark();
  auto rows = comparative_statics(p, {{1, 1e-3}, {2, 1e-3}, {1, 5e-4}});
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    CHECK(row.signs_hold);
    CHECK(row.jump_increases);
  }
  CHECK(rows[2].d_trigger / rows[0].d_trigger == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(rows[2].d_target / rows[0].d_target == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("solver errors") {
  ModelParams p = symmetric_benchmark();
  LadderGuess bad = default_guess(p);
  std::swap(bad.beta1, bad.z1_star);
  CHECK_THROWS_AS(solve_ladder(p, bad), SolverError);

  // single-peaked quadratic flow: both targets want the same peak
  ModelParams q = symmetric_benchmark();
  q.payoff = FlowPayoff::quadratic(1.0, 1.0);
  CHECK_THROWS_AS(solve_ladder(q), SolverError);

  SolverOptions few;
  few.max_iter = 1;
  try {
    solve_ladder(p, std::nullopt, few);
    FAIL("expected NonConvergence");
  } catch (const SolverError& e) {
    CHECK(e.kind() == SolverError::Kind::NonConvergence);
  }
}

TEST_CASE("mean exit time") {
  ModelParams p;
  p.mu = 0.0;
  p.sigma = 1.0;
  CHECK(mean_exit_time(p, {0.0, 1.0}, 0.5) == doctest::Approx(0.25));
  CHECK(mean_exit_time(p, {0.0, 1.0}, 0.0) == 0.0);
  CHECK(mean_exit_time(p, {0.0, 1.0}, 1.0) == 0.0);
  CHECK_THROWS(mean_exit_time(p, {1.0, 0.0}, 0.5));

  // drift: closed form against the finite-difference path via a flat table
  ModelParams q;
  q.mu = 0.4;
  q.sigma = 0.7;
  ModelParams qt = q;
  qt.mu_table = {{-5.0, 0.4}, {5.0, 0.4}};
  for (double z : {-0.9, -0.2, 0.3, 1.1}) {
    const double u = mean_exit_time(q, {-1.0, 1.5}, z);
    CHECK(u >= 0.0);
    CHECK(u <= exit_time_bound(q, {-1.0, 1.5}));
    CHECK(mean_exit_time(qt, {-1.0, 1.5}, z) == doctest::Approx(u).epsilon(1e-6));
  }
  // tiny drift falls back to the driftless formula continuously
  q.mu = 1e-12;
  CHECK(mean_exit_time(q, {0.0, 1.0}, 0.3) == doctest::Approx(0.3 * 0.7 / 0.49).epsilon(1e-9));
}
