#include "rl/adoption.hpp"
#include "rl/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace rl;

TEST_CASE("closed-form cutoff") {
  CHECK(solve_alpha_linear(1, 1, 0.05, 1, 0) == doctest::Approx(0.952381).epsilon(1e-6));
  CHECK(solve_alpha_linear(1, 1, 0.05, 1, 0.5) == doctest::Approx(0.976190).epsilon(1e-6));
  CHECK(solve_alpha_linear(1, 1, 1e-12, 1, 0.5) == doctest::Approx(1.0).epsilon(1e-10));
  // monotone in p and m_bar
  double prev = -1e9;
  for (double p = 0.0; p <= 1.0; p += 0.1) {
    const double al = solve_alpha_linear(0.7, 1.2, 0.1, 1.5, p);
    CHECK(al > prev);
    prev = al;
  }
  prev = -1e9;
  for (double mb = 0.0; mb <= 2.0; mb += 0.2) {
    const double al = solve_alpha_linear(0.7, mb, 0.1, 1.5, 0.2);
    CHECK(al > prev);
    prev = al;
  }
}

TEST_CASE("general root against the closed form") {
  for (double p : {0.0, 0.5}) {
    const double kappa = 1, m_bar = 1, r = 0.05, a = 1;
    auto root = solve_alpha_general([&](double m) { return kappa * (m_bar - m); }, [&](double m) { return a * m - p; },
                                    [&](double) { return a; }, r, {-10.0, m_bar - 1e-8});
    CHECK(std::abs(root.alpha - solve_alpha_linear(kappa, m_bar, r, a, p)) <= 1e-10);
  }
}

TEST_CASE("concave surplus") {
  const double kappa = 0.8, m_bar = 1.0, r = 0.1, pt = 0.9;
  auto mu = [&](double m) { return kappa * (m_bar - m); };
  auto S = [&](double m) { return std::sqrt(m + 1.0) - pt; };
  auto dS = [&](double m) { return 0.5 / std::sqrt(m + 1.0); };
  auto root = solve_alpha_general(mu, S, dS, r, {-0.5, m_bar - 1e-8});
  CHECK(root.residual <= 1e-12);
  CHECK(root.alpha <= m_bar);
  // exactly one sign change on a dense scan
  int changes = 0;
  double prev = mu(-0.5) * dS(-0.5) - r * S(-0.5);
  for (int i = 1; i <= 10000; ++i) {
    const double m = -0.5 + (m_bar - 1e-8 + 0.5) * i / 10000.0;
    const double g = mu(m) * dS(m) - r * S(m);
    if ((g > 0) != (prev > 0)) ++changes;
    prev = g;
  }
  CHECK(changes == 1);
}

TEST_CASE("no root at m_bar") {
  // L(m_bar) = 0 < R(m_bar) when S(m_bar) > 0: a bracket near m_bar has no sign change
  auto mu = [](double m) { return 1.0 - m; };
  auto S = [](double m) { return m; };
  auto dS = [](double) { return 1.0; };
  CHECK_THROWS_AS(solve_alpha_general(mu, S, dS, 0.05, {0.99, 1.0}), NoSignChange);
}

TEST_CASE("buyer value and hitting time") {
  auto S1 = [](double) { return 1.0; };
  CHECK(buyer_value(0.0, 0.5, 0.3, 1.0, 0.3, S1).w == doctest::Approx(0.5));
  CHECK(buyer_value(0.0, 0.5, 1.0, 1.0, 0.05, S1).tau == doctest::Approx(std::log(2.0)));
  auto S = [](double m) { return 2 * m - 0.1; };
  CHECK(buyer_value(0.5 - 1e-12, 0.5, 1.0, 1.0, 0.05, S).w == doctest::Approx(S(0.5)).epsilon(1e-10));
  const auto above = buyer_value(0.7, 0.5, 1.0, 1.0, 0.05, S);
  CHECK(above.w == doctest::Approx(S(0.7)));
  CHECK(above.tau == 0.0);
}

TEST_CASE("smooth fit") {
  const double kappa = 1, m_bar = 1, r = 0.05, a = 1, p = 0.5;
  auto S = [&](double m) { return a * m - p; };
  auto dS = [&](double) { return a; };
  const double alpha = solve_alpha_linear(kappa, m_bar, r, a, p);
  CHECK(smooth_fit_residual(alpha, kappa, m_bar, r, S, dS) <= 1e-6);
  CHECK(smooth_fit_residual(alpha + 0.05, kappa, m_bar, r, S, dS) > 1e-2);
  // analytic one-sided derivative r S(alpha) / mu_bar(alpha) equals S'(alpha)
  CHECK(r * S(alpha) / (kappa * (m_bar - alpha)) == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("adoption comparative statics") {
  const double kappa = 1, m_bar = 1, r = 0.05, a = 1, p = 0.2;
  const auto d = adoption_comparative_statics(kappa, m_bar, r, a, p);
  CHECK(d.dalpha_dp == doctest::Approx(0.047619).epsilon(1e-5));
  CHECK(d.dalpha_dmbar == doctest::Approx(0.952381).epsilon(1e-6));
  const double h = 1e-5;
  const double fp = (solve_alpha_linear(kappa, m_bar, r, a, p + h) - solve_alpha_linear(kappa, m_bar, r, a, p - h)) / (2 * h);
  const double fm = (solve_alpha_linear(kappa, m_bar + h, r, a, p) - solve_alpha_linear(kappa, m_bar - h, r, a, p)) / (2 * h);
  CHECK(std::abs(fp - d.dalpha_dp) <= 1e-8);
  CHECK(std::abs(fm - d.dalpha_dmbar) <= 1e-8);

  ModelParams mp;
  mp.kappa = kappa;
  mp.r = r;
  mp.p = p;
  const auto sol = solve_adoption(mp);
  CHECK(std::abs(sol.alpha - sol.alpha_closed_form) <= 1e-10);
  const auto table = adoption_table(mp, sol, 0.0, 11);
  CHECK(table.back().tau == 0.0);
  CHECK(table.front().tau > 0.0);
}
