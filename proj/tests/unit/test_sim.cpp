#include "rl/sim.hpp"

#include <doctest.h>

#include <cmath>

using namespace rl;

namespace {

ScenarioConfig base_config() {
  ScenarioConfig c;
  c.params = symmetric_benchmark();
  c.sim.horizon = 5.0;
  c.sim.dt = 1e-3;
  c.sim.base_seed = 2024;
  return c;
}

const LadderSolution& ladder() {
  static const LadderSolution sol = solve_ladder(symmetric_benchmark());
  return sol;
}

bool same_stats(const PathStats& a, const PathStats& b) {
  return a.publications == b.publications && a.patches == b.patches && a.pivots == b.pivots &&
         a.disc_flow == b.disc_flow && a.disc_clock_cost == b.disc_clock_cost && a.end_z == b.end_z &&
         a.residence == b.residence;
}

} // namespace

TEST_CASE("clock off globally gives no publications") {
  ScenarioConfig c = base_config();
  c.params.lambda_bar = 0.0;
  const auto pol = policy_from(ladder());
  for (int i = 0; i < 20; ++i) CHECK(simulate_path(c, pol, {}, derive_seed(1, i)).stats.publications == 0);
}

TEST_CASE("windows covering the band silence everything") {
  ScenarioConfig c = base_config();
  const auto pol = policy_from(ladder());
  const std::vector<SilenceWindow> all{{WindowSpace::PrivateState, WindowAnchor::Value, 0.0, 10.0}};
  for (int i = 0; i < 20; ++i) {
    const SimPath path = simulate_path(c, pol, all, derive_seed(2, i));
    CHECK(path.stats.publications == 0);
    CHECK(path.stats.disc_clock_cost == 0.0);
    // between resets the mean follows the deterministic flow exactly
    for (const auto& e : path.events) CHECK(e.kind != EventKind::Publication);
  }
}

TEST_CASE("publication count is Poisson(lambda_bar T) without windows") {
  ScenarioConfig c = base_config();
  c.params.lambda_bar = 3.0;
  c.sim.horizon = 4.0;
  const auto b = run_batch(c, policy_from(ladder()), {}, 2000);
  CHECK(std::abs(b.publications.mean - 12.0) <= 3.0 * b.publications.se);
}

TEST_CASE("batch determinism") {
  ScenarioConfig c = base_config();
  const auto pol = policy_from(ladder());
  const auto w = bind_windows({{WindowSpace::PrivateState, WindowAnchor::Beta1, 0.0, 0.05},
                               {WindowSpace::PrivateState, WindowAnchor::Beta2, 0.0, 0.05}},
                              pol);
  const auto s1 = simulate_stats(c, pol, w, 64, 1);
  const auto s4 = simulate_stats(c, pol, w, 64, 4);
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(same_stats(s1[i], s4[i]));
  const auto a = run_batch(c, pol, w, 64, {4, 0});
  const auto b = run_batch_serial(c, pol, w, 64);
  CHECK(a.disc_payoff.mean == b.disc_payoff.mean);
  CHECK(a.disc_payoff.se == b.disc_payoff.se);
  CHECK(a.publications.mean == b.publications.mean);
  CHECK(a.residence_per_cycle_total == b.residence_per_cycle_total);

  const auto one = run_batch(c, pol, w, 1, {1, 1});
  const auto path = simulate_path(c, pol, w, derive_seed(c.sim.base_seed, 0));
  CHECK(one.publications.mean == path.stats.publications);
  CHECK(one.disc_payoff.mean == path.stats.disc_payoff());
  CHECK(one.kept.size() == 1);
  CHECK(one.kept[0].events.size() == path.events.size());
}

TEST_CASE("mean first exit time matches the ODE") {
  ScenarioConfig c = base_config();
  c.sim.horizon = 500.0;
  c.sim.z0_at_target = false;
  c.sim.z0 = 0.3;
  auto pol = policy_from(ladder());
  pol.stop_at_first_exit = true;
  const auto b = run_batch(c, pol, {}, 2000);
  const double u = mean_exit_time(c.params, {pol.beta1, pol.beta2}, 0.3);
  CHECK(b.first_exit_time.n == 2000);
  CHECK(std::abs(b.first_exit_time.mean - u) <= 3.0 * b.first_exit_time.se);
}

TEST_CASE("trigger purity and support") {
  ScenarioConfig c = base_config();
  c.sim.horizon = 30.0;
  const auto pol = policy_from(ladder());
  const auto w = bind_windows({{WindowSpace::PrivateState, WindowAnchor::Beta1, 0.0, 0.05},
                               {WindowSpace::PrivateState, WindowAnchor::Beta2, 0.0, 0.05}},
                              pol);
  const double eps = 6.0 * c.params.sigma * std::sqrt(c.sim.dt);
  int resets = 0;
  for (int i = 0; i < 50; ++i) {
    const SimPath path = simulate_path(c, pol, w, derive_seed(9, i));
    double last_t = 0.0;
    for (const auto& e : path.events) {
      CHECK(e.t >= last_t);
      last_t = e.t;
      if (e.kind == EventKind::Publication) {
        for (const auto& win : w) CHECK_FALSE(win.contains(e.z_pre, e.m_pre));
      } else if (e.kind == EventKind::Patch) {
        ++resets;
        CHECK(e.z_pre <= pol.beta1 + eps);
        CHECK(e.z_post == pol.z1_star);
      } else if (e.kind == EventKind::Pivot) {
        ++resets;
        CHECK(e.z_pre >= pol.beta2 - eps);
        CHECK(e.z_post == pol.z2_star);
      }
    }
    CHECK(path.stats.publications_in_window == 0);
  }
  CHECK(resets > 0);
}

TEST_CASE("adoption under a belief window is deterministic") {
  ScenarioConfig c = base_config();
  auto& p = c.params;
  p.kappa = 1.0;
  p.m_bar = 1.0;
  const double alpha = 0.8;
  c.sim.m0 = 0.7;
  c.sim.horizon = 2.0;
  auto pol = policy_from(ladder(), alpha);
  const auto w = bind_windows({{WindowSpace::BeliefMean, WindowAnchor::Alpha, 0.0, 0.15}}, pol);
  const double tau = std::log((p.m_bar - c.sim.m0) / (p.m_bar - alpha)) / p.kappa;
  for (int i = 0; i < 20; ++i) {
    const SimPath path = simulate_path(c, pol, w, derive_seed(5, i));
    CHECK(path.stats.adoption_time == doctest::Approx(tau).epsilon(1e-12));
  }
}

TEST_CASE("window residence report") {
  ScenarioConfig c = base_config();
  c.sim.horizon = 20.0;
  const auto pol = policy_from(ladder());
  const auto rows = window_residence_report(c, pol, {0.08, 0.0, 0.04}, 200, 2);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].delta == 0.0);
  CHECK(rows[0].per_cycle == 0.0);
  CHECK(rows[1].per_cycle < rows[2].per_cycle);
  CHECK(rows[2].ratio > 1.0);
  for (const auto& r : rows) {
    CHECK(r.publications_in_window == 0);
    CHECK(r.per_cycle <= c.sim.horizon);
  }
}
