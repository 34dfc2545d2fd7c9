// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance --cli PATH --configs DIR --work DIR [--only 1,4,9] [--workers N]

#include "rl/adoption.hpp"
#include "rl/belief.hpp"
#include "rl/errors.hpp"
#include "rl/financing.hpp"
#include "rl/io.hpp"
#include "rl/ladder.hpp"
#include "rl/sim.hpp"
#include "rl/telemetry.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <functional>
#include <map>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace rl;

namespace {

struct Args {
  std::string cli;
  std::string configs;
  std::string work;
  std::vector<int> only;
  int workers = 1;
};

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [x]");
  }
};

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

const ModelParams& bench() {
  static const ModelParams p = symmetric_benchmark();
  return p;
}

const LadderSolution& bench_ladder() {
  static const LadderSolution sol = solve_ladder(bench());
  return sol;
}

// 1 -------------------------------------------------------------------------
void boundary_fidelity(Verdict& o) {
  const LadderSolution& s = bench_ladder();
  o.check(s.residuals.max_boundary() <= 1e-10, "max |F| " + sci(s.residuals.max_boundary()) + " <= 1e-10");
  const double sym = std::max(std::abs(s.beta1 + s.beta2), std::abs(s.z1_star + s.z2_star));
  o.check(sym <= 1e-8, "symmetry gap " + sci(sym) + " <= 1e-8");
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  double spread = 0.0;
  int runs = 0, failures = 0;
  while (runs < 10) {
    LadderGuess g = default_guess(bench());
    g.beta1 += jitter(rng);
    g.z1_star += jitter(rng);
    g.z2_star += jitter(rng);
    g.beta2 += jitter(rng);
    if (!(g.beta1 < g.z1_star && g.z1_star < g.z2_star && g.z2_star < g.beta2)) continue;
    ++runs;
    try {
      const auto a = solve_ladder(bench(), g).theta(), b = s.theta();
      for (int i = 0; i < 6; ++i) spread = std::max(spread, std::abs(a[i] - b[i]));
    } catch (const SolverError&) {
      ++failures;
    }
  }
  o.check(failures == 0 && spread <= 1e-8,
          "10 random starts: " + std::to_string(failures) + " failures, max distance " + sci(spread) + " <= 1e-8");
}

// 2 -------------------------------------------------------------------------
void qvi(Verdict& o) {
  const QviReport q = qvi_check(bench_ladder(), bench(), 10000, 1e-8);
  o.check(q.dominance_margin >= -1e-8, "min V - MV " + sci(q.dominance_margin) + " >= -1e-8");
  o.check(q.ode_residual <= 1e-8, "ODE residual " + sci(q.ode_residual) + " <= 1e-8");
  o.check(std::abs(q.delta_ic) <= 1e-8, "|Delta_IC| " + sci(std::abs(q.delta_ic)) + " <= 1e-8");
}

// 3 -------------------------------------------------------------------------
void comparative(Verdict& o) {
  const auto rows = comparative_statics(bench(), {{1, 1e-3}, {1, 1e-2}, {2, 1e-3}, {2, 1e-2}});
  for (const auto& r : rows) {
    std::ostringstream s;
    s << "K" << r.which << "+" << sci(r.delta) << ": dbeta " << sci(r.d_trigger) << ", dz " << sci(r.d_target)
      << ", jump " << sci(r.jump_base) << "->" << sci(r.jump_up);
    o.check(r.signs_hold && r.jump_increases, s.str());
  }
}

// 4 -------------------------------------------------------------------------
void exit_time(Verdict& o, int workers) {
  ScenarioConfig c;
  c.params = bench();
  c.sim.dt = 1e-3;
  c.sim.horizon = 500.0;
  c.sim.z0_at_target = false;
  c.sim.base_seed = 4004;
  const LadderSolution& lad = bench_ladder();
  ResetPolicy pol = policy_from(lad);
  pol.stop_at_first_exit = true;
  const std::pair<double, double> band{lad.beta1, lad.beta2};
  const double bound = exit_time_bound(c.params, band);
  for (double z0 : {lad.z1_star, 0.0}) {
    c.sim.z0 = z0;
    const BatchStats b = run_batch(c, pol, {}, 10000, {workers, 0});
    const double u = mean_exit_time(c.params, band, z0);
    const double dev = std::abs(b.first_exit_time.mean - u);
    o.check(b.first_exit_time.n == 10000 && dev <= 3.0 * b.first_exit_time.se,
            "z0=" + sci(z0) + ": MC " + sci(b.first_exit_time.mean) + " vs ODE " + sci(u) + ", |diff| " + sci(dev) +
                " <= 3se " + sci(3.0 * b.first_exit_time.se));
    o.check(b.first_exit_time.mean <= bound && u <= bound, "bound " + sci(bound) + " holds");
  }
  double worst = -INFINITY;
  for (int i = 1; i < 200; ++i) {
    const double z = lad.beta1 + (lad.beta2 - lad.beta1) * i / 200.0;
    worst = std::max(worst, mean_exit_time(c.params, band, z) - bound);
  }
  o.check(worst <= 0.0, "ODE <= bound across the band");
}

// 5 -------------------------------------------------------------------------
void filter(Verdict& o) {
  std::mt19937_64 rng(5005);
  std::uniform_real_distribution<double> U(1e-3, 5.0), M(-5.0, 5.0);
  double worst = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    const double m = M(rng), v = U(rng), y = M(rng), se2 = U(rng);
    const BeliefState out = publication_update({m, v}, y, se2);
    // Kalman form: gain v / (v + se2)
    const long double gain = (long double)v / ((long double)v + se2);
    const long double m_ref = m + gain * ((long double)y - m);
    const long double v_ref = (long double)v * se2 / ((long double)v + se2);
    worst = std::max({worst, double(std::abs(out.m - m_ref) / (1.0L + std::abs(m_ref))),
                      double(std::abs(out.v - v_ref) / v_ref)});
  }
  o.check(worst <= 4.0 * std::numeric_limits<double>::epsilon(),
          "1e6 updates, max rel. error " + sci(worst) + " <= 4 eps");

  ModelParams p;
  p.kappa = 0.6;
  p.m_bar = -0.4;
  double comp = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const BeliefState s{M(rng), U(rng)};
    const double t1 = U(rng) / 5.0, t2 = U(rng) / 5.0;
    const BeliefState a = drift_step(drift_step(s, t1, p), t2, p), b = drift_step(s, t1 + t2, p);
    comp = std::max({comp, std::abs(a.m - b.m) / (1.0 + std::abs(b.m)), std::abs(a.v - b.v) / (1.0 + b.v)});
  }
  o.check(comp <= 1e-14, "drift composition max rel. gap " + sci(comp) + " <= 1e-14");

  // silent belief path from the simulator: a belief window covering everything
  ScenarioConfig c;
  c.params = bench();
  c.sim.horizon = 1.0;
  c.sim.m0 = -0.5;
  const ResetPolicy pol = policy_from(bench_ladder());
  const SimPath path = simulate_path(c, pol, {{WindowSpace::BeliefMean, WindowAnchor::Value, 0.0, 1e9}}, 7);
  o.check(path.stats.publications == 0, "no publications inside the window");
  auto grid_qv = [&](int n) {
    std::vector<std::pair<double, double>> pts;
    BeliefState s{c.sim.m0, c.sim.v0};
    for (int i = 0; i <= n; ++i) {
      pts.emplace_back(double(i) / n, s.m);
      s = drift_step(s, 1.0 / n, c.params);
    }
    return quadratic_variation(pts);
  };
  const double q1 = grid_qv(1000), q2 = grid_qv(2000), q4 = grid_qv(4000);
  const bool linear = std::abs(q1 / q2 - 2.0) <= 0.02 && std::abs(q2 / q4 - 2.0) <= 0.02;
  o.check(linear, "QV ratios per halving " + sci(q1 / q2) + ", " + sci(q2 / q4) + " (O(dt): 2 +- 1%)");
}

// 6 -------------------------------------------------------------------------
void silence(Verdict& o, int workers) {
  ScenarioConfig c;
  c.params = bench();
  c.sim.horizon = 20.0;
  c.sim.dt = 1e-3;
  c.sim.base_seed = 6006;
  const ResetPolicy pol = policy_from(bench_ladder());
  const auto windows = bind_windows({{WindowSpace::PrivateState, WindowAnchor::Beta1, 0.0, 0.08},
                                     {WindowSpace::PrivateState, WindowAnchor::Beta2, 0.0, 0.08}},
                                    pol);
  const auto stats = simulate_stats(c, pol, windows, 1000, workers);
  long in_window = 0, pubs = 0;
  for (const auto& s : stats) {
    in_window += s.publications_in_window;
    pubs += s.publications;
  }
  // independent check on the event streams
  long direct = 0;
  for (int i = 0; i < 1000; ++i)
    for (const auto& e : simulate_path(c, pol, windows, derive_seed(c.sim.base_seed, i), true).events)
      if (e.kind == EventKind::Publication)
        for (const auto& w : windows) direct += w.contains(e.z_pre, e.m_pre);
  o.check(in_window == 0 && direct == 0,
          "1e3 paths, " + std::to_string(pubs) + " publications, " + std::to_string(in_window + direct) +
              " inside windows");

  const auto rows = window_residence_report(c, pol, {0.02, 0.04, 0.08}, 2000, workers);
  for (const auto& r : rows) {
    if (r.ratio == 0.0) continue;
    o.check(r.ratio >= 1.5 && r.ratio <= 3.0, "delta " + sci(r.delta) + ": residence/cycle " + sci(r.per_cycle) +
                                                  " (delta^2/sigma^2 " + sci(r.oracle) + "), ratio " + sci(r.ratio) +
                                                  " in [1.5, 3]");
  }
}

// 7 -------------------------------------------------------------------------
void adoption(Verdict& o) {
  double worst = 0.0;
  for (double p : {0.0, 0.2, 0.5})
    for (double r : {0.05, 0.5}) {
      const double kappa = 1.0, m_bar = 1.0, a = 1.0;
      const auto root = solve_alpha_general([&](double m) { return kappa * (m_bar - m); },
                                            [&](double m) { return a * m - p; }, [&](double) { return a; }, r,
                                            {-10.0, m_bar - 1e-9});
      worst = std::max(worst, std::abs(root.alpha - solve_alpha_linear(kappa, m_bar, r, a, p)));
    }
  o.check(worst <= 1e-10, "general vs closed-form alpha " + sci(worst) + " <= 1e-10");

  ModelParams mp = bench();
  mp.p = 0.2;
  mp.r = 0.05;
  const AdoptionSolution sol = solve_adoption(mp);
  o.check(sol.smooth_fit <= 1e-6, "smooth-fit residual " + sci(sol.smooth_fit) + " <= 1e-6");

  const double h = 1e-5;
  auto al = [&](double p, double mb) { return solve_alpha_linear(mp.kappa, mb, mp.r, mp.a, p); };
  const double fp = (al(mp.p + h, mp.m_bar) - al(mp.p - h, mp.m_bar)) / (2 * h);
  const double fm = (al(mp.p, mp.m_bar + h) - al(mp.p, mp.m_bar - h)) / (2 * h);
  // dalpha/dp = r / (a (r + kappa)), dalpha/dm_bar = kappa / (r + kappa)
  const double dp = mp.r / (mp.a * (mp.r + mp.kappa)), dm = mp.kappa / (mp.r + mp.kappa);
  const double gap = std::max({std::abs(fp - dp), std::abs(fm - dm), std::abs(sol.derivatives.dalpha_dp - dp),
                               std::abs(sol.derivatives.dalpha_dmbar - dm)});
  o.check(gap <= 1e-8, "derivatives vs formulas " + sci(gap) + " <= 1e-8");

  ScenarioConfig c;
  c.params = mp;
  c.sim.m0 = sol.alpha - 0.5;
  c.sim.horizon = 5.0;
  c.sim.dt = 1e-3;
  const ResetPolicy pol = policy_from(bench_ladder(), sol.alpha);
  const auto w = bind_windows({{WindowSpace::BeliefMean, WindowAnchor::Alpha, 0.0, 0.6}}, pol);
  const double tau = buyer_value(c.sim.m0, sol.alpha, mp.kappa, mp.m_bar, mp.r, [&](double m) { return m - mp.p; }).tau;
  double dev = 0.0;
  for (int i = 0; i < 50; ++i) {
    const SimPath path = simulate_path(c, pol, w, derive_seed(7007, i));
    dev = std::max(dev, std::abs(path.stats.adoption_time - tau));
  }
  o.check(dev <= c.sim.dt, "adoption time vs tau(m0)=" + sci(tau) + ": max |diff| " + sci(dev) + " <= dt");
}

// 8 -------------------------------------------------------------------------
FinanceRun finance_run(const ScenarioConfig& c, double z0, int workers) {
  FinanceRun run;
  run.config = c;
  run.config.sim.horizon = c.finance.horizon;
  run.z0 = z0;
  run.n_paths = c.finance.n_paths;
  run.workers = workers;
  return run;
}

void financing(Verdict& o, const Args& args) {
  ModelParams p = bench();
  p.k2 = 0.3;
  const LadderSolution fb = solve_ladder(p);
  {
    const LeveredSolution lev = solve_levered_equity(p, fb, FinanceMode::SafePatchBlock);
    const auto a = lev.equity, b = fb.value;
    const bool same = lev.beta1 == fb.beta1 && lev.z1_star == fb.z1_star && lev.z2_star == fb.z2_star &&
                      lev.upper == fb.beta2 && a.A == b.A && a.B == b.B;
    o.check(same, "c_d=0 reproduces the unlevered ladder bit for bit");
  }
  ScenarioConfig c;
  c.params = p;
  c.params.c_d = 0.2;
  c.params.phi1 = 0.0;
  c.params.phi2 = 0.2;
  c.sim.base_seed = 8008;
  c.finance.n_paths = 4000;
  {
    const LeveredSolution lev = solve_levered_equity(c.params, fb, FinanceMode::SafePatchBlock);
    const double gap = std::max(std::abs(lev.beta1 - fb.beta1), std::abs(lev.z1_star - fb.z1_star));
    o.check(gap <= 1e-8, "safe block (beta1, z1*) gap " + sci(gap) + " <= 1e-8");
    const WedgeReport w = wedge_report(c.params, lev, fb, finance_run(c, fb.z1_star, args.workers));
    o.check(std::abs(w.wedge.mean) <= 3.0 * w.wedge.se,
            "A^FB - (S+Y) " + sci(w.wedge.mean) + " within 3se " + sci(3.0 * w.wedge.se));
  }
  {
    ScenarioConfig t = c;
    t.params.c_d = 0.5;
    t.params.phi2 = 0.25;
    const LeveredSolution lev = solve_levered_equity(t.params, fb, FinanceMode::Tightness);
    const WedgeReport w = wedge_report(t.params, lev, fb, finance_run(t, fb.z1_star, args.workers));
    const double target = w.discount_default.mean * t.params.phi2;
    const double se = std::hypot(w.agency.se, w.horizon_remainder.se);
    o.check(std::abs(w.wedge.mean - target) <= 3.0 * se, "tightness wedge " + sci(w.wedge.mean) +
                                                             " vs E[e^-rT*] phi2 " + sci(target) + " within 3se " +
                                                             sci(3.0 * se));
  }
  for (const char* name : {"benchmark", "finance_safe", "finance_default", "finance_tightness", "adoption"}) {
    const ScenarioConfig sc = load_config(fs::path(args.configs) / (std::string(name) + ".ini"));
    ModelParams unlev = sc.params;
    unlev.c_d = 0.0;
    const LadderSolution f = solve_ladder(unlev);
    const LeveredSolution lev = solve_levered_equity(sc.params, f, parse_finance_mode(sc.finance.mode));
    const double z0 = sc.sim.z0_at_target ? f.z1_star : sc.sim.z0;
    const WedgeReport w = wedge_report(sc.params, lev, f, finance_run(sc, z0, args.workers));
    o.check(w.agency_nonnegative, std::string(name) + " A " + sci(w.agency.mean) + " >= -3se " +
                                      sci(-3.0 * w.agency.se));
  }
}

// 9 -------------------------------------------------------------------------
void telemetry(Verdict& o, const Args& args) {
  const ScenarioConfig c = load_config(fs::path(args.configs) / "telemetry.ini");
  const LadderSolution lad = solve_ladder(c.params);
  const double band = c.params.sigma / std::sqrt(c.params.lambda_bar);
  const int reps = 50;
  int s1 = 0, s3 = 0;
  std::vector<double> pooled;
  for (int r = 0; r < reps; ++r) {
    const TelemetryData d = simulate_telemetry(c, lad, derive_seed(9009, r), args.workers);
    const SignatureResult s = run_signatures(d, lad, c.telemetry.event_window, band);
    s1 += s.s1_pass;
    s3 += s.s3_pass;
    pooled.insert(pooled.end(), d.post_patch_metric.begin(), d.post_patch_metric.end());
    pooled.insert(pooled.end(), d.post_pivot_metric.begin(), d.post_pivot_metric.end());
  }
  o.check(s1 >= 45, "S1 " + std::to_string(s1) + "/50 >= 90%");
  const PlateauResult pl = plateau_test(pooled);
  std::ostringstream s2;
  s2 << "S2 pooled n=" << pl.n << " k=" << pl.components;
  for (const auto& m : pl.fit) s2 << " " << sci(m.mean);
  s2 << " vs (" << sci(lad.z1_star) << ", " << sci(lad.z2_star) << ") band " << sci(band);
  o.check(plateau_matches(pl, lad, band), s2.str());
  o.check(s3 >= 45, "S3 " + std::to_string(s3) + "/50 >= 90%");

  std::mt19937_64 rng(9119);
  std::exponential_distribution<double> pre(1.0), post(2.0);
  std::vector<Spell> spells;
  for (int i = 0; i < 4000; ++i) {
    const bool is_post = i % 2 == 1;
    const double d = is_post ? post(rng) : pre(rng);
    spells.push_back({std::min(d, 3.0), d < 3.0, is_post, {}, i});
  }
  const CascadeResult cr = cascade_hazard(spells);
  o.check(std::abs(cr.post.estimate - std::log(2.0)) <= 3.0 * cr.post.se,
          "S4 rho " + sci(cr.post.estimate) + " vs log 2 within 3se " + sci(3.0 * cr.post.se));

  std::vector<UptakeRow> step;
  for (int i = 0; i <= 200; ++i) {
    const double m = -0.5 + 0.005 * i;
    step.push_back({0, m, m >= 0.0 ? 1.0 : 0.0, 0.5});
  }
  const RdResult rd = adoption_rd(step, {0.0}, 0.3);
  o.check(std::abs(rd.jump.estimate - 1.0) <= 1e-10, "S5 perfect step beta0 " + sci(rd.jump.estimate));
  const RdResult ds = adoption_rd(synthetic_uptake({{0.0, 0.9, 400}, {0.5, 0.1, 400}}, 0.4, 9229), {0.0, 0.5}, 0.15);
  o.check(ds.interaction.estimate > 0.0 && ds.interaction.p_value < 0.05,
          "S5 deep vs shallow beta1 " + sci(ds.interaction.estimate) + " p " + sci(ds.interaction.p_value));
}

// 10 ------------------------------------------------------------------------
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream f(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

void reproducibility(Verdict& o, const Args& args) {
  const std::vector<std::pair<std::string, std::string>> runs{
      {"solve-ladder", "benchmark"},     {"simulate", "benchmark"},         {"simulate", "adoption"},
      {"adoption", "adoption"},          {"finance-wedge", "finance_safe"}, {"finance-wedge", "finance_default"},
      {"finance-wedge", "finance_tightness"}, {"telemetry", "telemetry"}, {"all", "adoption"}};
  int identical = 0;
  std::string bad;
  for (const auto& [cmd, cfg] : runs) {
    std::map<std::string, std::string> first;
    bool ok = true;
    int k = 0;
    for (int workers : {1, 4, 1}) {
      const fs::path out = fs::path(args.work) / "repro" / (cmd + "_" + cfg) / std::to_string(k++);
      fs::remove_all(out);
      const std::string line = "\"" + args.cli + "\" " + cmd + " --config \"" +
                               (fs::path(args.configs) / (cfg + ".ini")).string() + "\" --out \"" + out.string() +
                               "\" --paths 400 --seed 1010 --workers " + std::to_string(workers) + " > /dev/null 2>&1";
      if (std::system(line.c_str()) != 0) {
        ok = false;
        break;
      }
      auto snap = snapshot(out);
      if (first.empty()) first = std::move(snap);
      else ok = ok && snap == first;
    }
    if (ok && !first.empty()) ++identical;
    else bad += " " + cmd + ":" + cfg;
  }
  o.check(identical == int(runs.size()), std::to_string(identical) + "/" + std::to_string(runs.size()) +
                                             " command runs byte-identical across workers 1/4/1" +
                                             (bad.empty() ? "" : " (differs:" + bad + ")"));
}

} // namespace

int main(int argc, char** argv) {
  Args args;
  CLI::App app{"acceptance criteria"};
  app.add_option("--cli", args.cli, "resetladder binary")->required();
  app.add_option("--configs", args.configs, "shipped configs directory")->required();
  app.add_option("--work", args.work, "scratch directory")->required();
  app.add_option("--only", args.only, "criteria to run")->delimiter(',');
  app.add_option("--workers", args.workers, "OpenMP workers");
  CLI11_PARSE(app, argc, argv);

  struct Item {
    int id;
    const char* name;
    std::function<void(Verdict&)> run;
  };
  const std::vector<Item> items{
      {1, "boundary-system fidelity", boundary_fidelity},
      {2, "QVI verification", qvi},
      {3, "comparative statics", comparative},
      {4, "exit-time oracle", [&](Verdict& o) { exit_time(o, args.workers); }},
      {5, "filter correctness", filter},
      {6, "silence purity and residence scaling", [&](Verdict& o) { silence(o, args.workers); }},
      {7, "adoption", adoption},
      {8, "financing", [&](Verdict& o) { financing(o, args); }},
      {9, "telemetry signatures", [&](Verdict& o) { telemetry(o, args); }},
      {10, "reproducibility", [&](Verdict& o) { reproducibility(o, args); }},
  };
  const std::set<int> only(args.only.begin(), args.only.end());
  int failed = 0;
  for (const auto& item : items) {
    if (!only.empty() && !only.count(item.id)) continue;
    Verdict o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      item.run(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s [%d] %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", item.id, item.name, secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
