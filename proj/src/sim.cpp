#include "rl/sim.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace rl {

const char* to_string(EventKind kind) noexcept {
  switch (kind) {
  case EventKind::Publication: return "publication";
  case EventKind::Patch: return "patch";
  case EventKind::Pivot: return "pivot";
  case EventKind::Adoption: return "adoption";
  case EventKind::Default: return "default";
  case EventKind::HorizonEnd: return "horizon-end";
  }
  return "unknown";
}

ResetPolicy policy_from(const LadderSolution& ladder, double alpha) {
  ResetPolicy pol;
  pol.beta1 = ladder.beta1;
  pol.z1_star = ladder.z1_star;
  pol.z2_star = ladder.z2_star;
  pol.beta2 = ladder.beta2;
  pol.k1 = ladder.k1;
  pol.k2 = ladder.k2;
  pol.alpha = alpha;
  return pol;
}

std::vector<SilenceWindow> bind_windows(const std::vector<SilenceWindow>& windows, const ResetPolicy& policy) {
  std::vector<SilenceWindow> out = windows;
  for (auto& w : out) {
    switch (w.anchor) {
    case WindowAnchor::Value: break;
    case WindowAnchor::Beta1: w.center = policy.beta1; break;
    case WindowAnchor::Beta2: w.center = policy.beta2; break;
    case WindowAnchor::Z1: w.center = policy.z1_star; break;
    case WindowAnchor::Z2: w.center = policy.z2_star; break;
    case WindowAnchor::Alpha: w.center = policy.alpha; break;
    }
  }
  return out;
}

namespace {

class PathRunner {
public:
  PathRunner(const ScenarioConfig& config, const ResetPolicy& policy, const std::vector<SilenceWindow>& windows,
             std::uint64_t seed, bool record)
      : p_(config.params), s_(config.sim), pol_(policy), win_(windows), rng_(seed), record_(record) {
    out_.stats.residence.assign(win_.size(), 0.0);
    out_.stats.disc_residence.assign(win_.size(), 0.0);
  }

  SimPath run() {
    z_ = s_.z0_at_target ? pol_.z1_star : s_.z0;
    b_ = {s_.m0, s_.v0};
    if (b_.m >= pol_.alpha) mark_adoption(0.0, b_.m);
    next_pub_ = p_.lambda_bar > 0.0 ? std::exponential_distribution<double>(p_.lambda_bar)(rng_) : INFINITY;

    const double var = p_.sigma * p_.sigma;
    double t = 0.0;
    bool done = false;
    while (!done && t < s_.horizon) {
      const double h = std::min(s_.dt, s_.horizon - t);
      const double z_new = z_ + p_.drift(z_) * h + p_.sigma * std::sqrt(h) * normal_(rng_);

      int hit = 0; // 1 lower, 2 upper
      double frac = 1.0;
      double z_hit = z_new;
      if (z_new <= pol_.beta1) {
        hit = 1;
        frac = (z_ - pol_.beta1) / (z_ - z_new);
      } else if (z_new >= pol_.beta2) {
        hit = 2;
        frac = (pol_.beta2 - z_) / (z_new - z_);
      } else if (s_.bridge) {
        const double u = uniform_(rng_);
        const double pl = bridge_prob(z_ - pol_.beta1, z_new - pol_.beta1, var * h);
        const double pu = bridge_prob(pol_.beta2 - z_, pol_.beta2 - z_new, var * h);
        if (u < pl) hit = 1;
        else if (u < pl + pu) hit = 2;
        if (hit) {
          frac = 0.5;
          z_hit = hit == 1 ? pol_.beta1 : pol_.beta2;
        }
      }
      const double t_end = t + frac * h;
      const double z_end = hit == 1 ? pol_.beta1 : hit == 2 ? pol_.beta2 : z_new;

      // running costs and residence use the state at the start of the step
      accrue(t, t_end, z_, z_end);

      while (next_pub_ <= t_end) {
        const double w = (next_pub_ - t) / (t_end - t);
        const double zc = z_ + w * (z_end - z_);
        advance_belief(next_pub_);
        if (!silent(zc, b_.m)) publish(next_pub_, zc);
        next_pub_ += std::exponential_distribution<double>(p_.lambda_bar)(rng_);
      }
      advance_belief(t_end);
      t = t_end;
      z_ = z_end;

      if (hit) {
        auto& st = out_.stats;
        if (std::isnan(st.first_exit_time)) st.first_exit_time = t;
        const double disc = std::exp(-p_.r * t);
        if (hit == 1) {
          ++st.patches;
          st.disc_reset_cost += disc * pol_.k1;
          emit(t, EventKind::Patch, z_hit, pol_.z1_star);
          z_ = pol_.z1_star;
        } else if (pol_.upper_default) {
          st.default_time = t;
          emit(t, EventKind::Default, z_hit, z_hit);
          done = true;
        } else {
          ++st.pivots;
          st.disc_reset_cost += disc * pol_.k2;
          emit(t, EventKind::Pivot, z_hit, pol_.z2_star);
          z_ = pol_.z2_star;
        }
        if (pol_.stop_at_first_exit) done = true;
      }
    }
    if (!done) emit(t, EventKind::HorizonEnd, z_, z_);
    out_.stats.end_time = t;
    out_.stats.end_z = z_;
    out_.stats.disc_end = std::exp(-p_.r * t);
    return std::move(out_);
  }

private:
  static double bridge_prob(double d0, double d1, double var_h) {
    const double e = 2.0 * d0 * d1 / var_h;
    return e > 40.0 ? 0.0 : std::exp(-e);
  }

  bool silent(double z, double m) const {
    for (const auto& w : win_)
      if (w.contains(z, m)) return true;
    return false;
  }

  void accrue(double t0, double t1, double z0, double z1) {
    auto& st = out_.stats;
    const double len = t1 - t0;
    const double d0 = std::exp(-p_.r * t0), d1 = std::exp(-p_.r * t1);
    const double avg = 0.5 * (d0 + d1);
    st.disc_flow += 0.5 * (d0 * p_.payoff.base(z0) + d1 * p_.payoff.base(z1)) * len;
    st.disc_adoption += avg * p_.payoff.adoption_term(b_.m, pol_.alpha) * len;
    bool any = false;
    for (std::size_t i = 0; i < win_.size(); ++i) {
      if (win_[i].contains(z0, b_.m)) {
        any = true;
        st.residence[i] += len;
        st.disc_residence[i] += avg * len;
      }
    }
    st.disc_clock_cost += avg * p_.clock_cost(any ? 0.0 : p_.lambda_bar) * len;
  }

  void advance_belief(double to) {
    if (to <= tb_) return;
    if (std::isnan(out_.stats.adoption_time) && b_.m < pol_.alpha && pol_.alpha < p_.m_bar) {
      const double tau = std::log((p_.m_bar - b_.m) / (p_.m_bar - pol_.alpha)) / p_.kappa;
      if (tb_ + tau <= to) {
        const double m_pre = b_.m;
        b_ = drift_step(b_, tau, p_);
        tb_ += tau;
        b_.m = std::max(b_.m, pol_.alpha);
        mark_adoption(tb_, m_pre);
      }
    }
    b_ = drift_step(b_, to - tb_, p_);
    tb_ = to;
  }

  void publish(double t, double zc) {
    const double y = zc + std::sqrt(p_.sigma_eps2) * normal_(rng_);
    const double m_pre = b_.m;
    if (b_.v > 0.0) b_ = publication_update(b_, y, p_.sigma_eps2);
    ++out_.stats.publications;
    if (silent(zc, m_pre)) ++out_.stats.publications_in_window;
    if (record_) out_.events.push_back({t, EventKind::Publication, zc, zc, m_pre, b_.m, b_.v, y});
    if (std::isnan(out_.stats.adoption_time) && b_.m >= pol_.alpha) mark_adoption(t, m_pre);
  }

  void mark_adoption(double t, double m_pre) {
    out_.stats.adoption_time = t;
    if (record_) out_.events.push_back({t, EventKind::Adoption, z_, z_, m_pre, b_.m, b_.v});
  }

  void emit(double t, EventKind kind, double z_pre, double z_post) {
    if (record_) out_.events.push_back({t, kind, z_pre, z_post, b_.m, b_.m, b_.v});
  }

  const ModelParams& p_;
  const SimSettings& s_;
  const ResetPolicy& pol_;
  const std::vector<SilenceWindow>& win_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
  bool record_;
  SimPath out_;
  double z_ = 0.0;
  BeliefState b_;
  double tb_ = 0.0;
  double next_pub_ = INFINITY;
};

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe r;
  r.n = static_cast<int>(xs.size());
  if (xs.empty()) return r;
  double sum = 0.0;
  for (double x : xs) sum += x;
  r.mean = sum / r.n;
  if (r.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / (r.n - 1) / r.n);
  }
  return r;
}

template <class F>
MeanSe collect(const std::vector<PathStats>& stats, F f, bool skip_nan = false) {
  std::vector<double> xs;
  xs.reserve(stats.size());
  for (const auto& s : stats) {
    const double x = f(s);
    if (skip_nan && std::isnan(x)) continue;
    xs.push_back(x);
  }
  return mean_se(xs);
}

} // namespace

SimPath simulate_path(const ScenarioConfig& config, const ResetPolicy& policy, const std::vector<SilenceWindow>& windows,
                      std::uint64_t seed, bool record_events) {
  return PathRunner(config, policy, windows, seed, record_events).run();
}

std::vector<PathStats> simulate_stats(const ScenarioConfig& config, const ResetPolicy& policy,
                                      const std::vector<SilenceWindow>& windows, int n_paths, int workers) {
  std::vector<PathStats> stats(static_cast<std::size_t>(std::max(n_paths, 0)));
  const std::uint64_t base = config.sim.base_seed;
#pragma omp parallel for schedule(dynamic, 16) num_threads(std::max(workers, 1))
  for (int i = 0; i < n_paths; ++i)
    stats[i] = simulate_path(config, policy, windows, derive_seed(base, static_cast<std::uint64_t>(i)), false).stats;
  return stats;
}

BatchStats aggregate(std::vector<PathStats> stats, std::vector<SimPath> kept) {
  BatchStats b;
  b.n_paths = static_cast<int>(stats.size());
  b.publications = collect(stats, [](const PathStats& s) { return double(s.publications); });
  b.patches = collect(stats, [](const PathStats& s) { return double(s.patches); });
  b.pivots = collect(stats, [](const PathStats& s) { return double(s.pivots); });
  b.first_exit_time = collect(stats, [](const PathStats& s) { return s.first_exit_time; }, true);
  b.adoption_time = collect(stats, [](const PathStats& s) { return s.adoption_time; }, true);
  b.disc_payoff = collect(stats, [](const PathStats& s) { return s.disc_payoff(); });
  b.disc_clock_cost = collect(stats, [](const PathStats& s) { return s.disc_clock_cost; });
  b.events_per_time = collect(stats, [](const PathStats& s) {
    return s.end_time > 0.0 ? (s.publications + s.resets()) / s.end_time : 0.0;
  });
  const std::size_t nw = stats.empty() ? 0 : stats.front().residence.size();
  double res_total = 0.0;
  for (std::size_t w = 0; w < nw; ++w) {
    b.residence.push_back(collect(stats, [w](const PathStats& s) { return s.residence[w]; }));
    b.disc_residence.push_back(collect(stats, [w](const PathStats& s) { return s.disc_residence[w]; }));
  }
  for (const auto& s : stats) {
    b.publications_in_window += s.publications_in_window;
    b.max_events = std::max(b.max_events, s.publications + s.resets());
    b.total_resets += s.resets();
    for (double r : s.residence) res_total += r;
  }
  b.residence_per_cycle_total = b.total_resets > 0 ? res_total / double(b.total_resets) : 0.0;
  b.kept = std::move(kept);
  return b;
}

BatchStats run_batch(const ScenarioConfig& config, const ResetPolicy& policy, const std::vector<SilenceWindow>& windows,
                     int n_paths, const BatchOptions& opts) {
  auto stats = simulate_stats(config, policy, windows, n_paths, opts.workers);
  std::vector<SimPath> kept;
  for (int i = 0; i < std::min(opts.keep_paths, n_paths); ++i)
    kept.push_back(simulate_path(config, policy, windows, derive_seed(config.sim.base_seed, i), true));
  return aggregate(std::move(stats), std::move(kept));
}

BatchStats run_batch_serial(const ScenarioConfig& config, const ResetPolicy& policy,
                            const std::vector<SilenceWindow>& windows, int n_paths, int keep_paths) {
  std::vector<PathStats> stats;
  std::vector<SimPath> kept;
  stats.reserve(n_paths);
  for (int i = 0; i < n_paths; ++i) {
    SimPath path = simulate_path(config, policy, windows, derive_seed(config.sim.base_seed, i), i < keep_paths);
    stats.push_back(path.stats);
    if (i < keep_paths) kept.push_back(std::move(path));
  }
  return aggregate(std::move(stats), std::move(kept));
}

std::vector<ResidenceRow> window_residence_report(const ScenarioConfig& config, const ResetPolicy& policy,
                                                  const std::vector<double>& radii, int n_paths, int workers) {
  std::vector<double> deltas = radii;
  std::sort(deltas.begin(), deltas.end());
  std::vector<ResidenceRow> rows;
  const auto& p = config.params;
  for (double delta : deltas) {
    std::vector<SilenceWindow> windows;
    if (delta > 0.0) {
      windows.push_back({WindowSpace::PrivateState, WindowAnchor::Beta1, 0.0, delta});
      windows.push_back({WindowSpace::PrivateState, WindowAnchor::Beta2, 0.0, delta});
    }
    const auto bound = bind_windows(windows, policy);
    const auto stats = simulate_stats(config, policy, bound, n_paths, workers);

    ResidenceRow row;
    row.delta = delta;
    double res_sum = 0.0, reset_sum = 0.0, save_sum = 0.0;
    std::vector<double> res(stats.size()), resets(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) {
      for (double r : stats[i].residence) res[i] += r;
      resets[i] = stats[i].resets();
      res_sum += res[i];
      reset_sum += resets[i];
      for (double d : stats[i].disc_residence) save_sum += d;
      row.publications_in_window += stats[i].publications_in_window;
    }
    const double n = double(stats.size());
    if (reset_sum > 0.0) {
      row.per_cycle = res_sum / reset_sum;
      double ss = 0.0;
      for (std::size_t i = 0; i < stats.size(); ++i) {
        const double e = res[i] - row.per_cycle * resets[i];
        ss += e * e;
      }
      row.per_cycle_se = n > 1 ? std::sqrt(ss / (n * (n - 1))) / (reset_sum / n) : 0.0;
    }
    row.clock_saving = p.clock_cost(p.lambda_bar) * save_sum / n;
    // driftless Green's function: each trigger window contributes
    // delta^2 (distance of the start to the far trigger) / (sigma^2 L), which sums to delta^2 / sigma^2
    row.oracle = p.constant_drift() && p.mu == 0.0 ? delta * delta / (p.sigma * p.sigma) : NAN;
    rows.push_back(row);
  }
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(rows[j].delta * 2.0 - rows[i].delta) < 1e-12 && rows[j].per_cycle > 0.0)
        rows[i].ratio = rows[i].per_cycle / rows[j].per_cycle;
  return rows;
}

} // namespace rl
