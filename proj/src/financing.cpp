#include "rl/financing.hpp"

#include "newton.hpp"
#include "rl/errors.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rl {

FinanceMode parse_finance_mode(const std::string& text) {
  if (text == "safe") return FinanceMode::SafePatchBlock;
  if (text == "with-default") return FinanceMode::WithDefault;
  if (text == "tightness") return FinanceMode::Tightness;
  throw std::invalid_argument("unknown finance mode: " + text);
}

const char* to_string(FinanceMode mode) noexcept {
  switch (mode) {
  case FinanceMode::SafePatchBlock: return "safe";
  case FinanceMode::WithDefault: return "with-default";
  case FinanceMode::Tightness: return "tightness";
  }
  return "safe";
}

double LeveredSolution::equity_at(double z) const {
  if (z <= beta1) return equity(z1_star) - k1;
  if (z >= upper) return default_on_path ? 0.0 : equity(z2_star) - k2;
  return equity(z);
}

ResetPolicy LeveredSolution::policy() const {
  ResetPolicy pol;
  pol.beta1 = beta1;
  pol.z1_star = z1_star;
  pol.beta2 = upper;
  pol.z2_star = default_on_path ? upper : z2_star;
  pol.k1 = k1;
  pol.k2 = k2;
  pol.upper_default = default_on_path;
  return pol;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ValueFunction levered_shape(const ModelParams& params, double coupon) {
  ValueFunction s;
  s.roots = characteristic_roots(params.mu, params.sigma, params.r);
  s.particular = particular_solution(params.payoff, params.mu, params.sigma, params.r, coupon);
  s.z_ref = params.payoff.center;
  return s;
}

double band_minimum(const ValueFunction& v, double lo, double hi, int n = 2001) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::min(m, v(lo + (hi - lo) * i / (n - 1)));
  return m;
}

void require_positive(const LeveredSolution& lev, const char* what) {
  // the endpoint z_d itself has S = 0; check the interior
  const double hi = lev.default_on_path ? lev.upper - 1e-6 * (lev.upper - lev.beta1) : lev.upper;
  const double m = band_minimum(lev.equity, lev.beta1, hi);
  if (!(m > 0.0))
    throw SolverError(SolverError::Kind::InfeasibleMode,
                      std::string(what) + ": equity is not positive on the band (min S = " + std::to_string(m) + ")");
}

using Vec5 = detail::Vec<5>;
using Mat5 = detail::Mat<5>;

Vec5 default_residual(const ValueFunction& shape, const Vec5& x, double k1) {
  ValueFunction s = shape;
  s.A = x[3];
  s.B = x[4];
  Vec5 f;
  f << s(x[0]) - s(x[1]) + k1, s.d1(x[0]), s.d1(x[1]), s(x[2]), s.d1(x[2]);
  return f;
}

Mat5 default_jacobian(const ValueFunction& shape, const Vec5& x) {
  ValueFunction s = shape;
  s.A = x[3];
  s.B = x[4];
  const double ep = s.roots.plus, em = s.roots.minus;
  Mat5 J = Mat5::Zero();
  J(0, 0) = s.d1(x[0]);
  J(0, 1) = -s.d1(x[1]);
  J(0, 3) = s.e_plus(x[0]) - s.e_plus(x[1]);
  J(0, 4) = s.e_minus(x[0]) - s.e_minus(x[1]);
  J(1, 0) = s.d2(x[0]);
  J(1, 3) = ep * s.e_plus(x[0]);
  J(1, 4) = em * s.e_minus(x[0]);
  J(2, 1) = s.d2(x[1]);
  J(2, 3) = ep * s.e_plus(x[1]);
  J(2, 4) = em * s.e_minus(x[1]);
  J(3, 2) = s.d1(x[2]);
  J(3, 3) = s.e_plus(x[2]);
  J(3, 4) = s.e_minus(x[2]);
  J(4, 2) = s.d2(x[2]);
  J(4, 3) = ep * s.e_plus(x[2]);
  J(4, 4) = em * s.e_minus(x[2]);
  return J;
}

/// Coefficients (C+, C-) of the homogeneous part solving two linear
/// conditions a_i . (C+, C-) = b_i.
std::pair<double, double> solve2(double a11, double a12, double a21, double a22, double b1, double b2) {
  Eigen::Matrix2d M;
  M << a11, a12, a21, a22;
  const Eigen::Vector2d c = M.fullPivLu().solve(Eigen::Vector2d(b1, b2));
  return {c[0], c[1]};
}

} // namespace

LeveredSolution solve_levered_equity(const ModelParams& params, const LadderSolution& fb, FinanceMode mode,
                                     const SolverOptions& opts) {
  LeveredSolution lev;
  lev.mode = mode;
  lev.c_d = params.c_d;
  lev.k1 = params.k1;
  lev.k2 = params.k2;
  const ValueFunction shape = levered_shape(params, params.c_d + opts.band_clock_cost);

  switch (mode) {
  case FinanceMode::SafePatchBlock: {
    SolverOptions o = opts;
    o.flow_shift = params.c_d;
    const LadderSolution sol =
        solve_ladder(params, LadderGuess{fb.beta1, fb.z1_star, fb.z2_star, fb.beta2, fb.value.A, fb.value.B}, o);
    lev.beta1 = sol.beta1;
    lev.z1_star = sol.z1_star;
    lev.z2_star = sol.z2_star;
    lev.upper = sol.beta2;
    lev.z_d = kNaN;
    lev.equity = sol.value;
    lev.residuals = sol.residuals.boundary;
    lev.iterations = sol.iterations;
    require_positive(lev, "safe patch block");
    break;
  }
  case FinanceMode::WithDefault: {
    const ValueFunction& v = fb.value;
    Vec5 x0;
    x0 << fb.beta1, fb.z1_star, fb.beta2, v.A, v.B;
    auto res = [&](const Vec5& x) { return default_residual(shape, x, params.k1); };
    auto jac = [&](const Vec5& x) { return default_jacobian(shape, x); };
    auto adm = [&](const Vec5& x) { return x[0] < x[1] && x[1] < x[2]; };
    const auto out = detail::damped_newton<5>(res, jac, adm, x0, opts.tol, opts.max_iter);
    if (!(out.x[1] - out.x[0] > opts.min_gap && out.x[2] - out.x[1] > opts.min_gap))
      throw SolverError(SolverError::Kind::OrderingViolation, "default block violates beta1 < z1* < z_d");
    lev.beta1 = out.x[0];
    lev.z1_star = out.x[1];
    lev.upper = lev.z_d = out.x[2];
    lev.z2_star = kNaN;
    lev.default_on_path = true;
    lev.equity = shape;
    lev.equity.A = out.x[3];
    lev.equity.B = out.x[4];
    for (int i = 0; i < 5; ++i) lev.residuals[i] = std::abs(out.f[i]);
    lev.iterations = out.iterations;
    require_positive(lev, "with-default");
    break;
  }
  case FinanceMode::Tightness: {
    // first-best patch rung, default at the first-best pivot trigger;
    // S(beta1) = S(z1*) - K1 and S(beta2) = 0 pin (A, B)
    lev.beta1 = fb.beta1;
    lev.z1_star = fb.z1_star;
    lev.upper = lev.z_d = fb.beta2;
    lev.z2_star = kNaN;
    lev.default_on_path = true;
    ValueFunction s = shape;
    const double p_b1 = poly_eval(s.particular, lev.beta1), p_z1 = poly_eval(s.particular, lev.z1_star),
                 p_up = poly_eval(s.particular, lev.upper);
    std::tie(s.A, s.B) = solve2(s.e_plus(lev.beta1) - s.e_plus(lev.z1_star), s.e_minus(lev.beta1) - s.e_minus(lev.z1_star),
                                s.e_plus(lev.upper), s.e_minus(lev.upper), p_z1 - p_b1 - params.k1, -p_up);
    lev.equity = s;
    lev.residuals[0] = std::abs(s(lev.beta1) - s(lev.z1_star) + params.k1);
    lev.residuals[1] = std::abs(s(lev.upper));
    require_positive(lev, "tightness");
    break;
  }
  }
  lev.min_equity = band_minimum(lev.equity, lev.beta1, lev.upper);
  return lev;
}

double takeover_envelope(double z, const LadderSolution& fb, double phi_max) {
  return fb.value_anywhere(z) - phi_max;
}

double takeover_cost(double z, const LadderSolution& fb, const ModelParams& params) {
  if (z <= fb.beta1) return params.phi1;
  if (z >= fb.beta2) return params.phi2;
  return 0.0;
}

double debt_value_closed_form(const LeveredSolution& lev, const LadderSolution& fb, const ModelParams& params,
                              double z) {
  const double perpetuity = params.c_d / params.r;
  if (!lev.default_on_path) return perpetuity;
  if (z >= lev.upper) return fb.value_anywhere(z) - takeover_cost(z, fb, params);
  const ValueFunction& e = lev.equity; // roots and z_ref only
  const double y_to = fb.value_anywhere(lev.upper) - takeover_cost(lev.upper, fb, params);
  const auto [cp, cm] = solve2(e.e_plus(lev.beta1) - e.e_plus(lev.z1_star), e.e_minus(lev.beta1) - e.e_minus(lev.z1_star),
                               e.e_plus(lev.upper), e.e_minus(lev.upper), 0.0, y_to - perpetuity);
  const double zz = z <= lev.beta1 ? lev.z1_star : z;
  return perpetuity + cp * e.e_plus(zz) + cm * e.e_minus(zz);
}

namespace {

struct PathValues {
  double debt = 0.0;
  double equity = 0.0;
  double agency = 0.0;
  double phi_used = 0.0;
  double phi_max = 0.0;
  double disc_default = 0.0;
  double remainder = 0.0; ///< e^{-rT} (A^FB - S - Y)(z_T) on paths alive at the horizon
  bool defaulted = false;
};

std::vector<PathValues> finance_paths(const ModelParams& params, const LeveredSolution& lev, const LadderSolution& fb,
                                      const FinanceRun& run) {
  ScenarioConfig cfg = run.config;
  cfg.params = params;
  cfg.sim.z0_at_target = false;
  cfg.sim.z0 = run.z0;
  const auto stats = simulate_stats(cfg, lev.policy(), {}, run.n_paths, run.workers);
  const double r = params.r, c = params.c_d, a0 = fb.value_anywhere(run.z0);
  std::vector<PathValues> out(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const PathStats& s = stats[i];
    PathValues& pv = out[i];
    const double d = s.disc_end;
    const double coupon = c * (1.0 - d) / r;
    pv.defaulted = !std::isnan(s.default_time);
    if (pv.defaulted) {
      pv.phi_used = d * takeover_cost(s.end_z, fb, params);
      pv.phi_max = d * params.phi_max();
      pv.disc_default = d;
      pv.debt = coupon + d * fb.value_anywhere(s.end_z) - pv.phi_used;
      pv.equity = s.disc_flow - coupon - s.disc_reset_cost;
    } else {
      pv.debt = coupon + d * debt_value_closed_form(lev, fb, params, s.end_z);
      pv.equity = s.disc_flow - coupon - s.disc_reset_cost + d * lev.equity_at(s.end_z);
      pv.remainder = d * (fb.value_anywhere(s.end_z) - lev.equity_at(s.end_z) -
                          debt_value_closed_form(lev, fb, params, s.end_z));
    }
    pv.agency = a0 - (s.disc_flow - s.disc_reset_cost + d * fb.value_anywhere(s.end_z));
  }
  return out;
}

template <class F>
MeanSe summarize(const std::vector<PathValues>& v, F f) {
  MeanSe r;
  r.n = static_cast<int>(v.size());
  if (v.empty()) return r;
  double sum = 0.0;
  for (const auto& x : v) sum += f(x);
  r.mean = sum / r.n;
  if (r.n > 1) {
    double ss = 0.0;
    for (const auto& x : v) ss += (f(x) - r.mean) * (f(x) - r.mean);
    r.se = std::sqrt(ss / (r.n - 1) / r.n);
  }
  return r;
}

} // namespace

MeanSe debt_value_mc(const ModelParams& params, const LeveredSolution& lev, const LadderSolution& fb,
                     const FinanceRun& run) {
  const auto paths = finance_paths(params, lev, fb, run);
  return summarize(paths, [](const PathValues& p) { return p.debt; });
}

WedgeReport wedge_report(const ModelParams& params, const LeveredSolution& lev, const LadderSolution& fb,
                         const FinanceRun& run) {
  const auto paths = finance_paths(params, lev, fb, run);
  WedgeReport w;
  w.mode = lev.mode;
  w.z0 = run.z0;
  w.a_fb = fb.value_anywhere(run.z0);
  w.equity_ode = lev.equity_at(run.z0);
  w.equity_mc = summarize(paths, [](const PathValues& p) { return p.equity; });
  w.debt = summarize(paths, [](const PathValues& p) { return p.debt; });
  w.agency = summarize(paths, [](const PathValues& p) { return p.agency; });
  w.irreversibility = summarize(paths, [](const PathValues& p) { return p.phi_used; });
  w.phi_max_term = summarize(paths, [](const PathValues& p) { return p.phi_max; });
  w.discount_default = summarize(paths, [](const PathValues& p) { return p.disc_default; });
  const double a0 = w.a_fb;
  w.wedge = summarize(paths, [a0](const PathValues& p) { return a0 - p.equity - p.debt; });
  w.bound_slack = summarize(paths, [a0](const PathValues& p) { return p.agency + p.phi_max - (a0 - p.equity - p.debt); });
  w.horizon_remainder = summarize(paths, [](const PathValues& p) { return p.remainder; });
  w.decomposition_gap = w.wedge.mean - w.agency.mean - w.irreversibility.mean - w.horizon_remainder.mean;
  int defaults = 0;
  for (const auto& p : paths) defaults += p.defaulted;
  w.default_share = paths.empty() ? 0.0 : double(defaults) / paths.size();
  w.agency_nonnegative = w.agency.mean >= -3.0 * w.agency.se;
  // slack is identically zero on paths without default; allow rounding and the horizon remainder
  w.bound_holds = w.bound_slack.mean >= -3.0 * w.bound_slack.se - std::abs(w.horizon_remainder.mean) -
                                            1e-12 * (1.0 + std::abs(a0));
  return w;
}

} // namespace rl
