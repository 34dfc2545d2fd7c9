#include "rl/ladder.hpp"

#include "newton.hpp"
#include "rl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rl {

CharacteristicRoots characteristic_roots(double mu, double sigma, double r) {
  if (!(sigma > 0.0) || !(r > 0.0)) throw std::invalid_argument("characteristic_roots: sigma > 0 and r > 0 required");
  const double a = 0.5 * sigma * sigma;
  const double disc = std::sqrt(mu * mu + 4.0 * a * r);
  // q = -(b + sign(b) sqrt(b^2 - 4ac)) / 2 with b = mu, c = -r; roots q/a, c/q
  const double q = -0.5 * (mu + (mu >= 0.0 ? disc : -disc));
  const double x1 = q / a;
  const double x2 = -r / q;
  return {std::max(x1, x2), std::min(x1, x2)};
}

Poly4 particular_solution(const Poly4& flow, double mu, double sigma, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("particular_solution: r > 0 required");
  const double half_var = 0.5 * sigma * sigma;
  Poly4 c{};
  // match coefficients from the top: r c_k = f_k + mu (k+1) c_{k+1} + half_var (k+2)(k+1) c_{k+2}
  for (int k = 4; k >= 0; --k) {
    double v = flow[k];
    if (k + 1 <= 4) v += mu * (k + 1) * c[k + 1];
    if (k + 2 <= 4) v += half_var * (k + 2) * (k + 1) * c[k + 2];
    c[k] = v / r;
  }
  return c;
}

Poly4 particular_solution(const FlowPayoff& payoff, double mu, double sigma, double r, double clock_cost) {
  Poly4 flow = payoff.coefficients();
  flow[0] -= clock_cost;
  return particular_solution(flow, mu, sigma, r);
}

double ValueFunction::e_plus(double z) const { return std::exp(roots.plus * (z - z_ref)); }
double ValueFunction::e_minus(double z) const { return std::exp(roots.minus * (z - z_ref)); }

double ValueFunction::operator()(double z) const {
  return poly_eval(particular, z) + A * e_plus(z) + B * e_minus(z);
}

double ValueFunction::d1(double z) const {
  return poly_eval(poly_derivative(particular), z) + A * roots.plus * e_plus(z) + B * roots.minus * e_minus(z);
}

double ValueFunction::d2(double z) const {
  return poly_eval(poly_derivative(poly_derivative(particular)), z) + A * roots.plus * roots.plus * e_plus(z) +
         B * roots.minus * roots.minus * e_minus(z);
}

double LadderResiduals::max_boundary() const { return *std::max_element(boundary.begin(), boundary.end()); }

double LadderSolution::impulse_value() const {
  return std::max(value(z1_star) - k1, value(z2_star) - k2);
}

double LadderSolution::value_anywhere(double z) const {
  if (z <= beta1) return value(z1_star) - k1;
  if (z >= beta2) return value(z2_star) - k2;
  return value(z);
}

const char* to_string(IcClass c) noexcept {
  switch (c) {
  case IcClass::TwoImpulseConsistent: return "two-impulse-consistent";
  case IcClass::PatchFavored: return "patch-favored";
  case IcClass::PivotFavored: return "pivot-favored";
  }
  return "unknown";
}

namespace {

using detail::Mat;
using detail::Vec;

ValueFunction with_coeffs(ValueFunction v, double A, double B) {
  v.A = A;
  v.B = B;
  return v;
}

ValueFunction shape_for(const ModelParams& params, const SolverOptions& opts) {
  if (!params.constant_drift())
    throw std::invalid_argument("solve_ladder: constant-coefficient drift required (mu_table must be empty)");
  ValueFunction shape;
  shape.roots = characteristic_roots(params.mu, params.sigma, params.r);
  shape.particular =
      particular_solution(params.payoff, params.mu, params.sigma, params.r, opts.band_clock_cost + opts.flow_shift);
  shape.z_ref = params.payoff.center;
  return shape;
}

Vec<6> residual6(const ValueFunction& shape, const Vec<6>& x, double k1, double k2) {
  const ValueFunction v = with_coeffs(shape, x[4], x[5]);
  Vec<6> f;
  f << v(x[0]) - v(x[1]) + k1, v.d1(x[0]), v.d1(x[1]), v(x[3]) - v(x[2]) + k2, v.d1(x[3]), v.d1(x[2]);
  return f;
}

Mat<6> jacobian6(const ValueFunction& shape, const Vec<6>& x) {
  const ValueFunction v = with_coeffs(shape, x[4], x[5]);
  const double b1 = x[0], z1 = x[1], z2 = x[2], b2 = x[3];
  const double ep = shape.roots.plus, em = shape.roots.minus;
  Mat<6> J = Mat<6>::Zero();
  // F1 = V(b1) - V(z1) + K1
  J(0, 0) = v.d1(b1);
  J(0, 1) = -v.d1(z1);
  J(0, 4) = v.e_plus(b1) - v.e_plus(z1);
  J(0, 5) = v.e_minus(b1) - v.e_minus(z1);
  // F2 = V'(b1)
  J(1, 0) = v.d2(b1);
  J(1, 4) = ep * v.e_plus(b1);
  J(1, 5) = em * v.e_minus(b1);
  // F3 = V'(z1)
  J(2, 1) = v.d2(z1);
  J(2, 4) = ep * v.e_plus(z1);
  J(2, 5) = em * v.e_minus(z1);
  // F4 = V(b2) - V(z2) + K2
  J(3, 3) = v.d1(b2);
  J(3, 2) = -v.d1(z2);
  J(3, 4) = v.e_plus(b2) - v.e_plus(z2);
  J(3, 5) = v.e_minus(b2) - v.e_minus(z2);
  // F5 = V'(b2)
  J(4, 3) = v.d2(b2);
  J(4, 4) = ep * v.e_plus(b2);
  J(4, 5) = em * v.e_minus(b2);
  // F6 = V'(z2)
  J(5, 2) = v.d2(z2);
  J(5, 4) = ep * v.e_plus(z2);
  J(5, 5) = em * v.e_minus(z2);
  return J;
}

bool ordered(const Vec<6>& x, double gap) {
  return x[1] - x[0] > gap && x[2] - x[1] > gap && x[3] - x[2] > gap;
}

/// (A, B) solving V'(lo) = V'(hi) = 0 for the given shape.
std::pair<double, double> contact_coefficients(const ValueFunction& shape, double lo, double hi) {
  const Poly4 dp = poly_derivative(shape.particular);
  Eigen::Matrix2d M;
  M << shape.roots.plus * shape.e_plus(lo), shape.roots.minus * shape.e_minus(lo), shape.roots.plus * shape.e_plus(hi),
      shape.roots.minus * shape.e_minus(hi);
  const Eigen::Vector2d rhs(-poly_eval(dp, lo), -poly_eval(dp, hi));
  const Eigen::Vector2d ab = M.fullPivLu().solve(rhs);
  return {ab[0], ab[1]};
}

} // namespace

std::array<double, 6> ladder_residual(const ValueFunction& shape, const std::array<double, 6>& theta, double k1,
                                      double k2) {
  const Vec<6> f = residual6(shape, Eigen::Map<const Vec<6>>(theta.data()), k1, k2);
  return {f[0], f[1], f[2], f[3], f[4], f[5]};
}

LadderGuess default_guess(const ModelParams& params, const SolverOptions& opts) {
  const auto& pay = params.payoff;
  double peak_offset = 0.0;
  double curvature = 0.0; // |pi''| at the peak(s)
  if (pay.c_4 > 0.0) {
    const double u2 = pay.width * pay.width - pay.c_q / (2.0 * pay.c_4);
    if (u2 > 0.0) {
      peak_offset = std::sqrt(u2);
      curvature = 8.0 * pay.c_4 * u2;
    } else {
      curvature = 2.0 * pay.c_q - 4.0 * pay.c_4 * pay.width * pay.width;
    }
  } else {
    curvature = 2.0 * pay.c_q;
  }
  auto span = [&](double k) {
    if (!(curvature > 0.0)) return 1.0;
    return std::pow(2.0 * k / curvature, 0.25) * std::pow(params.sigma * params.sigma / params.r, 0.25);
  };
  const double s1 = span(params.k1), s2 = span(params.k2);
  LadderGuess g;
  const double lo_peak = pay.center - peak_offset, hi_peak = pay.center + peak_offset;
  g.beta1 = lo_peak - s1;
  g.beta2 = hi_peak + s2;
  g.z1_star = lo_peak - (peak_offset > 0.0 ? -0.25 * s1 : 0.25 * s1);
  g.z2_star = hi_peak + (peak_offset > 0.0 ? -0.25 * s2 : 0.25 * s2);
  if (peak_offset == 0.0) {
    g.z1_star = pay.center - 0.25 * s1;
    g.z2_star = pay.center + 0.25 * s2;
  }
  const ValueFunction shape = shape_for(params, opts);
  std::tie(g.A, g.B) = contact_coefficients(shape, g.beta1, g.beta2);
  return g;
}

LadderSolution solve_ladder(const ModelParams& params, const std::optional<LadderGuess>& init,
                            const SolverOptions& opts) {
  const ValueFunction shape = shape_for(params, opts);
  const LadderGuess g = init ? *init : default_guess(params, opts);
  Vec<6> x0;
  x0 << g.beta1, g.z1_star, g.z2_star, g.beta2, g.A, g.B;
  if (!ordered(x0, 0.0))
    throw SolverError(SolverError::Kind::OrderingViolation, "initial guess violates beta1 < z1* < z2* < beta2");

  const double k1 = params.k1, k2 = params.k2;
  auto res = [&](const Vec<6>& x) { return residual6(shape, x, k1, k2); };
  auto jac = [&](const Vec<6>& x) { return jacobian6(shape, x); };
  auto adm = [&](const Vec<6>& x) { return ordered(x, 0.0); };
  const auto out = detail::damped_newton<6>(res, jac, adm, x0, opts.tol, opts.max_iter);

  if (!ordered(out.x, opts.min_gap))
    throw SolverError(SolverError::Kind::OrderingViolation,
                      "converged point violates the ladder geometry beta1 < z1* < z2* < beta2");

  LadderSolution sol;
  sol.beta1 = out.x[0];
  sol.z1_star = out.x[1];
  sol.z2_star = out.x[2];
  sol.beta2 = out.x[3];
  sol.k1 = k1;
  sol.k2 = k2;
  sol.flow_shift = opts.band_clock_cost + opts.flow_shift;
  sol.value = with_coeffs(shape, out.x[4], out.x[5]);
  sol.iterations = out.iterations;
  for (int i = 0; i < 6; ++i) sol.residuals.boundary[i] = std::abs(out.f[i]);
  sol.residuals.ic = (sol.value(sol.z1_star) - k1) - (sol.value(sol.z2_star) - k2);
  sol.residuals.qvi_grid = qvi_check(sol, params, 1001).ode_residual;
  return sol;
}

QviReport qvi_check(const LadderSolution& sol, const ModelParams& params, int grid_n, double tol) {
  QviReport rep;
  rep.grid_n = std::max(grid_n, 2);
  const double mv = sol.impulse_value();
  const double half_var = 0.5 * params.sigma * params.sigma;
  double ode = 0.0;
  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < rep.grid_n; ++i) {
    const double z = sol.beta1 + (sol.beta2 - sol.beta1) * i / (rep.grid_n - 1);
    const double v = sol.value(z);
    const double flow = params.payoff.base(z) - sol.flow_shift;
    ode = std::max(ode, std::abs(params.r * v - flow - params.mu * sol.value.d1(z) - half_var * sol.value.d2(z)));
    margin = std::min(margin, v - mv);
  }
  rep.ode_residual = ode;
  rep.dominance_margin = margin;
  rep.delta_ic = (sol.value(sol.z1_star) - sol.k1) - (sol.value(sol.z2_star) - sol.k2);
  if (std::abs(rep.delta_ic) <= tol) rep.classification = IcClass::TwoImpulseConsistent;
  else rep.classification = rep.delta_ic > 0.0 ? IcClass::PatchFavored : IcClass::PivotFavored;
  rep.passed = rep.ode_residual <= tol && rep.dominance_margin >= -tol;
  return rep;
}

std::vector<ComparativeStaticsRow> comparative_statics(const ModelParams& params, const std::vector<CostBump>& bumps,
                                                       const SolverOptions& opts) {
  const LadderSolution base = solve_ladder(params, std::nullopt, opts);
  const LadderGuess warm{base.beta1, base.z1_star, base.z2_star, base.beta2, base.value.A, base.value.B};
  std::vector<ComparativeStaticsRow> rows;
  rows.reserve(bumps.size());
  for (const auto& bump : bumps) {
    if (bump.which != 1 && bump.which != 2) throw std::invalid_argument("comparative_statics: which must be 1 or 2");
    auto bumped = [&](double d) {
      ModelParams p = params;
      (bump.which == 1 ? p.k1 : p.k2) += d;
      return solve_ladder(p, warm, opts);
    };
    const LadderSolution up = bumped(bump.delta);
    const LadderSolution down = bumped(-bump.delta);
    ComparativeStaticsRow row;
    row.which = bump.which;
    row.delta = bump.delta;
    if (bump.which == 1) {
      row.d_trigger = (up.beta1 - down.beta1) / (2.0 * bump.delta);
      row.d_target = (up.z1_star - down.z1_star) / (2.0 * bump.delta);
      row.jump_base = base.z1_star - base.beta1;
      row.jump_up = up.z1_star - up.beta1;
      row.signs_hold = row.d_trigger < 0.0 && row.d_target > 0.0;
    } else {
      row.d_trigger = (up.beta2 - down.beta2) / (2.0 * bump.delta);
      row.d_target = (up.z2_star - down.z2_star) / (2.0 * bump.delta);
      row.jump_base = base.beta2 - base.z2_star;
      row.jump_up = up.beta2 - up.z2_star;
      row.signs_hold = row.d_trigger > 0.0 && row.d_target < 0.0;
    }
    row.jump_increases = row.jump_up > row.jump_base;
    rows.push_back(row);
  }
  return rows;
}

double mean_exit_time(const ModelParams& params, std::pair<double, double> band, double z0) {
  const auto [lo, hi] = band;
  if (!(lo < hi)) throw std::invalid_argument("mean_exit_time: degenerate band (beta1 >= beta2)");
  if (!(params.sigma > 0.0)) throw std::invalid_argument("mean_exit_time: sigma > 0 required");
  if (z0 <= lo || z0 >= hi) return 0.0;
  const double var = params.sigma * params.sigma;
  if (params.constant_drift()) {
    const double x = z0 - lo, len = hi - lo;
    const double s = 2.0 * params.mu / var;
    if (std::abs(s * len) < 1e-8) return x * (len - x) / var;
    // u = [len (1 - e^{-s x}) / (1 - e^{-s len}) - x] / mu
    return (len * std::expm1(-s * x) / std::expm1(-s * len) - x) / params.mu;
  }
  // (sigma^2/2) u'' + mu(z) u' = -1, u = 0 at both ends; central differences
  const int n = 20000;
  const double h = (hi - lo) / n;
  std::vector<double> a(n - 1), b(n - 1), c(n - 1), d(n - 1, -1.0);
  for (int i = 1; i < n; ++i) {
    const double mu = params.drift(lo + i * h);
    a[i - 1] = 0.5 * var / (h * h) - mu / (2.0 * h);
    b[i - 1] = -var / (h * h);
    c[i - 1] = 0.5 * var / (h * h) + mu / (2.0 * h);
  }
  // Thomas algorithm
  for (int i = 1; i < n - 1; ++i) {
    const double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    d[i] -= w * d[i - 1];
  }
  std::vector<double> u(n + 1, 0.0);
  u[n - 1] = d[n - 2] / b[n - 2];
  for (int i = n - 3; i >= 0; --i) u[i + 1] = (d[i] - c[i] * u[i + 2]) / b[i];
  const double pos = (z0 - lo) / h;
  const int i0 = std::min(static_cast<int>(pos), n - 1);
  const double w = pos - i0;
  return (1.0 - w) * u[i0] + w * u[i0 + 1];
}

double exit_time_bound(const ModelParams& params, std::pair<double, double> band) {
  const auto [lo, hi] = band;
  const double var = params.sigma * params.sigma;
  double kmax = std::abs(2.0 * params.drift(lo) / var);
  kmax = std::max(kmax, std::abs(2.0 * params.drift(hi) / var));
  for (const auto& node : params.mu_table)
    if (node.z > lo && node.z < hi) kmax = std::max(kmax, std::abs(2.0 * node.mu / var));
  const double len = hi - lo;
  return len * len / (4.0 * var) * std::exp(kmax * len);
}

} // namespace rl
