#include "rl/adoption.hpp"

#include "rl/errors.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <cmath>
#include <cstdint>
#include <sstream>

namespace rl {

double solve_alpha_linear(double kappa, double m_bar, double r, double a, double p) {
  return (kappa * m_bar + (r / a) * p) / (kappa + r);
}

AlphaRoot solve_alpha_general(const ScalarFn& mu_bar, const ScalarFn& S, const ScalarFn& S_prime, double r,
                              std::pair<double, double> bracket, double tol) {
  auto g = [&](double x) { return mu_bar(x) * S_prime(x) - r * S(x); };
  const auto [lo, hi] = bracket;
  const double g_lo = g(lo), g_hi = g(hi);
  if (!(lo < hi) || !(g_lo * g_hi <= 0.0)) {
    std::ostringstream msg;
    msg << "no sign change of mu_bar S' - r S on [" << lo << ", " << hi << "]";
    throw NoSignChange(msg.str());
  }
  AlphaRoot out;
  out.bracket = bracket;
  if (g_lo == 0.0 || g_hi == 0.0) {
    out.alpha = g_lo == 0.0 ? lo : hi;
  } else {
    std::uintmax_t iters = 200;
    const auto root = boost::math::tools::toms748_solve(g, lo, hi, g_lo, g_hi,
                                                        boost::math::tools::eps_tolerance<double>(), iters);
    out.iterations = static_cast<int>(iters);
    // the bracket has collapsed to adjacent doubles; keep the endpoint with smaller residual
    out.alpha = std::abs(g(root.first)) <= std::abs(g(root.second)) ? root.first : root.second;
  }
  out.residual = std::abs(g(out.alpha));
  if (!(out.residual <= tol * std::max(1.0, std::abs(r * S(out.alpha)))))
    throw NoSignChange("alpha root residual above tolerance; bracket may contain a discontinuity");
  return out;
}

BuyerValue buyer_value(double m, double alpha, double kappa, double m_bar, double r, const ScalarFn& S) {
  if (m >= alpha) return {S(m), 0.0};
  const double ratio = (m_bar - alpha) / (m_bar - m);
  return {std::pow(ratio, r / kappa) * S(alpha), -std::log(ratio) / kappa};
}

double smooth_fit_residual(double alpha, double kappa, double m_bar, double r, const ScalarFn& S,
                           const ScalarFn& S_prime, double h) {
  auto W = [&](double m) {
    // left branch only, including m = alpha
    return std::pow((m_bar - alpha) / (m_bar - m), r / kappa) * S(alpha);
  };
  const double d = (3.0 * W(alpha) - 4.0 * W(alpha - h) + W(alpha - 2.0 * h)) / (2.0 * h);
  return std::abs(d - S_prime(alpha));
}

AdoptionDerivatives adoption_comparative_statics(double kappa, double m_bar, double r, double a, double p) {
  (void)m_bar;
  (void)p;
  return {r / (a * (kappa + r)), kappa / (kappa + r)};
}

AdoptionSolution solve_adoption(const ModelParams& params, double lo) {
  const double kappa = params.kappa, m_bar = params.m_bar, a = params.a, p = params.p, r = params.r;
  auto mu_bar = [&](double m) { return kappa * (m_bar - m); };
  auto S = [&](double m) { return a * m - p; };
  auto dS = [&](double) { return a; };
  AdoptionSolution sol;
  const AlphaRoot root = solve_alpha_general(mu_bar, S, dS, r, {lo, m_bar - 1e-8});
  sol.alpha = root.alpha;
  sol.root_residual = root.residual;
  sol.bracket = root.bracket;
  sol.alpha_closed_form = solve_alpha_linear(kappa, m_bar, r, a, p);
  sol.smooth_fit = smooth_fit_residual(sol.alpha, kappa, m_bar, r, S, dS);
  sol.derivatives = adoption_comparative_statics(kappa, m_bar, r, a, p);
  return sol;
}

std::vector<AdoptionRow> adoption_table(const ModelParams& params, const AdoptionSolution& sol, double lo, int n) {
  std::vector<AdoptionRow> rows;
  const auto S = [&](double m) { return params.surplus(m); };
  for (int i = 0; i < n; ++i) {
    const double m = i == n - 1 ? sol.alpha : lo + (sol.alpha - lo) * i / (n - 1);
    const BuyerValue bv = buyer_value(m, sol.alpha, params.kappa, params.m_bar, params.r, S);
    rows.push_back({m, bv.w, bv.tau});
  }
  return rows;
}

} // namespace rl
