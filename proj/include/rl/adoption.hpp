#pragma once

#include "rl/model.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace rl {

using ScalarFn = std::function<double(double)>;

/// alpha = (kappa m_bar + (r / a) p) / (kappa + r).
double solve_alpha_linear(double kappa, double m_bar, double r, double a, double p);

struct AlphaRoot {
  double alpha = 0.0;
  double residual = 0.0; ///< |mu_bar(alpha) S'(alpha) - r S(alpha)|
  std::pair<double, double> bracket;
  int iterations = 0;
};

/// Root of mu_bar(x) S'(x) = r S(x) in the bracket (TOMS 748).
/// Throws NoSignChange if the bracket does not straddle a root.
AlphaRoot solve_alpha_general(const ScalarFn& mu_bar, const ScalarFn& S, const ScalarFn& S_prime, double r,
                              std::pair<double, double> bracket, double tol = 1e-12);

struct BuyerValue {
  double w = 0.0;
  double tau = 0.0; ///< deterministic hitting time of alpha
};

/// W(m) = ((m_bar - alpha) / (m_bar - m))^{r / kappa} S(alpha) below alpha;
/// S(m) and tau = 0 at or above alpha.
BuyerValue buyer_value(double m, double alpha, double kappa, double m_bar, double r, const ScalarFn& S);

/// |W'(alpha-) - S'(alpha)| with a three-point backward difference of step h.
double smooth_fit_residual(double alpha, double kappa, double m_bar, double r, const ScalarFn& S,
                           const ScalarFn& S_prime, double h = 1e-6);

struct AdoptionDerivatives {
  double dalpha_dp = 0.0;
  double dalpha_dmbar = 0.0;
};

AdoptionDerivatives adoption_comparative_statics(double kappa, double m_bar, double r, double a, double p);

struct AdoptionSolution {
  double alpha = 0.0;
  double alpha_closed_form = 0.0;
  double root_residual = 0.0;
  double smooth_fit = 0.0;
  std::pair<double, double> bracket;
  AdoptionDerivatives derivatives;
};

struct AdoptionRow {
  double m = 0.0;
  double w = 0.0;
  double tau = 0.0;
};

/// Linear drift, linear surplus: general solver on [lo, m_bar - 1e-8]
/// cross-checked against the closed form.
AdoptionSolution solve_adoption(const ModelParams& params, double lo = -10.0);

/// (m, W, tau) on an even grid of n points over [lo, alpha].
std::vector<AdoptionRow> adoption_table(const ModelParams& params, const AdoptionSolution& sol, double lo, int n);

} // namespace rl
