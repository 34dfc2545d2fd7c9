#pragma once

#include "rl/model.hpp"
#include "rl/poly.hpp"

#include <array>
#include <optional>
#include <utility>
#include <vector>

namespace rl {

struct CharacteristicRoots {
  double plus = 0.0;  ///< > 0
  double minus = 0.0; ///< < 0
};

/// Roots of (sigma^2/2) eta^2 + mu eta - r = 0.
CharacteristicRoots characteristic_roots(double mu, double sigma, double r);

/// Quadratic-or-quartic Pi_p with r Pi_p = flow + mu Pi_p' + (sigma^2/2) Pi_p''.
Poly4 particular_solution(const Poly4& flow, double mu, double sigma, double r);
/// Same, for the payoff's private-state part net of a constant clock cost.
Poly4 particular_solution(const FlowPayoff& payoff, double mu, double sigma, double r, double clock_cost = 0.0);

/// V(z) = Pi_p(z) + A exp(eta+ (z - z_ref)) + B exp(eta- (z - z_ref)).
struct ValueFunction {
  Poly4 particular{};
  double A = 0.0;
  double B = 0.0;
  CharacteristicRoots roots;
  double z_ref = 0.0;

  double operator()(double z) const;
  double d1(double z) const;
  double d2(double z) const;
  double e_plus(double z) const;
  double e_minus(double z) const;
};

struct LadderGuess {
  double beta1 = 0.0;
  double z1_star = 0.0;
  double z2_star = 0.0;
  double beta2 = 0.0;
  double A = 0.0;
  double B = 0.0;
};

struct LadderResiduals {
  /// |F1..F6|: lower VM, V'(beta1), V'(z1*), upper VM, V'(beta2), V'(z2*).
  std::array<double, 6> boundary{};
  double qvi_grid = 0.0; ///< max ODE residual on the diagnostic grid
  double ic = 0.0;       ///< (V(z1*) - K1) - (V(z2*) - K2)
  double max_boundary() const;
};

struct LadderSolution {
  double beta1 = 0.0;
  double z1_star = 0.0;
  double z2_star = 0.0;
  double beta2 = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  double flow_shift = 0.0; ///< constant subtracted from the flow (coupon, clock cost)
  ValueFunction value;
  LadderResiduals residuals;
  int iterations = 0;

  std::array<double, 6> theta() const { return {beta1, z1_star, z2_star, beta2, value.A, value.B}; }
  /// Value of the impulse operator max{V(z1*) - K1, V(z2*) - K2}.
  double impulse_value() const;
  /// Value extended to the whole line: inside the band V, outside the
  /// boundary-specific reset value.
  double value_anywhere(double z) const;
};

struct SolverOptions {
  double tol = 1e-10;
  int max_iter = 100;
  double band_clock_cost = 0.0; ///< k(lambda) on the band; silence gives k(0) = 0
  double flow_shift = 0.0;      ///< subtracted from pi (used for the coupon under leverage)
  double min_gap = 1e-6;        ///< smallest accepted spacing of the four boundary points
};

/// Heuristic start: targets near the payoff peaks, triggers a cost-scaled
/// span outside them, (A, B) from the two high-contact conditions.
LadderGuess default_guess(const ModelParams& params, const SolverOptions& opts = {});

/// Newton on the stacked six-condition residual with damped, ordering-
/// preserving line search. Throws SolverError.
LadderSolution solve_ladder(const ModelParams& params, const std::optional<LadderGuess>& init = std::nullopt,
                            const SolverOptions& opts = {});

/// Residual vector F(theta) for given costs, exposed for diagnostics and tests.
std::array<double, 6> ladder_residual(const ValueFunction& shape, const std::array<double, 6>& theta, double k1,
                                      double k2);

enum class IcClass { TwoImpulseConsistent, PatchFavored, PivotFavored };
const char* to_string(IcClass c) noexcept;

struct QviReport {
  int grid_n = 0;
  double ode_residual = 0.0;      ///< max |rV - (pi - k) - mu V' - sigma^2/2 V''| on grid
  double dominance_margin = 0.0;  ///< min_z [V(z) - MV]
  double delta_ic = 0.0;
  IcClass classification = IcClass::TwoImpulseConsistent;
  bool passed = false; ///< ode residual and dominance both within tol
};

QviReport qvi_check(const LadderSolution& sol, const ModelParams& params, int grid_n = 10000, double tol = 1e-8);

struct CostBump {
  int which = 1; ///< 1 bumps K1, 2 bumps K2
  double delta = 1e-3;
};

struct ComparativeStaticsRow {
  int which = 1;
  double delta = 0.0;
  double d_trigger = 0.0; ///< d beta_i / d K_i (central difference)
  double d_target = 0.0;  ///< d z_i* / d K_i
  double jump_base = 0.0; ///< |z_i* - beta_i| at the baseline
  double jump_up = 0.0;   ///< |z_i* - beta_i| at K_i + delta
  bool signs_hold = false;
  bool jump_increases = false;
};

std::vector<ComparativeStaticsRow> comparative_statics(const ModelParams& params, const std::vector<CostBump>& bumps,
                                                       const SolverOptions& opts = {});

/// Expected first exit time from (beta1, beta2) started at z0: closed form
/// for constant coefficients, dense finite differences for a drift table.
double mean_exit_time(const ModelParams& params, std::pair<double, double> band, double z0);

/// (beta2 - beta1)^2 / (4 sigma^2) * exp(K (beta2 - beta1)), K = sup |2 mu / sigma^2|.
double exit_time_bound(const ModelParams& params, std::pair<double, double> band);

} // namespace rl
