#pragma once

#include "rl/ladder.hpp"
#include "rl/sim.hpp"

#include <string>

namespace rl {

enum class FinanceMode { SafePatchBlock, WithDefault, Tightness };
FinanceMode parse_finance_mode(const std::string& text);
const char* to_string(FinanceMode mode) noexcept;

/// Equity value and policy under a coupon c_d.
///
/// SafePatchBlock: the ladder with flow pi - c_d (same triggers as first
/// best); default never occurs. WithDefault: the pivot rung is replaced by a
/// default barrier z_d with S(z_d) = S'(z_d) = 0. Tightness: first-best patch
/// rung, default exactly at the first-best pivot trigger.
struct LeveredSolution {
  FinanceMode mode = FinanceMode::SafePatchBlock;
  double beta1 = 0.0;
  double z1_star = 0.0;
  double z2_star = 0.0; ///< NaN when the upper barrier is default
  double upper = 0.0;   ///< beta2 (safe) or z_d
  double k1 = 0.0;
  double k2 = 0.0;
  double c_d = 0.0;
  bool default_on_path = false;
  double z_d = 0.0; ///< NaN when default is off path
  ValueFunction equity;
  std::array<double, 6> residuals{}; ///< boundary-condition residuals of the mode's system
  double min_equity = 0.0;           ///< min of S on the band
  int iterations = 0;

  double equity_at(double z) const;
  ResetPolicy policy() const;
};

/// Throws SolverError (NonConvergence, SingularJacobian, OrderingViolation,
/// InfeasibleMode when S <= 0 somewhere on the band).
LeveredSolution solve_levered_equity(const ModelParams& params, const LadderSolution& first_best, FinanceMode mode,
                                     const SolverOptions& opts = {});

/// Y^TO lower bound A^FB(z) - phi_max.
double takeover_envelope(double z, const LadderSolution& first_best, double phi_max);

/// Switching cost the acquirer pays at default from z: phi1 below the
/// first-best band, phi2 above it, 0 inside.
double takeover_cost(double z, const LadderSolution& first_best, const ModelParams& params);

/// Y(z) = c_d / r + C+ e^{eta+ (z - z_ref)} + C- e^{eta- (z - z_ref)} with
/// Y(beta1) = Y(z1*) and Y(z_d) = A^FB(z_d) - phi_used; c_d / r when
/// default is off path.
double debt_value_closed_form(const LeveredSolution& lev, const LadderSolution& first_best, const ModelParams& params,
                              double z);

struct FinanceRun {
  ScenarioConfig config; ///< sim settings used (horizon, dt, seeds)
  double z0 = 0.0;
  int n_paths = 1000;
  int workers = 1;
};

/// E[int_0^T* e^{-rs} c_d ds + e^{-rT*} Y^TO(z_T*)]; coupon integral in closed form.
MeanSe debt_value_mc(const ModelParams& params, const LeveredSolution& lev, const LadderSolution& first_best,
                     const FinanceRun& run);

struct WedgeReport {
  FinanceMode mode = FinanceMode::SafePatchBlock;
  double z0 = 0.0;
  double a_fb = 0.0;        ///< A^FB(z0)
  double equity_ode = 0.0;  ///< S(z0) from the levered solution
  MeanSe equity_mc;
  MeanSe debt;
  MeanSe agency;            ///< A^FB - E[int e^{-rs} pi - sum e^{-rT} K + e^{-rT*} A^FB(z_T*)]
  MeanSe irreversibility;   ///< E[e^{-rT*} phi_used]
  MeanSe phi_max_term;      ///< E[e^{-rT*} phi_max]
  MeanSe discount_default;  ///< E[e^{-rT*} 1{default}]
  MeanSe wedge;             ///< A^FB - (S + Y), per path
  MeanSe bound_slack;       ///< A_t + e^{-rT*} phi_max - wedge, per path
  MeanSe horizon_remainder; ///< e^{-rT} (A^FB - S - Y)(z_T) for paths reaching the horizon
  double decomposition_gap = 0.0; ///< wedge - agency - irreversibility - remainder (means)
  double default_share = 0.0;
  bool agency_nonnegative = false; ///< agency >= -3 s.e.
  bool bound_holds = false;        ///< wedge <= agency + phi_max term + 3 s.e.
};

WedgeReport wedge_report(const ModelParams& params, const LeveredSolution& lev, const LadderSolution& first_best,
                         const FinanceRun& run);

} // namespace rl
