#pragma once

#include "rl/ladder.hpp"
#include "rl/sim.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rl {

struct PanelRow {
  int firm_id = 0;
  int month = 0;
  std::optional<int> event_time; ///< months relative to the nearest pivot
  int n_signals = 0;
  std::optional<double> dispersion_x;    ///< population variance of standardized signals
  std::optional<double> dispersion_time; ///< IQR of publication timestamps, hours
  int n_patches = 0;
  int major_reset_flag = 0;
  double leverage = 0.0;
  double rev_proxy = 0.0;
  std::optional<double> silence_depth; ///< on pivot months only
};

struct Panel {
  std::vector<PanelRow> rows; ///< firm-major, month-minor
  int n_firms = 0;
  int n_months = 0;
  double pooled_mean = 0.0;
  double pooled_sd = 0.0;
};

/// One simulated firm: its primitives and one event path.
struct FirmHistory {
  int firm_id = 0;
  double leverage = 0.0;
  double phi_max = 0.0;
  double lambda_bar = 0.0;
  std::vector<EventRecord> events;
};

struct PanelOptions {
  int n_months = 120;
  double month_length = 0.25;
  double phi_ref = 1.0;
  int depth_window = 3; ///< K in the silence-depth average
  double metric_noise = 0.0;
  std::uint64_t noise_seed = 0;
};

/// Throws EstimationError(EmptyInput) for an empty firm list.
Panel build_panel(const std::vector<FirmHistory>& firms, const PanelOptions& opts);

std::string panel_csv(const Panel& panel);

enum class Outcome { NSignals, DispersionX, DispersionTime };
const char* to_string(Outcome outcome) noexcept;

struct Coef {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double p_value = 1.0;
};

struct WaldTest {
  std::string hypothesis;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

struct EventStudyResult {
  Outcome outcome = Outcome::NSignals;
  int window = 0;
  int n_obs = 0;
  int n_clusters = 0;
  std::vector<int> ells;       ///< event times with an estimated dummy
  std::vector<Coef> coefs;     ///< same order as ells
  std::vector<std::string> dropped;
  WaldTest pre_joint; ///< all pre-period dummies (ell <= -2) jointly zero
};

/// OLS of the outcome on event-time dummies ell in [-L, L] \ {-1} with firm
/// and calendar-month fixed effects; rows outside the window or without an
/// event are in the reference group. Firm-clustered standard errors.
EventStudyResult event_study(const Panel& panel, Outcome outcome, int window);

/// Exposure-weighted count observation for the Poisson hazard fits.
struct CountObs {
  double events = 0.0;
  double exposure = 1.0;
  std::vector<double> x;
  int cluster = 0;
};

enum class VcovKind {
  Model,           ///< inverse information
  Cluster,         ///< sandwich with G / (G - 1)
  ClusterJackknife ///< delete-one-cluster jackknife; better sized with few clusters
};

const char* to_string(VcovKind kind) noexcept;

struct PoissonFit {
  std::vector<Coef> coefs;
  std::vector<std::string> dropped;
  Eigen::MatrixXd vcov;
  double log_likelihood = 0.0;
  int iterations = 0;
  int n_clusters = 0;
};

/// Log-linear Poisson MLE (Newton) with log exposure offset; covariates
/// with zero variance are dropped and flagged. Clustered variants report
/// t(G - 1) p-values. Throws EstimationError(Separation) on divergence,
/// (InsufficientData) without events.
PoissonFit poisson_fit(const std::vector<CountObs>& obs, const std::vector<std::string>& names, bool intercept,
                       VcovKind vcov);

struct PatchHazardResult {
  PoissonFit fit;       ///< rho0 .. rho3 (+ controls)
  VcovKind vcov = VcovKind::ClusterJackknife; ///< sandwich fallback when a leave-one-firm-out fit fails
  double r_bar = 0.0;   ///< mean rev_proxy in the top quartile
  WaldTest leverage_effect; ///< H0: rho1 + rho3 R_bar = 0
};

PatchHazardResult patch_hazard(const Panel& panel);

struct Spell {
  double duration = 0.0;
  bool event = true;
  bool post = false;
  std::vector<double> x;
  int cluster = 0;
};

struct CascadeResult {
  Coef post;
  std::vector<Coef> baseline; ///< log hazard per duration bin
  std::vector<double> cuts;
  int n_spells = 0;
};

/// Piecewise-exponential model: duration bins (quantile cuts) as baseline
/// plus a post-reset indicator. Throws EstimationError when there are no
/// post spells or fewer than two spells.
CascadeResult cascade_hazard(const std::vector<Spell>& spells, int n_bins = 4);

/// Inter-reset spells ending at the next patch; post = spell starts at a pivot.
std::vector<Spell> patch_spells(const std::vector<FirmHistory>& firms, double horizon);

struct MixtureComponent {
  double weight = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double mean_se = 0.0;
};

struct PlateauResult {
  int n = 0;
  double bic1 = 0.0;
  double bic2 = 0.0;
  int components = 1;
  std::vector<MixtureComponent> fit; ///< chosen model, sorted by mean
};

/// 1 vs 2 component Gaussian mixture by BIC (p = 2 vs 5), EM with fixed
/// restarts. Throws EstimationError(InsufficientData) below 30 points.
PlateauResult plateau_test(const std::vector<double>& metrics, std::uint64_t seed = 1);

struct UptakeRow {
  int group = 0;
  double m = 0.0;
  double uptake = 0.0;
  double silence_depth = 0.0;
};

struct RdResult {
  Coef jump;        ///< beta0
  Coef interaction; ///< beta1 on D x SilenceDepth
  std::vector<std::string> dropped;
  int n_obs = 0;
};

/// Local linear RD with a uniform kernel, group fixed effects, separate
/// slopes on each side. HC1 standard errors. Throws EstimationError(OneSided).
RdResult adoption_rd(const std::vector<UptakeRow>& rows, const std::vector<double>& alpha_by_group, double bandwidth);

struct UptakeGroup {
  double alpha = 0.0;
  double silence_depth = 0.0;
  int n = 200;
};

/// Synthetic uptake: Phi((m - alpha) / s) plus noise with the step width s
/// shrinking as silence depth grows; m uniform on alpha +- spread.
std::vector<UptakeRow> synthetic_uptake(const std::vector<UptakeGroup>& groups, double spread, std::uint64_t seed);

// Model-generated telemetry ------------------------------------------------

struct TelemetryData {
  std::vector<FirmHistory> firms;
  Panel panel;
  std::vector<double> post_patch_metric; ///< first signal after each patch
  std::vector<double> post_pivot_metric; ///< first signal after each pivot
  std::vector<Spell> spells;
};

/// Simulates n_firms firms on the first-best ladder with silence windows at
/// beta2, heterogeneous coupon and pivot takeover cost, and builds the panel.
TelemetryData simulate_telemetry(const ScenarioConfig& config, const LadderSolution& ladder, std::uint64_t seed,
                                 int workers = 1);

struct SignatureResult {
  EventStudyResult s1;
  bool s1_pass = false; ///< all pre dummies negative and jointly significant at 5%
  PlateauResult s2;
  bool s2_pass = false; ///< two components with means near (z1*, z2*), see plateau_matches
  PatchHazardResult s3;
  bool s3_pass = false; ///< H0 not rejected at 5%
};

/// Two components whose means sit within max(3 s.e., band) of z1* and z2*.
/// The band is the diffusion scale over the mean publication delay,
/// sigma / sqrt(lambda_bar): the first signal after a reset is drawn that
/// far from the target on average.
bool plateau_matches(const PlateauResult& fit, const LadderSolution& ladder, double band);

SignatureResult run_signatures(const TelemetryData& data, const LadderSolution& ladder, int event_window,
                               double plateau_band);

} // namespace rl
