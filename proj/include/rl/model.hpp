#pragma once

#include "rl/poly.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rl {

/// Flow payoff pi(z, m) = pi0(z) + eta * p_lambda * 1{m >= alpha}.
///
/// The private-state part is the quartic
///   pi0(z) = pi0 - c_q (z - center)^2 - c_4 ((z - center)^2 - width^2)^2,
/// which covers the constant (c_q = c_4 = 0), concave quadratic (c_4 = 0) and
/// double-peaked (c_4 > 0) shapes. A strict two-rung ladder needs the
/// double-peaked shape: with a quadratic flow V' has at most three zeros on
/// the band and both targets collapse onto the single peak.
struct FlowPayoff {
  enum class Kind { Constant, Quadratic, DoublePeak };

  double pi0 = 1.0;
  double c_q = 0.0;
  double c_4 = 0.0;
  double width = 1.0;
  double center = 0.0;
  double eta = 0.0;
  double p_lambda = 0.0;

  static FlowPayoff constant(double pi0);
  static FlowPayoff quadratic(double pi0, double c_q, double center = 0.0);
  static FlowPayoff double_peak(double pi0, double c_4, double width, double center = 0.0);

  Kind kind() const noexcept;
  Poly4 coefficients() const;
  double base(double z) const;
  /// Adoption step term eta * Lambda(varpi(m; alpha)) with varpi a 0/1 step.
  double adoption_term(double m, double alpha) const;
  double operator()(double z, double m, double alpha) const { return base(z) + adoption_term(m, alpha); }
};

/// Node of an optional piecewise-linear state-dependent drift table.
struct DriftNode {
  double z = 0.0;
  double mu = 0.0;
};

struct ModelParams {
  double mu = 0.0;
  double sigma = 0.5;
  double r = 0.5;
  std::vector<DriftNode> mu_table; ///< empty means constant drift `mu`
  FlowPayoff payoff = FlowPayoff::double_peak(1.0, 0.2, 1.0);
  double k1 = 0.2;
  double k2 = 0.3;
  double lambda_bar = 10.0;
  double c_k = 0.01; ///< k(lambda) = c_k lambda^2 / 2
  double sigma_eps2 = 0.25;
  double kappa = 1.0;
  double m_bar = 1.0;
  double a = 1.0;
  double p = 0.0;
  double c_d = 0.0;
  double phi1 = 0.0;
  double phi2 = 0.0;

  double clock_cost(double lambda) const noexcept { return 0.5 * c_k * lambda * lambda; }
  double drift(double z) const noexcept;
  bool constant_drift() const noexcept { return mu_table.empty(); }
  double phi_max() const noexcept { return phi1 > phi2 ? phi1 : phi2; }
  double surplus(double m) const noexcept { return a * m - p; }
  double belief_drift(double m) const noexcept { return kappa * (m_bar - m); }
};

/// Symmetric double-peak benchmark: mu = 0, K1 = K2, peaks at +-1.
ModelParams symmetric_benchmark();

/// Where a silence window's center comes from; non-Value anchors are bound
/// to a solved ladder or adoption cutoff at run time.
enum class WindowAnchor { Value, Beta1, Beta2, Z1, Z2, Alpha };
enum class WindowSpace { PrivateState, BeliefMean };

struct SilenceWindow {
  WindowSpace space = WindowSpace::PrivateState;
  WindowAnchor anchor = WindowAnchor::Value;
  double center = 0.0; ///< used when anchor == Value, otherwise filled by binding
  double radius = 0.05;

  bool contains(double z, double m) const noexcept {
    const double x = space == WindowSpace::PrivateState ? z : m;
    return x >= center - radius && x <= center + radius;
  }
};

struct SimSettings {
  double horizon = 50.0;
  double dt = 1e-3;
  int n_paths = 1000;
  std::uint64_t base_seed = 42;
  double z0 = 0.0;
  bool z0_at_target = true; ///< start at z1* instead of z0
  double m0 = 0.0;
  double v0 = 0.25;
  bool bridge = true; ///< Brownian-bridge boundary-crossing correction
};

struct FinanceSettings {
  std::string mode = "safe"; ///< safe | with-default | tightness
  int n_paths = 4000;
  double horizon = 40.0;
};

struct TelemetrySettings {
  int n_firms = 20;
  int n_months = 120;
  double month_length = 0.25;
  double window_radius = 0.6;
  int event_window = 3;
  double metric_noise = 0.0;
  double c_d_min = 0.0;
  double c_d_max = 0.5;
  double phi2_min = 0.0;
  double phi2_max = 1.0;
  double phi_ref = 1.0;
  int replications = 1;
};

struct OutputSettings {
  std::string dir = "out";
  bool write_events = true;
  int max_event_files = 5;
  int value_grid = 401;
};

struct ScenarioConfig {
  ModelParams params;
  SimSettings sim;
  std::vector<SilenceWindow> windows;
  FinanceSettings finance;
  TelemetrySettings telemetry;
  OutputSettings output;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
};

ValidationReport validate(const ScenarioConfig& config);

/// Counter-mode seed mixing. For a fixed base the map index -> seed is a
/// bijection on 64-bit words (odd-multiplier offset followed by the
/// splitmix64 finalizer), hence collision-free.
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t path_index) noexcept;

ScenarioConfig parse_config(std::string_view text);
ScenarioConfig load_config(const std::filesystem::path& path);
std::string to_config_text(const ScenarioConfig& config);

const char* to_string(WindowAnchor anchor) noexcept;
const char* to_string(WindowSpace space) noexcept;

} // namespace rl
