#pragma once

#include "rl/belief.hpp"
#include "rl/ladder.hpp"
#include "rl/model.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace rl {

enum class EventKind { Publication, Patch, Pivot, Adoption, Default, HorizonEnd };
const char* to_string(EventKind kind) noexcept;

struct EventRecord {
  double t = 0.0;
  EventKind kind = EventKind::Publication;
  double z_pre = 0.0;
  double z_post = 0.0;
  double m_pre = 0.0; ///< belief mean just before the event
  double m = 0.0;     ///< belief after the event
  double v = 0.0;
  double y = std::numeric_limits<double>::quiet_NaN(); ///< publication signal
};

/// Barrier actions the simulator applies. Built from a ladder solution;
/// the financing module swaps the upper rung for a default barrier.
struct ResetPolicy {
  double beta1 = 0.0;
  double z1_star = 0.0;
  double z2_star = 0.0;
  double beta2 = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  bool upper_default = false; ///< hitting beta2 is default (path ends) instead of a pivot
  double alpha = std::numeric_limits<double>::infinity(); ///< adoption cutoff on m
  bool stop_at_first_exit = false; ///< end the path at the first barrier hit
};

ResetPolicy policy_from(const LadderSolution& ladder, double alpha = std::numeric_limits<double>::infinity());

/// Resolve anchored window centers against a ladder and an adoption cutoff.
std::vector<SilenceWindow> bind_windows(const std::vector<SilenceWindow>& windows, const ResetPolicy& policy);

struct PathStats {
  int publications = 0;
  int publications_in_window = 0; ///< publications whose pre-event state lay in an active window
  int patches = 0;
  int pivots = 0;
  double first_exit_time = std::numeric_limits<double>::quiet_NaN();
  double adoption_time = std::numeric_limits<double>::quiet_NaN();
  double default_time = std::numeric_limits<double>::quiet_NaN();
  double end_time = 0.0;
  double end_z = 0.0;
  double disc_flow = 0.0;       ///< int e^{-rt} pi0(z_t) dt
  double disc_adoption = 0.0;   ///< int e^{-rt} eta p_lambda 1{m_t >= alpha} dt
  double disc_clock_cost = 0.0; ///< int e^{-rt} k(lambda_t) dt
  double disc_reset_cost = 0.0; ///< sum e^{-rT} K_i over resets
  double disc_end = 0.0;        ///< e^{-r end_time}
  std::vector<double> residence; ///< time spent in each window
  std::vector<double> disc_residence;

  int resets() const noexcept { return patches + pivots; }
  double disc_payoff() const noexcept { return disc_flow + disc_adoption - disc_clock_cost - disc_reset_cost; }
};

struct SimPath {
  std::vector<EventRecord> events;
  PathStats stats;
};

/// One path of the full model: Euler-Maruyama for z with optional Brownian
/// bridge crossing correction, Cox publications by thinning against
/// lambda_bar (lambda = 0 inside windows), exact belief flow between
/// publications, resets at barrier hits.
SimPath simulate_path(const ScenarioConfig& config, const ResetPolicy& policy, const std::vector<SilenceWindow>& windows,
                      std::uint64_t seed, bool record_events = true);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  int n = 0;
};

struct BatchStats {
  int n_paths = 0;
  MeanSe publications;
  MeanSe patches;
  MeanSe pivots;
  MeanSe first_exit_time; ///< over paths with at least one barrier hit
  MeanSe adoption_time;   ///< over paths that adopted
  MeanSe disc_payoff;
  MeanSe disc_clock_cost;
  MeanSe events_per_time;
  int publications_in_window = 0;
  int max_events = 0;
  std::vector<MeanSe> residence;
  std::vector<MeanSe> disc_residence;
  double residence_per_cycle_total = 0.0; ///< sum residence / sum resets, all windows
  long total_resets = 0;
  std::vector<SimPath> kept; ///< the first `keep_paths` paths, events included
};

struct BatchOptions {
  int workers = 1;
  int keep_paths = 0;
};

/// Per-path seeds from derive_seed(base_seed, i); per-path results are
/// reduced in index order, so aggregates do not depend on worker count.
BatchStats run_batch(const ScenarioConfig& config, const ResetPolicy& policy, const std::vector<SilenceWindow>& windows,
                     int n_paths, const BatchOptions& opts = {});
/// Single-threaded reference implementation of run_batch.
BatchStats run_batch_serial(const ScenarioConfig& config, const ResetPolicy& policy,
                            const std::vector<SilenceWindow>& windows, int n_paths, int keep_paths = 0);

/// Per-path stats for every path (OpenMP over paths), index order.
std::vector<PathStats> simulate_stats(const ScenarioConfig& config, const ResetPolicy& policy,
                                      const std::vector<SilenceWindow>& windows, int n_paths, int workers);

BatchStats aggregate(std::vector<PathStats> stats, std::vector<SimPath> kept = {});

struct ResidenceRow {
  double delta = 0.0;
  double per_cycle = 0.0;    ///< residence in all trigger windows per reset
  double per_cycle_se = 0.0;
  double oracle = 0.0;       ///< Green's-function value for driftless z, windows at both triggers
  double clock_saving = 0.0; ///< E int e^{-rt} k(lambda_bar) 1{in window} dt
  double ratio = 0.0;        ///< per_cycle(delta) / per_cycle(delta / 2); 0 when not available
  int publications_in_window = 0;
};

/// Runs one batch per radius with windows at both triggers and identical
/// seeds. Rows are sorted by delta; delta = 0 gives an empty window.
std::vector<ResidenceRow> window_residence_report(const ScenarioConfig& config, const ResetPolicy& policy,
                                                  const std::vector<double>& radii, int n_paths, int workers);

} // namespace rl
