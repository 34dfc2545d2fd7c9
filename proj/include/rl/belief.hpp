#pragma once

#include "rl/model.hpp"

#include <span>
#include <utility>

namespace rl {

/// Public posterior mean and variance of the private state.
struct BeliefState {
  double m = 0.0;
  double v = 0.0;
};

/// Exact step of dm = kappa (m_bar - m) dt, dv = (sigma^2 - 2 kappa v) dt.
BeliefState drift_step(const BeliefState& s, double dt, const ModelParams& params);

/// Stationary variance sigma^2 / (2 kappa) of the prediction equation.
double stationary_variance(const ModelParams& params);

/// Gaussian update on a signal y = z + eps, eps ~ N(0, sigma_eps2).
/// Throws std::domain_error when v == 0.
BeliefState publication_update(const BeliefState& s, double y, double sigma_eps2);

/// Sum of squared increments of m over a sampled path of (t, m) pairs.
double quadratic_variation(std::span<const std::pair<double, double>> path);

} // namespace rl
