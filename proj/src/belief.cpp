#include "rl/belief.hpp"

#include <cmath>
#include <stdexcept>

namespace rl {

double stationary_variance(const ModelParams& params) {
  return params.sigma * params.sigma / (2.0 * params.kappa);
}

BeliefState drift_step(const BeliefState& s, double dt, const ModelParams& params) {
  if (dt == 0.0) return s;
  const double decay = std::exp(-params.kappa * dt);
  const double v_inf = stationary_variance(params);
  return {params.m_bar - (params.m_bar - s.m) * decay, v_inf + (s.v - v_inf) * decay * decay};
}

BeliefState publication_update(const BeliefState& s, double y, double sigma_eps2) {
  if (!(s.v > 0.0)) throw std::domain_error("publication_update: posterior variance is zero");
  if (!(sigma_eps2 > 0.0)) throw std::domain_error("publication_update: sigma_eps2 > 0 required");
  const double precision = 1.0 / s.v + 1.0 / sigma_eps2;
  const double v = 1.0 / precision;
  return {(s.m / s.v + y / sigma_eps2) * v, v};
}

double quadratic_variation(std::span<const std::pair<double, double>> path) {
  double qv = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double d = path[i].second - path[i - 1].second;
    qv += d * d;
  }
  return qv;
}

} // namespace rl
