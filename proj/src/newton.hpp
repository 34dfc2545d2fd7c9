#pragma once

// Damped Newton shared by the ladder and levered-equity solvers.

#include "rl/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace rl::detail {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int N>
using Mat = Eigen::Matrix<double, N, N>;

template <int N>
struct NewtonResult {
  Vec<N> x;
  Vec<N> f;
  int iterations = 0;
};

template <int N, class Residual>
Mat<N> central_jacobian(const Residual& residual, const Vec<N>& x) {
  Mat<N> J;
  for (int j = 0; j < N; ++j) {
    const double h = 1e-7 * std::max(1.0, std::abs(x[j]));
    Vec<N> xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    J.col(j) = (residual(xp) - residual(xm)) / (2.0 * h);
  }
  return J;
}

/// Newton with backtracking on ||F||_2; candidate points failing `admissible`
/// are rejected by step halving. Converged points get up to two polishing
/// steps so that nearby starts land on the same root to rounding.
template <int N, class Residual, class Jacobian, class Admissible>
NewtonResult<N> damped_newton(const Residual& residual, const Jacobian& jacobian, const Admissible& admissible,
                              Vec<N> x, double tol, int max_iter) {
  Vec<N> f = residual(x);
  if (!f.allFinite())
    throw SolverError(SolverError::Kind::NonConvergence, "residual not finite at initial guess");

  auto newton_step = [&](const Vec<N>& at, const Vec<N>& f_at) -> Vec<N> {
    Mat<N> J = jacobian(at);
    if (!J.allFinite()) J = central_jacobian<N>(residual, at);
    Eigen::PartialPivLU<Mat<N>> lu(J);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-15)) {
      std::ostringstream msg;
      msg << "singular Jacobian (condition number ~" << (rcond > 0 ? 1.0 / rcond : INFINITY) << ")";
      throw SolverError(SolverError::Kind::SingularJacobian, msg.str(), rcond > 0 ? 1.0 / rcond : INFINITY);
    }
    return -lu.solve(f_at);
  };

  int it = 0;
  for (; it < max_iter && f.cwiseAbs().maxCoeff() > tol; ++it) {
    const Vec<N> step = newton_step(x, f);
    const double norm0 = f.norm();
    double t = 1.0;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
      const Vec<N> cand = x + t * step;
      if (!admissible(cand)) continue;
      const Vec<N> fc = residual(cand);
      if (!fc.allFinite()) continue;
      if (fc.norm() <= (1.0 - 1e-4 * t) * norm0) {
        x = cand;
        f = fc;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (!(f.cwiseAbs().maxCoeff() <= tol)) {
    std::ostringstream msg;
    msg << "Newton did not converge after " << it << " iterations (max |F| = " << f.cwiseAbs().maxCoeff() << ")";
    throw SolverError(SolverError::Kind::NonConvergence, msg.str());
  }
  for (int polish = 0; polish < 2; ++polish) {
    const Vec<N> cand = x + newton_step(x, f);
    if (!admissible(cand)) break;
    const Vec<N> fc = residual(cand);
    // only take clear improvements so an already polished point stays put
    if (!fc.allFinite() || !(fc.norm() < 0.5 * f.norm())) break;
    x = cand;
    f = fc;
  }
  return {x, f, it};
}

} // namespace rl::detail
