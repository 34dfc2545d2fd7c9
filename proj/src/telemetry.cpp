#include "rl/telemetry.hpp"

#include "rl/errors.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace rl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(VcovKind kind) noexcept {
  switch (kind) {
  case VcovKind::Model: return "model";
  case VcovKind::Cluster: return "cluster";
  case VcovKind::ClusterJackknife: return "cluster-jackknife";
  }
  return "model";
}

const char* to_string(Outcome outcome) noexcept {
  switch (outcome) {
  case Outcome::NSignals: return "n_signals";
  case Outcome::DispersionX: return "dispersion_x";
  case Outcome::DispersionTime: return "dispersion_time";
  }
  return "n_signals";
}

namespace {

constexpr double kHoursPerMonth = 720.0;

double quantile7(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double h = (xs.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - lo) * (xs[hi] - xs[lo]);
}

double population_variance(const std::vector<double>& xs) {
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / xs.size();
}

double t_pvalue(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  if (df < 1.0) df = 1.0;
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t)));
}

double normal_pvalue(double z) {
  if (!std::isfinite(z)) return 0.0;
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(z)));
}

/// Greedy column selection in the given order: a column is kept when its
/// component orthogonal to the kept ones is not negligible.
std::vector<int> independent_columns(const MatrixXd& X, double rel_tol = 1e-9) {
  std::vector<int> kept;
  std::vector<VectorXd> basis;
  for (int j = 0; j < X.cols(); ++j) {
    VectorXd v = X.col(j);
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) v -= q.dot(v) * q;
    const double norm = v.norm();
    if (norm > rel_tol * norm0) {
      basis.push_back(v / norm);
      kept.push_back(j);
    }
  }
  return kept;
}

struct OlsFit {
  std::vector<int> kept; ///< columns of the original design
  VectorXd beta;         ///< over kept columns
  MatrixXd vcov;
  int n_clusters = 0;
};

/// OLS with firm-clustered (CR1) or HC1 covariance when `cluster` is empty.
OlsFit ols(const MatrixXd& X_full, const VectorXd& y, const std::vector<int>& cluster) {
  OlsFit fit;
  fit.kept = independent_columns(X_full);
  const int n = static_cast<int>(X_full.rows()), k = static_cast<int>(fit.kept.size());
  if (n <= k) throw EstimationError(EstimationError::Kind::InsufficientData, "OLS: not enough observations");
  MatrixXd X(n, k);
  for (int j = 0; j < k; ++j) X.col(j) = X_full.col(fit.kept[j]);
  const MatrixXd xtx = X.transpose() * X;
  const Eigen::LDLT<MatrixXd> ldlt(xtx);
  fit.beta = ldlt.solve(X.transpose() * y);
  const VectorXd u = y - X * fit.beta;
  const MatrixXd bread = ldlt.solve(MatrixXd::Identity(k, k));
  MatrixXd meat = MatrixXd::Zero(k, k);
  double scale = 1.0;
  if (cluster.empty()) {
    for (int i = 0; i < n; ++i) meat.noalias() += (u[i] * u[i]) * X.row(i).transpose() * X.row(i);
    scale = double(n) / (n - k);
  } else {
    std::map<int, VectorXd> scores;
    for (int i = 0; i < n; ++i) {
      auto [it, fresh] = scores.try_emplace(cluster[i], VectorXd::Zero(k));
      it->second.noalias() += u[i] * X.row(i).transpose();
    }
    for (const auto& [g, s] : scores) meat.noalias() += s * s.transpose();
    const double G = double(scores.size());
    fit.n_clusters = static_cast<int>(scores.size());
    scale = G > 1 ? G / (G - 1.0) * (n - 1.0) / (n - k) : 1.0;
  }
  fit.vcov = scale * bread * meat * bread;
  return fit;
}

WaldTest wald(const VectorXd& b, const MatrixXd& V, int denom_df, const std::string& hypothesis) {
  WaldTest w;
  w.hypothesis = hypothesis;
  w.df = static_cast<int>(b.size());
  if (w.df == 0) return w;
  const Eigen::FullPivLU<MatrixXd> lu(V);
  w.statistic = lu.isInvertible() ? b.dot(lu.solve(b)) : INFINITY;
  if (!std::isfinite(w.statistic)) {
    w.p_value = 0.0;
  } else if (denom_df > 0) {
    // F(q, G - 1) reference for few clusters
    w.p_value = boost::math::cdf(boost::math::complement(boost::math::fisher_f(w.df, denom_df), w.statistic / w.df));
  } else {
    w.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(w.df), w.statistic));
  }
  return w;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

} // namespace

// Panel ---------------------------------------------------------------------

Panel build_panel(const std::vector<FirmHistory>& firms, const PanelOptions& opts) {
  if (firms.empty()) throw EstimationError(EstimationError::Kind::EmptyInput, "build_panel: no simulated firms");
  Panel panel;
  panel.n_firms = static_cast<int>(firms.size());
  panel.n_months = opts.n_months;
  const double ml = opts.month_length;

  // signal values with optional reporting noise, then pooled standardization
  std::mt19937_64 rng(opts.noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  struct Signal {
    int firm;
    int month;
    double hours;
    double value;
  };
  std::vector<Signal> signals;
  for (std::size_t f = 0; f < firms.size(); ++f) {
    for (const auto& e : firms[f].events) {
      if (e.kind != EventKind::Publication) continue;
      const int month = static_cast<int>(std::floor(e.t / ml));
      if (month < 0 || month >= opts.n_months) continue;
      const double value = e.y + (opts.metric_noise > 0.0 ? opts.metric_noise * noise(rng) : 0.0);
      signals.push_back({int(f), month, (e.t / ml - month) * kHoursPerMonth, value});
    }
  }
  if (!signals.empty()) {
    double sum = 0.0;
    for (const auto& s : signals) sum += s.value;
    panel.pooled_mean = sum / signals.size();
    double ss = 0.0;
    for (const auto& s : signals) ss += (s.value - panel.pooled_mean) * (s.value - panel.pooled_mean);
    panel.pooled_sd = signals.size() > 1 ? std::sqrt(ss / (signals.size() - 1)) : 0.0;
  }

  std::vector<std::vector<double>> xs(firms.size() * opts.n_months), hs(firms.size() * opts.n_months);
  for (const auto& s : signals) {
    const std::size_t cell = std::size_t(s.firm) * opts.n_months + s.month;
    xs[cell].push_back(panel.pooled_sd > 0.0 ? (s.value - panel.pooled_mean) / panel.pooled_sd : 0.0);
    hs[cell].push_back(s.hours);
  }

  for (std::size_t f = 0; f < firms.size(); ++f) {
    const auto& firm = firms[f];
    std::vector<int> patches(opts.n_months, 0), pivots(opts.n_months, 0);
    for (const auto& e : firm.events) {
      const int month = static_cast<int>(std::floor(e.t / ml));
      if (month < 0 || month >= opts.n_months) continue;
      if (e.kind == EventKind::Patch) ++patches[month];
      if (e.kind == EventKind::Pivot) ++pivots[month];
    }
    std::vector<int> pivot_months;
    for (int t = 0; t < opts.n_months; ++t)
      if (pivots[t] > 0) pivot_months.push_back(t);
    const double rev = std::clamp(1.0 - firm.phi_max / opts.phi_ref, 0.0, 1.0);

    for (int t = 0; t < opts.n_months; ++t) {
      const std::size_t cell = f * opts.n_months + t;
      PanelRow row;
      row.firm_id = firm.firm_id;
      row.month = t;
      row.n_signals = static_cast<int>(xs[cell].size());
      if (row.n_signals > 0) {
        row.dispersion_x = population_variance(xs[cell]);
        row.dispersion_time = row.n_signals == 1 ? 0.0 : quantile7(hs[cell], 0.75) - quantile7(hs[cell], 0.25);
      }
      row.n_patches = patches[t];
      row.major_reset_flag = pivots[t] > 0 ? 1 : 0;
      row.leverage = firm.leverage;
      row.rev_proxy = rev;
      // nearest pivot month; ties go to the upcoming one
      int best = -1;
      for (int e : pivot_months)
        if (best < 0 || std::abs(t - e) < std::abs(t - best) || (std::abs(t - e) == std::abs(t - best) && e > best))
          best = e;
      if (best >= 0) row.event_time = t - best;
      if (row.major_reset_flag && firm.lambda_bar > 0.0) {
        double acc = 0.0;
        int used = 0;
        for (int k = 1; k <= opts.depth_window; ++k) {
          if (t - k < 0) continue;
          const double lam_hat = double(xs[f * opts.n_months + (t - k)].size()) / ml;
          acc += (firm.lambda_bar - lam_hat) / firm.lambda_bar;
          ++used;
        }
        if (used > 0) row.silence_depth = acc / used;
      }
      panel.rows.push_back(row);
    }
  }
  return panel;
}

std::string panel_csv(const Panel& panel) {
  std::ostringstream out;
  out << "firm_id,month,event_time,n_signals,dispersion_x,dispersion_time,n_patches,major_reset_flag,leverage,"
         "rev_proxy,silence_depth\n";
  auto opt = [&](const auto& v) {
    if (v) out << fmt(double(*v));
    else out << "NA";
  };
  for (const auto& r : panel.rows) {
    out << r.firm_id << ',' << r.month << ',';
    if (r.event_time) out << *r.event_time;
    else out << "NA";
    out << ',' << r.n_signals << ',';
    opt(r.dispersion_x);
    out << ',';
    opt(r.dispersion_time);
    out << ',' << r.n_patches << ',' << r.major_reset_flag << ',' << fmt(r.leverage) << ',' << fmt(r.rev_proxy) << ',';
    opt(r.silence_depth);
    out << '\n';
  }
  return out.str();
}

// Event study ---------------------------------------------------------------

EventStudyResult event_study(const Panel& panel, Outcome outcome, int window) {
  EventStudyResult res;
  res.outcome = outcome;
  res.window = window;
  std::vector<const PanelRow*> rows;
  for (const auto& r : panel.rows) {
    const bool has = outcome == Outcome::NSignals      ? true
                     : outcome == Outcome::DispersionX ? r.dispersion_x.has_value()
                                                       : r.dispersion_time.has_value();
    if (has) rows.push_back(&r);
  }
  if (rows.empty()) throw EstimationError(EstimationError::Kind::EmptyInput, "event_study: no usable rows");

  std::vector<int> firm_ids, months;
  for (const auto* r : rows) {
    firm_ids.push_back(r->firm_id);
    months.push_back(r->month);
  }
  std::sort(firm_ids.begin(), firm_ids.end());
  firm_ids.erase(std::unique(firm_ids.begin(), firm_ids.end()), firm_ids.end());
  std::sort(months.begin(), months.end());
  months.erase(std::unique(months.begin(), months.end()), months.end());
  if (firm_ids.size() < 2)
    throw EstimationError(EstimationError::Kind::InsufficientData, "event_study: at least two firms required");

  std::vector<int> ells;
  for (int l = -window; l <= window; ++l)
    if (l != -1) ells.push_back(l);

  // columns: intercept | firm FE | month FE | event dummies
  const int n = static_cast<int>(rows.size());
  const int nf = int(firm_ids.size()) - 1, nm = int(months.size()) - 1, ne = int(ells.size());
  const int p = 1 + nf + nm + ne;
  MatrixXd X = MatrixXd::Zero(n, p);
  VectorXd y(n);
  std::vector<int> cluster(n);
  for (int i = 0; i < n; ++i) {
    const PanelRow& r = *rows[i];
    X(i, 0) = 1.0;
    const int fi = int(std::lower_bound(firm_ids.begin(), firm_ids.end(), r.firm_id) - firm_ids.begin());
    if (fi > 0) X(i, fi) = 1.0;
    const int mi = int(std::lower_bound(months.begin(), months.end(), r.month) - months.begin());
    if (mi > 0) X(i, nf + mi) = 1.0;
    if (r.event_time) {
      const auto it = std::find(ells.begin(), ells.end(), *r.event_time);
      if (it != ells.end()) X(i, 1 + nf + nm + int(it - ells.begin())) = 1.0;
    }
    y[i] = outcome == Outcome::NSignals      ? r.n_signals
           : outcome == Outcome::DispersionX ? *r.dispersion_x
                                             : *r.dispersion_time;
    cluster[i] = r.firm_id;
  }

  const OlsFit fit = ols(X, y, cluster);
  res.n_obs = n;
  res.n_clusters = fit.n_clusters;
  const double df = std::max(fit.n_clusters - 1, 1);
  std::vector<int> pre_idx;
  for (int e = 0; e < ne; ++e) {
    const int col = 1 + nf + nm + e;
    const auto it = std::find(fit.kept.begin(), fit.kept.end(), col);
    const std::string name = "ell_" + std::to_string(ells[e]);
    if (it == fit.kept.end()) {
      res.dropped.push_back(name);
      continue;
    }
    const int k = int(it - fit.kept.begin());
    Coef c{name, fit.beta[k], std::sqrt(std::max(fit.vcov(k, k), 0.0)), 1.0};
    c.p_value = c.se > 0.0 ? t_pvalue(c.estimate / c.se, df) : (c.estimate == 0.0 ? 1.0 : 0.0);
    res.ells.push_back(ells[e]);
    res.coefs.push_back(c);
    if (ells[e] <= -2) pre_idx.push_back(k);
  }
  VectorXd b(pre_idx.size());
  MatrixXd V(pre_idx.size(), pre_idx.size());
  for (std::size_t a = 0; a < pre_idx.size(); ++a) {
    b[a] = fit.beta[pre_idx[a]];
    for (std::size_t c = 0; c < pre_idx.size(); ++c) V(a, c) = fit.vcov(pre_idx[a], pre_idx[c]);
  }
  res.pre_joint = wald(b, V, fit.n_clusters - 1, "pre-period dummies jointly zero");
  return res;
}

// Poisson hazards -------------------------------------------------------------

namespace {

struct NewtonFit {
  VectorXd beta;
  double ll = 0.0;
  int iterations = 0;
};

/// Poisson MLE by Newton with step halving on rows where `use` is set.
NewtonFit poisson_newton(const MatrixXd& X, const VectorXd& y, const VectorXd& offset, const std::vector<char>& use,
                         VectorXd beta) {
  const int n = static_cast<int>(X.rows()), k = static_cast<int>(X.cols());
  auto loglik = [&](const VectorXd& b) {
    const VectorXd eta = X * b + offset;
    double ll = 0.0;
    for (int i = 0; i < n; ++i)
      if (use[i]) ll += y[i] * eta[i] - std::exp(eta[i]) - std::lgamma(y[i] + 1.0);
    return ll;
  };
  double ll = loglik(beta);
  int it = 0;
  for (; it < 200; ++it) {
    const VectorXd mu = (X * beta + offset).array().exp().matrix();
    VectorXd grad = VectorXd::Zero(k);
    MatrixXd H = MatrixXd::Zero(k, k);
    for (int i = 0; i < n; ++i) {
      if (!use[i]) continue;
      grad.noalias() += (y[i] - mu[i]) * X.row(i).transpose();
      H.noalias() += mu[i] * X.row(i).transpose() * X.row(i);
    }
    const Eigen::LDLT<MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14)
      throw EstimationError(EstimationError::Kind::Separation, "poisson_fit: information matrix singular (separation)");
    const VectorXd step = ldlt.solve(grad);
    double t = 1.0;
    VectorXd cand = beta + step;
    double ll_c = loglik(cand);
    while (!(ll_c >= ll - 1e-12) && t > 1e-8) {
      t *= 0.5;
      cand = beta + t * step;
      ll_c = loglik(cand);
    }
    beta = cand;
    ll = ll_c;
    if ((t * step).cwiseAbs().maxCoeff() < 1e-11) break;
  }
  // under separation the likelihood keeps rising as a coefficient runs off
  if (it == 200 || !beta.allFinite())
    throw EstimationError(EstimationError::Kind::Separation, "poisson_fit: no finite maximum (separation)");
  return {beta, ll, it};
}

} // namespace

PoissonFit poisson_fit(const std::vector<CountObs>& obs, const std::vector<std::string>& names, bool intercept,
                       VcovKind vcov) {
  if (obs.empty()) throw EstimationError(EstimationError::Kind::EmptyInput, "poisson_fit: no observations");
  const int n = static_cast<int>(obs.size());
  const int px = static_cast<int>(names.size());
  double total = 0.0, expo = 0.0;
  for (const auto& o : obs) {
    total += o.events;
    expo += o.exposure;
  }
  if (total <= 0.0) throw EstimationError(EstimationError::Kind::InsufficientData, "poisson_fit: no events");

  PoissonFit fit;
  // drop covariates without variation (when an intercept carries the level)
  std::vector<int> cols;
  for (int j = 0; j < px; ++j) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& o : obs) {
      lo = std::min(lo, o.x[j]);
      hi = std::max(hi, o.x[j]);
    }
    if (intercept && hi - lo <= 0.0) fit.dropped.push_back(names[j]);
    else cols.push_back(j);
  }
  const int k0 = intercept ? 1 : 0;
  MatrixXd Xc(n, k0 + int(cols.size()));
  for (int i = 0; i < n; ++i) {
    if (intercept) Xc(i, 0) = 1.0;
    for (std::size_t j = 0; j < cols.size(); ++j) Xc(i, k0 + int(j)) = obs[i].x[cols[j]];
  }
  // collinear covariates are dropped too
  const std::vector<int> indep = independent_columns(Xc);
  std::vector<std::string> col_names;
  if (intercept) col_names.push_back("intercept");
  for (int j : cols) col_names.push_back(names[j]);
  MatrixXd X(n, indep.size());
  std::vector<std::string> kept_names;
  for (std::size_t j = 0; j < indep.size(); ++j) {
    X.col(j) = Xc.col(indep[j]);
    kept_names.push_back(col_names[indep[j]]);
  }
  for (int j = 0; j < Xc.cols(); ++j)
    if (std::find(indep.begin(), indep.end(), j) == indep.end()) fit.dropped.push_back(col_names[j]);

  const int k = static_cast<int>(X.cols());
  VectorXd y(n), offset(n);
  for (int i = 0; i < n; ++i) {
    y[i] = obs[i].events;
    offset[i] = std::log(obs[i].exposure);
  }
  // start at the pooled rate: on the intercept, or spread over dummy-like columns
  VectorXd beta0 = VectorXd::Zero(k);
  if (intercept) {
    beta0[0] = std::log(total / expo);
  } else {
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
    beta0 = qr.solve(VectorXd::Constant(n, std::log(total / expo)));
    if (!beta0.allFinite()) beta0.setZero();
  }
  const std::vector<char> all(n, 1);
  const NewtonFit nf = poisson_newton(X, y, offset, all, beta0);
  const VectorXd& beta = nf.beta;
  fit.iterations = nf.iterations;
  fit.log_likelihood = nf.ll;

  const VectorXd mu = (X * beta + offset).array().exp().matrix();
  const MatrixXd H = X.transpose() * mu.asDiagonal() * X;
  const MatrixXd Hinv = H.ldlt().solve(MatrixXd::Identity(k, k));
  std::map<int, std::vector<int>> members;
  for (int i = 0; i < n; ++i) members[obs[i].cluster].push_back(i);
  const int G = static_cast<int>(members.size());
  if (vcov != VcovKind::Model && G < 2)
    throw EstimationError(EstimationError::Kind::InsufficientData, "poisson_fit: clustering needs two clusters");
  if (vcov == VcovKind::Model) {
    fit.vcov = Hinv;
  } else if (vcov == VcovKind::Cluster) {
    MatrixXd meat = MatrixXd::Zero(k, k);
    for (const auto& [g, rows] : members) {
      VectorXd s = VectorXd::Zero(k);
      for (int i : rows) s.noalias() += (y[i] - mu[i]) * X.row(i).transpose();
      meat.noalias() += s * s.transpose();
    }
    fit.vcov = double(G) / (G - 1) * Hinv * meat * Hinv;
  } else {
    // delete-one-cluster jackknife, centered at the full-sample estimate
    MatrixXd acc = MatrixXd::Zero(k, k);
    std::vector<char> use(n);
    for (const auto& [g, rows] : members) {
      std::fill(use.begin(), use.end(), 1);
      for (int i : rows) use[i] = 0;
      VectorXd d;
      try {
        d = poisson_newton(X, y, offset, use, beta).beta - beta;
      } catch (const EstimationError&) {
        throw EstimationError(EstimationError::Kind::InsufficientData,
                              "poisson_fit: a leave-one-cluster-out refit has no finite maximum");
      }
      acc.noalias() += d * d.transpose();
    }
    fit.vcov = double(G - 1) / G * acc;
  }
  fit.n_clusters = vcov == VcovKind::Model ? 0 : G;
  for (int j = 0; j < k; ++j) {
    Coef c{kept_names[j], beta[j], std::sqrt(std::max(fit.vcov(j, j), 0.0)), 1.0};
    c.p_value = vcov != VcovKind::Model ? t_pvalue(c.estimate / c.se, std::max(G - 1, 1))
                                        : normal_pvalue(c.estimate / c.se);
    fit.coefs.push_back(c);
  }
  return fit;
}

PatchHazardResult patch_hazard(const Panel& panel) {
  if (panel.rows.empty()) throw EstimationError(EstimationError::Kind::EmptyInput, "patch_hazard: empty panel");
  std::vector<CountObs> obs;
  obs.reserve(panel.rows.size());
  std::map<int, double> firm_rev;
  for (const auto& r : panel.rows) {
    obs.push_back({double(r.n_patches), 1.0, {r.leverage, r.rev_proxy, r.leverage * r.rev_proxy}, r.firm_id});
    firm_rev[r.firm_id] = r.rev_proxy;
  }
  PatchHazardResult res;
  const std::vector<std::string> names{"leverage", "rev_proxy", "leverage_x_rev_proxy"};
  try {
    res.fit = poisson_fit(obs, names, true, VcovKind::ClusterJackknife);
  } catch (const EstimationError& e) {
    if (e.kind() != EstimationError::Kind::InsufficientData || res.vcov == VcovKind::Cluster) throw;
    res.fit = poisson_fit(obs, names, true, VcovKind::Cluster);
    res.vcov = VcovKind::Cluster;
  }

  std::vector<double> revs;
  for (const auto& [f, v] : firm_rev) revs.push_back(v);
  const double q75 = quantile7(revs, 0.75);
  double sum = 0.0;
  int cnt = 0;
  for (double v : revs)
    if (v >= q75) {
      sum += v;
      ++cnt;
    }
  res.r_bar = cnt ? sum / cnt : 0.0;

  auto index = [&](const std::string& name) {
    for (std::size_t j = 0; j < res.fit.coefs.size(); ++j)
      if (res.fit.coefs[j].name == name) return int(j);
    return -1;
  };
  const int i1 = index("leverage"), i3 = index("leverage_x_rev_proxy");
  double g = 0.0, var = 0.0;
  if (i1 >= 0) {
    g += res.fit.coefs[i1].estimate;
    var += res.fit.vcov(i1, i1);
  }
  if (i3 >= 0) {
    g += res.r_bar * res.fit.coefs[i3].estimate;
    var += res.r_bar * res.r_bar * res.fit.vcov(i3, i3);
  }
  if (i1 >= 0 && i3 >= 0) var += 2.0 * res.r_bar * res.fit.vcov(i1, i3);
  VectorXd b(1);
  b[0] = g;
  MatrixXd V(1, 1);
  V(0, 0) = var;
  res.leverage_effect = wald(b, V, std::max(int(firm_rev.size()) - 1, 1), "rho1 + rho3 * R_bar = 0");
  return res;
}

// Cascade hazard --------------------------------------------------------------

CascadeResult cascade_hazard(const std::vector<Spell>& spells, int n_bins) {
  if (spells.size() < 2)
    throw EstimationError(EstimationError::Kind::InsufficientData, "cascade_hazard: at least two spells required");
  int n_post = 0;
  std::vector<double> event_durations;
  for (const auto& s : spells) {
    n_post += s.post;
    if (s.event) event_durations.push_back(s.duration);
  }
  if (n_post == 0) throw EstimationError(EstimationError::Kind::InsufficientData, "cascade_hazard: no post-reset spells");
  if (n_post == int(spells.size()))
    throw EstimationError(EstimationError::Kind::InsufficientData, "cascade_hazard: no pre-reset spells");
  if (event_durations.empty()) throw EstimationError(EstimationError::Kind::InsufficientData, "cascade_hazard: no events");

  CascadeResult res;
  res.n_spells = static_cast<int>(spells.size());
  n_bins = std::max(1, std::min<int>(n_bins, int(event_durations.size())));
  for (int b = 1; b < n_bins; ++b) res.cuts.push_back(quantile7(event_durations, double(b) / n_bins));
  std::vector<double> edges{0.0};
  edges.insert(edges.end(), res.cuts.begin(), res.cuts.end());
  edges.push_back(INFINITY);

  const std::size_t nx = spells.front().x.size();
  std::vector<std::string> names;
  for (int b = 0; b < n_bins; ++b) names.push_back("bin_" + std::to_string(b));
  names.push_back("post");
  for (std::size_t j = 0; j < nx; ++j) names.push_back("x" + std::to_string(j));

  std::vector<CountObs> obs;
  for (const auto& s : spells) {
    for (int b = 0; b < n_bins; ++b) {
      const double lo = edges[b], hi = edges[b + 1];
      const double expo = std::min(s.duration, hi) - lo;
      if (expo <= 0.0) break;
      CountObs o;
      o.exposure = expo;
      o.events = (s.event && s.duration >= lo && s.duration < hi) ? 1.0 : 0.0;
      o.x.assign(n_bins, 0.0);
      o.x[b] = 1.0;
      o.x.push_back(s.post ? 1.0 : 0.0);
      o.x.insert(o.x.end(), s.x.begin(), s.x.end());
      o.cluster = s.cluster;
      obs.push_back(std::move(o));
    }
  }
  const PoissonFit fit = poisson_fit(obs, names, false, VcovKind::Model);
  for (const auto& c : fit.coefs) {
    if (c.name == "post") res.post = c;
    else if (c.name.rfind("bin_", 0) == 0) res.baseline.push_back(c);
  }
  if (res.post.name.empty())
    throw EstimationError(EstimationError::Kind::Collinear, "cascade_hazard: post indicator not identified");
  return res;
}

std::vector<Spell> patch_spells(const std::vector<FirmHistory>& firms, double horizon) {
  std::vector<Spell> spells;
  for (const auto& firm : firms) {
    double start = 0.0;
    bool post = false;
    for (const auto& e : firm.events) {
      if (e.kind != EventKind::Patch && e.kind != EventKind::Pivot) continue;
      spells.push_back({e.t - start, e.kind == EventKind::Patch, post, {}, firm.firm_id});
      start = e.t;
      post = e.kind == EventKind::Pivot;
    }
    if (horizon > start) spells.push_back({horizon - start, false, post, {}, firm.firm_id});
  }
  return spells;
}

// Plateau test ----------------------------------------------------------------

PlateauResult plateau_test(const std::vector<double>& metrics, std::uint64_t seed) {
  const int n = static_cast<int>(metrics.size());
  if (n < 30) throw EstimationError(EstimationError::Kind::InsufficientData, "plateau_test: at least 30 observations");
  PlateauResult res;
  res.n = n;
  const double mean = std::accumulate(metrics.begin(), metrics.end(), 0.0) / n;
  const double var = population_variance(metrics);
  const double log_n = std::log(double(n));
  if (var <= 1e-24 * (1.0 + mean * mean)) {
    res.bic1 = -INFINITY;
    res.bic2 = INFINITY;
    res.components = 1;
    res.fit = {{1.0, mean, 0.0, 0.0}};
    return res;
  }
  constexpr double kLog2Pi = 1.8378770664093453;
  const double ll1 = -0.5 * n * (kLog2Pi + std::log(var) + 1.0);
  res.bic1 = -2.0 * ll1 + 2.0 * log_n;

  const double floor_var = 1e-6 * var;
  struct Mix {
    double w, m1, v1, m2, v2, ll;
  };
  auto em = [&](double m1, double m2) -> std::optional<Mix> {
    Mix x{0.5, m1, var, m2, var, -INFINITY};
    std::vector<double> resp(n);
    for (int it = 0; it < 5000; ++it) {
      double ll = 0.0, s = 0.0, s1 = 0.0, s2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d1 = metrics[i] - x.m1, d2 = metrics[i] - x.m2;
        const double a = std::log(x.w) - 0.5 * (kLog2Pi + std::log(x.v1) + d1 * d1 / x.v1);
        const double b = std::log(1.0 - x.w) - 0.5 * (kLog2Pi + std::log(x.v2) + d2 * d2 / x.v2);
        const double mx = std::max(a, b);
        const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
        ll += lse;
        resp[i] = std::exp(a - lse);
      }
      for (int i = 0; i < n; ++i) {
        s += resp[i];
        s1 += resp[i] * metrics[i];
        s2 += (1.0 - resp[i]) * metrics[i];
      }
      if (s < 1e-9 || n - s < 1e-9) return std::nullopt;
      const double nm1 = s1 / s, nm2 = s2 / (n - s);
      double v1 = 0.0, v2 = 0.0;
      for (int i = 0; i < n; ++i) {
        v1 += resp[i] * (metrics[i] - nm1) * (metrics[i] - nm1);
        v2 += (1.0 - resp[i]) * (metrics[i] - nm2) * (metrics[i] - nm2);
      }
      const double prev = x.ll;
      x = {s / n, nm1, std::max(v1 / s, floor_var), nm2, std::max(v2 / (n - s), floor_var), ll};
      if (std::abs(ll - prev) <= 1e-10 * (1.0 + std::abs(ll))) return x;
    }
    return std::nullopt;
  };

  std::vector<std::pair<double, double>> starts;
  {
    std::vector<double> sorted = metrics;
    std::sort(sorted.begin(), sorted.end());
    starts.emplace_back(quantile7(sorted, 0.25), quantile7(sorted, 0.75));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int r = 0; r < 9; ++r) starts.emplace_back(metrics[pick(rng)], metrics[pick(rng)]);
  }
  std::optional<Mix> best;
  for (const auto& [a, b] : starts) {
    if (a == b) continue;
    const auto m = em(a, b);
    if (m && (!best || m->ll > best->ll)) best = m;
  }
  if (!best) throw EstimationError(EstimationError::Kind::EmNonConvergence, "plateau_test: EM failed on every restart");
  res.bic2 = -2.0 * best->ll + 5.0 * log_n;
  if (res.bic2 < res.bic1) {
    res.components = 2;
    MixtureComponent c1{best->w, best->m1, std::sqrt(best->v1), std::sqrt(best->v1 / (n * best->w))};
    MixtureComponent c2{1.0 - best->w, best->m2, std::sqrt(best->v2), std::sqrt(best->v2 / (n * (1.0 - best->w)))};
    if (c1.mean > c2.mean) std::swap(c1, c2);
    res.fit = {c1, c2};
  } else {
    res.fit = {{1.0, mean, std::sqrt(var), std::sqrt(var / n)}};
  }
  return res;
}

// Adoption RD -------------------------------------------------------------------

RdResult adoption_rd(const std::vector<UptakeRow>& rows, const std::vector<double>& alpha_by_group, double bandwidth) {
  std::vector<const UptakeRow*> use;
  int left = 0, right = 0;
  for (const auto& r : rows) {
    if (r.group < 0 || r.group >= int(alpha_by_group.size())) continue;
    const double x = r.m - alpha_by_group[r.group];
    if (std::abs(x) > bandwidth) continue;
    use.push_back(&r);
    (x >= 0.0 ? right : left)++;
  }
  if (left == 0 || right == 0)
    throw EstimationError(EstimationError::Kind::OneSided, "adoption_rd: data on one side of the cutoff only");

  std::set<int> groups;
  for (const auto* r : use) groups.insert(r->group);
  const std::vector<int> g(groups.begin(), groups.end());
  const int n = static_cast<int>(use.size()), ng = static_cast<int>(g.size());
  // group FE | D | D x SD | (m - alpha) | D (m - alpha)
  MatrixXd X = MatrixXd::Zero(n, ng + 4);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const UptakeRow& r = *use[i];
    const double x = r.m - alpha_by_group[r.group];
    const double d = x >= 0.0 ? 1.0 : 0.0;
    X(i, int(std::lower_bound(g.begin(), g.end(), r.group) - g.begin())) = 1.0;
    X(i, ng) = d;
    X(i, ng + 1) = d * r.silence_depth;
    X(i, ng + 2) = x;
    X(i, ng + 3) = d * x;
    y[i] = r.uptake;
  }
  const OlsFit fit = ols(X, y, {});
  RdResult res;
  res.n_obs = n;
  auto coef = [&](int col, const char* name) {
    Coef c{name, 0.0, NAN, NAN};
    const auto it = std::find(fit.kept.begin(), fit.kept.end(), col);
    if (it == fit.kept.end()) {
      res.dropped.emplace_back(name);
      return c;
    }
    const int k = int(it - fit.kept.begin());
    c.estimate = fit.beta[k];
    c.se = std::sqrt(std::max(fit.vcov(k, k), 0.0));
    c.p_value = c.se > 0.0 ? normal_pvalue(c.estimate / c.se) : (c.estimate == 0.0 ? 1.0 : 0.0);
    return c;
  };
  res.jump = coef(ng, "jump");
  res.interaction = coef(ng + 1, "jump_x_silence_depth");
  return res;
}

std::vector<UptakeRow> synthetic_uptake(const std::vector<UptakeGroup>& groups, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::normal_distribution<double> N(0.0, 0.05);
  const boost::math::normal phi;
  std::vector<UptakeRow> rows;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& grp = groups[gi];
    const double width = 0.02 + 0.3 * (1.0 - std::clamp(grp.silence_depth, 0.0, 1.0));
    for (int i = 0; i < grp.n; ++i) {
      const double m = grp.alpha + spread * U(rng);
      rows.push_back({int(gi), m, boost::math::cdf(phi, (m - grp.alpha) / width) + N(rng), grp.silence_depth});
    }
  }
  return rows;
}

// Model-generated telemetry -----------------------------------------------------

TelemetryData simulate_telemetry(const ScenarioConfig& config, const LadderSolution& ladder, std::uint64_t seed,
                                 int workers) {
  const auto& ts = config.telemetry;
  TelemetryData data;
  const int nf = ts.n_firms;
  const double horizon = ts.n_months * ts.month_length;
  data.firms.resize(nf);
  const ResetPolicy policy = policy_from(ladder);
  std::vector<SilenceWindow> windows;
  if (ts.window_radius > 0.0) windows.push_back({WindowSpace::PrivateState, WindowAnchor::Beta2, 0.0, ts.window_radius});
  windows = bind_windows(windows, policy);

  std::vector<std::vector<double>> post_patch(nf), post_pivot(nf);
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(workers, 1))
  for (int f = 0; f < nf; ++f) {
    const std::uint64_t firm_seed = derive_seed(seed, static_cast<std::uint64_t>(f));
    std::mt19937_64 rng(firm_seed ^ 0xA5A5A5A5A5A5A5A5ULL);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    ScenarioConfig cfg = config;
    cfg.params.c_d = ts.c_d_min + (ts.c_d_max - ts.c_d_min) * U(rng);
    cfg.params.phi1 = 0.0;
    cfg.params.phi2 = ts.phi2_min + (ts.phi2_max - ts.phi2_min) * U(rng);
    cfg.sim.horizon = horizon;
    cfg.sim.z0_at_target = false;
    cfg.sim.z0 = ladder.z1_star + (ladder.z2_star - ladder.z1_star) * U(rng);
    SimPath path = simulate_path(cfg, policy, windows, firm_seed, true);

    FirmHistory& firm = data.firms[f];
    firm.firm_id = f;
    firm.leverage = cfg.params.c_d;
    firm.phi_max = cfg.params.phi_max();
    firm.lambda_bar = cfg.params.lambda_bar;
    firm.events = std::move(path.events);
    // first published signal after each reset, before the next reset
    int pending = 0; // 1 patch, 2 pivot
    for (const auto& e : firm.events) {
      if (e.kind == EventKind::Patch) pending = 1;
      else if (e.kind == EventKind::Pivot) pending = 2;
      else if (e.kind == EventKind::Publication && pending) {
        (pending == 1 ? post_patch[f] : post_pivot[f]).push_back(e.y);
        pending = 0;
      }
    }
  }
  for (int f = 0; f < nf; ++f) {
    data.post_patch_metric.insert(data.post_patch_metric.end(), post_patch[f].begin(), post_patch[f].end());
    data.post_pivot_metric.insert(data.post_pivot_metric.end(), post_pivot[f].begin(), post_pivot[f].end());
  }
  PanelOptions po;
  po.n_months = ts.n_months;
  po.month_length = ts.month_length;
  po.phi_ref = ts.phi_ref;
  po.metric_noise = ts.metric_noise;
  po.noise_seed = seed;
  data.panel = build_panel(data.firms, po);
  data.spells = patch_spells(data.firms, horizon);
  return data;
}

bool plateau_matches(const PlateauResult& fit, const LadderSolution& ladder, double band) {
  if (fit.components != 2) return false;
  auto near = [&](const MixtureComponent& c, double target) {
    return std::abs(c.mean - target) <= std::max(3.0 * c.mean_se, band);
  };
  return near(fit.fit[0], ladder.z1_star) && near(fit.fit[1], ladder.z2_star);
}

SignatureResult run_signatures(const TelemetryData& data, const LadderSolution& ladder, int event_window,
                               double plateau_band) {
  SignatureResult out;
  out.s1 = event_study(data.panel, Outcome::NSignals, event_window);
  bool neg = false;
  for (std::size_t i = 0; i < out.s1.ells.size(); ++i) {
    if (out.s1.ells[i] > -2) continue;
    neg = true;
    if (!(out.s1.coefs[i].estimate < 0.0)) {
      neg = false;
      break;
    }
  }
  out.s1_pass = neg && out.s1.pre_joint.p_value < 0.05;

  std::vector<double> pooled = data.post_patch_metric;
  pooled.insert(pooled.end(), data.post_pivot_metric.begin(), data.post_pivot_metric.end());
  if (pooled.size() >= 30) {
    out.s2 = plateau_test(pooled);
    out.s2_pass = plateau_matches(out.s2, ladder, plateau_band);
  }
  out.s3 = patch_hazard(data.panel);
  out.s3_pass = out.s3.leverage_effect.p_value >= 0.05;
  return out;
}

} // namespace rl
