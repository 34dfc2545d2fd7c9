#include "rl/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rl {

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  auto res = std::to_chars(buf, buf + 16, x, 16);
  std::string s(buf, res.ptr);
  return std::string(16 - s.size(), '0') + s;
}

std::string format_number(double x) {
  if (!std::isfinite(x)) return "NA";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

// nlohmann writes NaN/inf as null; keep that explicit
Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

} // namespace

Json to_json(const MeanSe& x) { return Json{{"mean", num(x.mean)}, {"se", num(x.se)}, {"n", x.n}}; }

Json to_json(const LadderSolution& sol, const ModelParams& params) {
  Json j;
  j["beta1"] = sol.beta1;
  j["z1_star"] = sol.z1_star;
  j["z2_star"] = sol.z2_star;
  j["beta2"] = sol.beta2;
  j["A"] = sol.value.A;
  j["B"] = sol.value.B;
  j["k1"] = sol.k1;
  j["k2"] = sol.k2;
  j["flow_shift"] = sol.flow_shift;
  j["z_ref"] = sol.value.z_ref;
  j["roots"] = {{"eta_plus", sol.value.roots.plus}, {"eta_minus", sol.value.roots.minus}};
  j["particular"] = {{"c0", sol.value.particular[0]}, {"c1", sol.value.particular[1]},
                     {"c2", sol.value.particular[2]}, {"c3", sol.value.particular[3]},
                     {"c4", sol.value.particular[4]}};
  Json res = Json::array();
  for (double r : sol.residuals.boundary) res.push_back(r);
  j["residuals"] = {{"boundary", res},
                    {"max_boundary", sol.residuals.max_boundary()},
                    {"qvi_grid", sol.residuals.qvi_grid},
                    {"ic", sol.residuals.ic}};
  j["iterations"] = sol.iterations;
  j["value_at_targets"] = {{"z1_star", sol.value(sol.z1_star)}, {"z2_star", sol.value(sol.z2_star)}};
  j["mean_exit_time_from_z1_star"] = num(mean_exit_time(params, {sol.beta1, sol.beta2}, sol.z1_star));
  return j;
}

Json to_json(const QviReport& q) {
  return Json{{"grid_n", q.grid_n},
              {"ode_residual", q.ode_residual},
              {"dominance_margin", q.dominance_margin},
              {"delta_ic", q.delta_ic},
              {"classification", to_string(q.classification)},
              {"passed", q.passed}};
}

Json to_json(const BatchStats& s) {
  Json j;
  j["n_paths"] = s.n_paths;
  j["publications"] = to_json(s.publications);
  j["patches"] = to_json(s.patches);
  j["pivots"] = to_json(s.pivots);
  j["first_exit_time"] = to_json(s.first_exit_time);
  j["adoption_time"] = to_json(s.adoption_time);
  j["disc_payoff"] = to_json(s.disc_payoff);
  j["disc_clock_cost"] = to_json(s.disc_clock_cost);
  j["events_per_time"] = to_json(s.events_per_time);
  j["publications_in_window"] = s.publications_in_window;
  j["max_events"] = s.max_events;
  Json res = Json::array();
  for (std::size_t i = 0; i < s.residence.size(); ++i)
    res.push_back({{"window", i}, {"residence", to_json(s.residence[i])}, {"disc_residence", to_json(s.disc_residence[i])}});
  j["windows"] = res;
  j["residence_per_cycle_total"] = num(s.residence_per_cycle_total);
  j["total_resets"] = s.total_resets;
  return j;
}

Json to_json(const AdoptionSolution& s) {
  return Json{{"alpha", s.alpha},
              {"alpha_closed_form", num(s.alpha_closed_form)},
              {"root_residual", s.root_residual},
              {"smooth_fit_residual", s.smooth_fit},
              {"bracket", {s.bracket.first, s.bracket.second}},
              {"dalpha_dp", s.derivatives.dalpha_dp},
              {"dalpha_dmbar", s.derivatives.dalpha_dmbar}};
}

Json to_json(const LeveredSolution& l) {
  Json res = Json::array();
  for (double r : l.residuals) res.push_back(r);
  return Json{{"mode", to_string(l.mode)},
              {"c_d", l.c_d},
              {"beta1", l.beta1},
              {"z1_star", l.z1_star},
              {"z2_star", num(l.z2_star)},
              {"upper", l.upper},
              {"default_on_path", l.default_on_path},
              {"z_d", num(l.z_d)},
              {"A", l.equity.A},
              {"B", l.equity.B},
              {"residuals", res},
              {"min_equity", l.min_equity},
              {"iterations", l.iterations}};
}

Json to_json(const WedgeReport& w) {
  return Json{{"mode", to_string(w.mode)},
              {"z0", w.z0},
              {"a_fb", w.a_fb},
              {"equity_ode", w.equity_ode},
              {"equity_mc", to_json(w.equity_mc)},
              {"debt", to_json(w.debt)},
              {"agency", to_json(w.agency)},
              {"irreversibility", to_json(w.irreversibility)},
              {"phi_max_term", to_json(w.phi_max_term)},
              {"discount_default", to_json(w.discount_default)},
              {"wedge", to_json(w.wedge)},
              {"bound_slack", to_json(w.bound_slack)},
              {"horizon_remainder", to_json(w.horizon_remainder)},
              {"decomposition_gap", w.decomposition_gap},
              {"default_share", w.default_share},
              {"agency_nonnegative", w.agency_nonnegative},
              {"bound_holds", w.bound_holds}};
}

Json to_json(const Coef& c) {
  return Json{{"name", c.name}, {"estimate", num(c.estimate)}, {"se", num(c.se)}, {"p_value", num(c.p_value)}};
}

Json to_json(const WaldTest& w) {
  return Json{{"hypothesis", w.hypothesis}, {"statistic", num(w.statistic)}, {"df", w.df}, {"p_value", num(w.p_value)}};
}

Json to_json(const EventStudyResult& r) {
  Json coefs = Json::array();
  for (std::size_t i = 0; i < r.coefs.size(); ++i) {
    Json c = to_json(r.coefs[i]);
    c["ell"] = r.ells[i];
    coefs.push_back(c);
  }
  return Json{{"outcome", to_string(r.outcome)}, {"window", r.window},  {"n_obs", r.n_obs},
              {"n_clusters", r.n_clusters},       {"coefficients", coefs}, {"dropped", r.dropped},
              {"pre_joint", to_json(r.pre_joint)}};
}

Json to_json(const PoissonFit& f) {
  Json coefs = Json::array();
  for (const auto& c : f.coefs) coefs.push_back(to_json(c));
  return Json{{"coefficients", coefs},
              {"dropped", f.dropped},
              {"n_clusters", f.n_clusters},
              {"log_likelihood", f.log_likelihood},
              {"iterations", f.iterations}};
}

Json to_json(const PatchHazardResult& r) {
  return Json{{"fit", to_json(r.fit)},
              {"vcov", to_string(r.vcov)},
              {"r_bar", r.r_bar},
              {"leverage_effect", to_json(r.leverage_effect)}};
}

Json to_json(const CascadeResult& r) {
  Json base = Json::array();
  for (const auto& c : r.baseline) base.push_back(to_json(c));
  return Json{{"post", to_json(r.post)}, {"baseline", base}, {"cuts", r.cuts}, {"n_spells", r.n_spells}};
}

Json to_json(const PlateauResult& r) {
  Json comps = Json::array();
  for (const auto& c : r.fit)
    comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"sd", c.sd}, {"mean_se", c.mean_se}});
  return Json{{"n", r.n}, {"bic1", num(r.bic1)}, {"bic2", num(r.bic2)}, {"components", r.components}, {"fit", comps}};
}

Json to_json(const RdResult& r) {
  return Json{
      {"jump", to_json(r.jump)}, {"interaction", to_json(r.interaction)}, {"dropped", r.dropped}, {"n_obs", r.n_obs}};
}

Json to_json(const ValidationReport& rep) { return Json{{"ok", rep.ok()}, {"violations", rep.violations}}; }

std::string value_csv(const LadderSolution& sol, int n) {
  const double span = sol.beta2 - sol.beta1;
  const double lo = sol.beta1 - 0.25 * span, hi = sol.beta2 + 0.25 * span;
  std::ostringstream out;
  out << "z,V,dV\n";
  for (int i = 0; i < n; ++i) {
    const double z = lo + (hi - lo) * i / (n - 1);
    out << format_number(z) << ',' << format_number(sol.value(z)) << ',' << format_number(sol.value.d1(z)) << '\n';
  }
  return out.str();
}

std::string residuals_csv(const LadderSolution& sol) {
  static const char* names[6] = {"value_matching_patch", "smooth_pasting_beta1", "target_optimality_z1",
                                 "value_matching_pivot", "smooth_pasting_beta2", "target_optimality_z2"};
  std::ostringstream out;
  out << "condition,residual\n";
  for (int i = 0; i < 6; ++i) out << names[i] << ',' << format_number(sol.residuals.boundary[i]) << '\n';
  out << "qvi_grid," << format_number(sol.residuals.qvi_grid) << '\n';
  out << "ic_gap," << format_number(sol.residuals.ic) << '\n';
  return out.str();
}

std::string events_csv(const std::vector<EventRecord>& events) {
  std::ostringstream out;
  out << "t,kind,z_pre,z_post,m_pre,m,v,y,publication_flag\n";
  for (const auto& e : events) {
    out << format_number(e.t) << ',' << to_string(e.kind) << ',' << format_number(e.z_pre) << ','
        << format_number(e.z_post) << ',' << format_number(e.m_pre) << ',' << format_number(e.m) << ','
        << format_number(e.v) << ',' << format_number(e.y) << ',' << (e.kind == EventKind::Publication ? 1 : 0)
        << '\n';
  }
  return out.str();
}

std::string adoption_table_csv(const std::vector<AdoptionRow>& rows) {
  std::ostringstream out;
  out << "m,W,tau\n";
  for (const auto& r : rows)
    out << format_number(r.m) << ',' << format_number(r.w) << ',' << format_number(r.tau) << '\n';
  return out.str();
}

std::string residence_csv(const std::vector<ResidenceRow>& rows) {
  std::ostringstream out;
  out << "delta,per_cycle,per_cycle_se,oracle,clock_saving,ratio,publications_in_window\n";
  for (const auto& r : rows)
    out << format_number(r.delta) << ',' << format_number(r.per_cycle) << ',' << format_number(r.per_cycle_se) << ','
        << format_number(r.oracle) << ',' << format_number(r.clock_saving) << ',' << format_number(r.ratio) << ','
        << r.publications_in_window << '\n';
  return out.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

} // namespace rl
