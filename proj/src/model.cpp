#include "rl/model.hpp"

#include "rl/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rl {

const char* to_string(SolverError::Kind kind) noexcept {
  switch (kind) {
  case SolverError::Kind::NonConvergence: return "NonConvergence";
  case SolverError::Kind::SingularJacobian: return "SingularJacobian";
  case SolverError::Kind::OrderingViolation: return "OrderingViolation";
  case SolverError::Kind::InfeasibleMode: return "InfeasibleMode";
  }
  return "Unknown";
}

FlowPayoff FlowPayoff::constant(double pi0) {
  FlowPayoff f;
  f.pi0 = pi0;
  return f;
}

FlowPayoff FlowPayoff::quadratic(double pi0, double c_q, double center) {
  FlowPayoff f;
  f.pi0 = pi0;
  f.c_q = c_q;
  f.center = center;
  return f;
}

FlowPayoff FlowPayoff::double_peak(double pi0, double c_4, double width, double center) {
  FlowPayoff f;
  f.pi0 = pi0;
  f.c_4 = c_4;
  f.width = width;
  f.center = center;
  return f;
}

FlowPayoff::Kind FlowPayoff::kind() const noexcept {
  if (c_4 != 0.0) return Kind::DoublePeak;
  if (c_q != 0.0) return Kind::Quadratic;
  return Kind::Constant;
}

Poly4 FlowPayoff::coefficients() const {
  // in u = z - center
  const double w2 = width * width;
  const Poly4 in_u{pi0 - c_4 * w2 * w2, 0.0, 2.0 * c_4 * w2 - c_q, 0.0, -c_4};
  return poly_shift(in_u, center);
}

double FlowPayoff::base(double z) const {
  const double u = z - center;
  const double q = u * u - width * width;
  return pi0 - c_q * u * u - c_4 * q * q;
}

double FlowPayoff::adoption_term(double m, double alpha) const {
  return m >= alpha ? eta * p_lambda : 0.0;
}

double ModelParams::drift(double z) const noexcept {
  if (mu_table.empty()) return mu;
  if (z <= mu_table.front().z) return mu_table.front().mu;
  if (z >= mu_table.back().z) return mu_table.back().mu;
  const auto hi = std::upper_bound(mu_table.begin(), mu_table.end(), z,
                                   [](double x, const DriftNode& n) { return x < n.z; });
  const auto lo = hi - 1;
  const double w = (z - lo->z) / (hi->z - lo->z);
  return lo->mu + w * (hi->mu - lo->mu);
}

ModelParams symmetric_benchmark() {
  ModelParams p;
  p.mu = 0.0;
  p.sigma = 0.5;
  p.r = 0.5;
  p.payoff = FlowPayoff::double_peak(1.0, 0.2, 1.0);
  p.k1 = 0.2;
  p.k2 = 0.2;
  return p;
}

ValidationReport validate(const ScenarioConfig& config) {
  ValidationReport rep;
  const auto& p = config.params;
  auto need = [&](bool cond, const char* msg) {
    if (!cond) rep.violations.emplace_back(msg);
  };
  need(p.k1 >= 0.0, "k1 >= 0 required");
  need(p.k1 < p.k2, "k1 < k2 required");
  need(p.sigma > 0.0, "sigma > 0 required");
  need(p.r > 0.0, "r > 0 required");
  need(p.sigma_eps2 > 0.0, "sigma_eps2 > 0 required");
  need(p.lambda_bar > 0.0, "lambda_bar > 0 required");
  need(p.c_k >= 0.0, "c_k >= 0 required");
  need(p.kappa > 0.0, "kappa > 0 required");
  need(p.a > 0.0, "a > 0 required");
  need(p.p >= 0.0, "p >= 0 required");
  need(p.c_d >= 0.0, "c_d >= 0 required");
  need(p.phi1 >= 0.0 && p.phi2 >= 0.0, "phi1, phi2 >= 0 required");
  need(p.payoff.c_q >= 0.0, "c_q >= 0 required");
  need(p.payoff.c_4 >= 0.0, "c_4 >= 0 required");
  need(p.payoff.eta >= 0.0, "eta >= 0 required");
  need(std::isfinite(p.payoff.pi0) && std::isfinite(p.payoff.center) && std::isfinite(p.payoff.width),
       "payoff parameters must be finite");
  bool sorted = true;
  for (std::size_t i = 1; i < p.mu_table.size(); ++i) sorted = sorted && p.mu_table[i - 1].z < p.mu_table[i].z;
  need(sorted, "mu_table nodes must be strictly increasing in z");

  const auto& s = config.sim;
  need(s.dt > 0.0, "dt > 0 required");
  need(s.horizon > 0.0, "horizon > 0 required");
  need(s.n_paths >= 1, "n_paths >= 1 required");
  need(s.v0 >= 0.0, "v0 >= 0 required");
  for (const auto& w : config.windows) {
    if (!(w.radius > 0.0)) {
      rep.violations.emplace_back("window radius > 0 required");
      break;
    }
  }
  const auto& f = config.finance;
  need(f.mode == "safe" || f.mode == "with-default" || f.mode == "tightness",
       "finance mode must be safe, with-default or tightness");
  need(f.n_paths >= 1, "finance n_paths >= 1 required");
  need(f.horizon > 0.0, "finance horizon > 0 required");
  const auto& t = config.telemetry;
  need(t.n_firms >= 2, "telemetry n_firms >= 2 required");
  need(t.n_months >= 1, "telemetry n_months >= 1 required");
  need(t.month_length > 0.0, "telemetry month_length > 0 required");
  need(t.window_radius >= 0.0, "telemetry window_radius >= 0 required");
  need(t.event_window >= 1, "telemetry event_window >= 1 required");
  need(t.c_d_min <= t.c_d_max, "telemetry c_d_min <= c_d_max required");
  need(t.phi_ref > 0.0, "telemetry phi_ref > 0 required");
  need(t.replications >= 1, "telemetry replications >= 1 required");
  need(config.output.value_grid >= 2, "output value_grid >= 2 required");
  return rep;
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t path_index) noexcept {
  std::uint64_t x = base_seed + (path_index + 1) * 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

const char* to_string(WindowAnchor anchor) noexcept {
  switch (anchor) {
  case WindowAnchor::Value: return "value";
  case WindowAnchor::Beta1: return "beta1";
  case WindowAnchor::Beta2: return "beta2";
  case WindowAnchor::Z1: return "z1";
  case WindowAnchor::Z2: return "z2";
  case WindowAnchor::Alpha: return "alpha";
  }
  return "value";
}

const char* to_string(WindowSpace space) noexcept {
  return space == WindowSpace::PrivateState ? "private" : "belief";
}

namespace {

using boost::property_tree::ptree;

std::string fmt_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double x = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  const auto res = std::from_chars(first, last, x);
  if (res.ec != std::errc{} || res.ptr != last)
    throw ConfigError("cannot parse number for '" + key + "': '" + text + "'");
  return x;
}

class Reader {
public:
  explicit Reader(const ptree& tree) : tree_(tree) {}

  void number(const std::string& key, double& out) const {
    if (auto v = tree_.get_optional<std::string>(key)) out = parse_double(key, *v);
  }
  void integer(const std::string& key, int& out) const {
    if (auto v = tree_.get_optional<std::string>(key)) {
      const double x = parse_double(key, *v);
      if (x != std::floor(x)) throw ConfigError("expected integer for '" + key + "'");
      out = static_cast<int>(x);
    }
  }
  void seed(const std::string& key, std::uint64_t& out) const {
    if (auto v = tree_.get_optional<std::string>(key)) {
      const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
      if (res.ec != std::errc{} || res.ptr != v->data() + v->size())
        throw ConfigError("cannot parse seed for '" + key + "'");
    }
  }
  void flag(const std::string& key, bool& out) const {
    if (auto v = tree_.get_optional<std::string>(key)) {
      if (*v == "true" || *v == "1") out = true;
      else if (*v == "false" || *v == "0") out = false;
      else throw ConfigError("expected true/false for '" + key + "'");
    }
  }
  void text(const std::string& key, std::string& out) const {
    if (auto v = tree_.get_optional<std::string>(key)) out = *v;
  }

private:
  const ptree& tree_;
};

std::vector<DriftNode> parse_table(const std::string& text) {
  // "z:mu, z:mu, ..."
  std::vector<DriftNode> nodes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("mu_table entries must be z:mu");
    nodes.push_back({parse_double("mu_table", item.substr(0, colon)),
                     parse_double("mu_table", item.substr(colon + 1))});
  }
  return nodes;
}

SilenceWindow parse_window(const ptree& section) {
  SilenceWindow w;
  const std::string space = section.get<std::string>("space", "private");
  if (space == "private") w.space = WindowSpace::PrivateState;
  else if (space == "belief") w.space = WindowSpace::BeliefMean;
  else throw ConfigError("window space must be private or belief");
  const std::string center = section.get<std::string>("center", "0");
  static const std::pair<const char*, WindowAnchor> anchors[] = {
      {"beta1", WindowAnchor::Beta1}, {"beta2", WindowAnchor::Beta2}, {"z1", WindowAnchor::Z1},
      {"z2", WindowAnchor::Z2},       {"alpha", WindowAnchor::Alpha}};
  w.anchor = WindowAnchor::Value;
  for (const auto& [name, a] : anchors)
    if (center == name) w.anchor = a;
  if (w.anchor == WindowAnchor::Value) w.center = parse_double("window.center", center);
  w.radius = parse_double("window.radius", section.get<std::string>("radius", "0.05"));
  return w;
}

} // namespace

ScenarioConfig parse_config(std::string_view text) {
  ptree tree;
  try {
    std::istringstream in{std::string(text)};
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message());
  }

  ScenarioConfig c;
  auto& p = c.params;
  const ptree empty;
  auto section = [&](const char* name) -> const ptree& {
    auto it = tree.find(name);
    return it == tree.not_found() ? empty : it->second;
  };

  {
    Reader r(section("model"));
    r.number("mu", p.mu);
    r.number("sigma", p.sigma);
    r.number("r", p.r);
    r.number("k1", p.k1);
    r.number("k2", p.k2);
    r.number("lambda_bar", p.lambda_bar);
    r.number("c_k", p.c_k);
    r.number("sigma_eps2", p.sigma_eps2);
    r.number("kappa", p.kappa);
    r.number("m_bar", p.m_bar);
    r.number("a", p.a);
    r.number("p", p.p);
    r.number("c_d", p.c_d);
    r.number("phi1", p.phi1);
    r.number("phi2", p.phi2);
    std::string table;
    r.text("mu_table", table);
    if (!table.empty()) p.mu_table = parse_table(table);
  }
  {
    Reader r(section("payoff"));
    r.number("pi0", p.payoff.pi0);
    r.number("c_q", p.payoff.c_q);
    r.number("c_4", p.payoff.c_4);
    r.number("width", p.payoff.width);
    r.number("center", p.payoff.center);
    r.number("eta", p.payoff.eta);
    r.number("p_lambda", p.payoff.p_lambda);
  }
  {
    Reader r(section("sim"));
    r.number("horizon", c.sim.horizon);
    r.number("dt", c.sim.dt);
    r.integer("n_paths", c.sim.n_paths);
    r.seed("base_seed", c.sim.base_seed);
    r.number("z0", c.sim.z0);
    r.flag("z0_at_target", c.sim.z0_at_target);
    r.number("m0", c.sim.m0);
    r.number("v0", c.sim.v0);
    r.flag("bridge", c.sim.bridge);
  }
  {
    Reader r(section("finance"));
    r.text("mode", c.finance.mode);
    r.integer("n_paths", c.finance.n_paths);
    r.number("horizon", c.finance.horizon);
  }
  {
    Reader r(section("telemetry"));
    auto& t = c.telemetry;
    r.integer("n_firms", t.n_firms);
    r.integer("n_months", t.n_months);
    r.number("month_length", t.month_length);
    r.number("window_radius", t.window_radius);
    r.integer("event_window", t.event_window);
    r.number("metric_noise", t.metric_noise);
    r.number("c_d_min", t.c_d_min);
    r.number("c_d_max", t.c_d_max);
    r.number("phi2_min", t.phi2_min);
    r.number("phi2_max", t.phi2_max);
    r.number("phi_ref", t.phi_ref);
    r.integer("replications", t.replications);
  }
  {
    Reader r(section("output"));
    r.text("dir", c.output.dir);
    r.flag("write_events", c.output.write_events);
    r.integer("max_event_files", c.output.max_event_files);
    r.integer("value_grid", c.output.value_grid);
  }
  // [window.0], [window.1], ... in index order
  for (int i = 0;; ++i) {
    auto it = tree.find("window." + std::to_string(i));
    if (it == tree.not_found()) break;
    c.windows.push_back(parse_window(it->second));
  }
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_config_text(const ScenarioConfig& c) {
  std::ostringstream out;
  const auto& p = c.params;
  auto kv = [&](const char* k, double v) { out << k << " = " << fmt_double(v) << '\n'; };
  auto ki = [&](const char* k, long long v) { out << k << " = " << v << '\n'; };
  auto kb = [&](const char* k, bool v) { out << k << " = " << (v ? "true" : "false") << '\n'; };

  out << "[model]\n";
  kv("mu", p.mu);
  kv("sigma", p.sigma);
  kv("r", p.r);
  kv("k1", p.k1);
  kv("k2", p.k2);
  kv("lambda_bar", p.lambda_bar);
  kv("c_k", p.c_k);
  kv("sigma_eps2", p.sigma_eps2);
  kv("kappa", p.kappa);
  kv("m_bar", p.m_bar);
  kv("a", p.a);
  kv("p", p.p);
  kv("c_d", p.c_d);
  kv("phi1", p.phi1);
  kv("phi2", p.phi2);
  if (!p.mu_table.empty()) {
    out << "mu_table = ";
    for (std::size_t i = 0; i < p.mu_table.size(); ++i)
      out << (i ? "," : "") << fmt_double(p.mu_table[i].z) << ':' << fmt_double(p.mu_table[i].mu);
    out << '\n';
  }
  out << "\n[payoff]\n";
  kv("pi0", p.payoff.pi0);
  kv("c_q", p.payoff.c_q);
  kv("c_4", p.payoff.c_4);
  kv("width", p.payoff.width);
  kv("center", p.payoff.center);
  kv("eta", p.payoff.eta);
  kv("p_lambda", p.payoff.p_lambda);

  out << "\n[sim]\n";
  kv("horizon", c.sim.horizon);
  kv("dt", c.sim.dt);
  ki("n_paths", c.sim.n_paths);
  out << "base_seed = " << c.sim.base_seed << '\n';
  kv("z0", c.sim.z0);
  kb("z0_at_target", c.sim.z0_at_target);
  kv("m0", c.sim.m0);
  kv("v0", c.sim.v0);
  kb("bridge", c.sim.bridge);

  out << "\n[finance]\n";
  out << "mode = " << c.finance.mode << '\n';
  ki("n_paths", c.finance.n_paths);
  kv("horizon", c.finance.horizon);

  const auto& t = c.telemetry;
  out << "\n[telemetry]\n";
  ki("n_firms", t.n_firms);
  ki("n_months", t.n_months);
  kv("month_length", t.month_length);
  kv("window_radius", t.window_radius);
  ki("event_window", t.event_window);
  kv("metric_noise", t.metric_noise);
  kv("c_d_min", t.c_d_min);
  kv("c_d_max", t.c_d_max);
  kv("phi2_min", t.phi2_min);
  kv("phi2_max", t.phi2_max);
  kv("phi_ref", t.phi_ref);
  ki("replications", t.replications);

  out << "\n[output]\n";
  out << "dir = " << c.output.dir << '\n';
  kb("write_events", c.output.write_events);
  ki("max_event_files", c.output.max_event_files);
  ki("value_grid", c.output.value_grid);

  for (std::size_t i = 0; i < c.windows.size(); ++i) {
    const auto& w = c.windows[i];
    out << "\n[window." << i << "]\n";
    out << "space = " << to_string(w.space) << '\n';
    if (w.anchor == WindowAnchor::Value) out << "center = " << fmt_double(w.center) << '\n';
    else out << "center = " << to_string(w.anchor) << '\n';
    kv("radius", w.radius);
  }
  return out.str();
}

} // namespace rl
