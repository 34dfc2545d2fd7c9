// resetladder: batch front-end for the reset-ladder model.
//
//   resetladder <command> --config FILE [--out DIR] [--seed S] [--paths N] [--workers W]
//
// Exit codes: 0 ok, 2 invalid config, 3 solver failure, 4 I/O failure, 1 other.

#include "rl/errors.hpp"
#include "rl/io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <thread>

namespace fs = std::filesystem;
using namespace rl;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string command;
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> paths;
  int workers = 1;
};

class Run {
public:
  Run(ScenarioConfig config, const Options& opts) : cfg_(std::move(config)), opts_(opts), out_(cfg_.output.dir) {}

  void execute() {
    const std::string& c = opts_.command;
    if (c == "solve-ladder" || c == "all") solve();
    if (c == "simulate" || c == "all") simulate();
    if (c == "adoption" || c == "all") adoption();
    if (c == "finance-wedge" || c == "all") finance();
    if (c == "telemetry" || c == "all") telemetry();
    manifest();
  }

private:
  const LadderSolution& ladder() {
    if (!ladder_) ladder_ = solve_ladder(cfg_.params);
    return *ladder_;
  }

  bool needs_alpha() const {
    if (cfg_.params.payoff.eta > 0.0 && cfg_.params.payoff.p_lambda > 0.0) return true;
    return std::any_of(cfg_.windows.begin(), cfg_.windows.end(),
                       [](const SilenceWindow& w) { return w.anchor == WindowAnchor::Alpha; });
  }

  const AdoptionSolution& adoption_solution() {
    if (!adoption_) adoption_ = solve_adoption(cfg_.params);
    return *adoption_;
  }

  void write(const std::string& name, const std::string& bytes) {
    write_file(out_ / name, bytes);
    files_.push_back({name, hex64(fnv1a64(bytes))});
  }

  void solve() {
    const LadderSolution& sol = ladder();
    Json j = to_json(sol, cfg_.params);
    j["qvi"] = to_json(qvi_check(sol, cfg_.params));
    write("ladder.json", dump(j));
    write("ladder_value.csv", value_csv(sol, cfg_.output.value_grid));
    write("ladder_residuals.csv", residuals_csv(sol));
  }

  void simulate() {
    const double alpha = needs_alpha() ? adoption_solution().alpha : INFINITY;
    const ResetPolicy policy = policy_from(ladder(), alpha);
    const auto windows = bind_windows(cfg_.windows, policy);
    BatchOptions bo;
    bo.workers = opts_.workers;
    bo.keep_paths = cfg_.output.write_events ? cfg_.output.max_event_files : 0;
    const BatchStats stats = run_batch(cfg_, policy, windows, cfg_.sim.n_paths, bo);
    Json j = to_json(stats);
    Json wj = Json::array();
    for (const auto& w : windows)
      wj.push_back({{"space", to_string(w.space)}, {"anchor", to_string(w.anchor)}, {"center", w.center},
                    {"radius", w.radius}});
    j["bound_windows"] = wj;
    j["alpha"] = std::isfinite(alpha) ? Json(alpha) : Json(nullptr);
    write("batch.json", dump(j));
    for (std::size_t i = 0; i < stats.kept.size(); ++i)
      write("events_0_" + std::to_string(i) + ".csv", events_csv(stats.kept[i].events));
  }

  void adoption() {
    const AdoptionSolution& sol = adoption_solution();
    write("adoption.json", dump(to_json(sol)));
    const double lo = sol.alpha - 4.0;
    write("adoption_table.csv", adoption_table_csv(adoption_table(cfg_.params, sol, lo, cfg_.output.value_grid)));
  }

  void finance() {
    const FinanceMode mode = parse_finance_mode(cfg_.finance.mode);
    ModelParams unlevered = cfg_.params;
    unlevered.c_d = 0.0;
    const LadderSolution fb = solve_ladder(unlevered);
    const LeveredSolution lev = solve_levered_equity(cfg_.params, fb, mode);
    FinanceRun run;
    run.config = cfg_;
    run.config.sim.horizon = cfg_.finance.horizon;
    run.z0 = cfg_.sim.z0_at_target ? fb.z1_star : cfg_.sim.z0;
    run.n_paths = cfg_.finance.n_paths;
    run.workers = opts_.workers;
    const WedgeReport rep = wedge_report(cfg_.params, lev, fb, run);
    Json j;
    j["levered"] = to_json(lev);
    j["report"] = to_json(rep);
    j["debt_closed_form_z0"] = debt_value_closed_form(lev, fb, cfg_.params, run.z0);
    write("wedge.json", dump(j));
  }

  template <class F>
  static Json guarded(F&& f) {
    try {
      return f();
    } catch (const EstimationError& e) {
      return Json{{"error", e.what()}};
    } catch (const std::invalid_argument& e) {
      return Json{{"error", e.what()}};
    }
  }

  void telemetry() {
    const auto& ts = cfg_.telemetry;
    const LadderSolution& lad = ladder();
    const double band = cfg_.params.sigma / std::sqrt(cfg_.params.lambda_bar);
    Json reps = Json::array();
    int s1 = 0, s2 = 0, s3 = 0;
    std::vector<double> pooled;
    for (int r = 0; r < ts.replications; ++r) {
      const std::uint64_t seed = derive_seed(cfg_.sim.base_seed, 0x7e1e0000ULL + static_cast<std::uint64_t>(r));
      const TelemetryData data = simulate_telemetry(cfg_, lad, seed, opts_.workers);
      pooled.insert(pooled.end(), data.post_patch_metric.begin(), data.post_patch_metric.end());
      pooled.insert(pooled.end(), data.post_pivot_metric.begin(), data.post_pivot_metric.end());
      Json rj{{"replication", r}, {"seed", seed}};
      try {
        const SignatureResult sig = run_signatures(data, lad, ts.event_window, band);
        s1 += sig.s1_pass;
        s2 += sig.s2_pass;
        s3 += sig.s3_pass;
        rj["s1_pass"] = sig.s1_pass;
        rj["s1_pre_joint_p"] = sig.s1.pre_joint.p_value;
        rj["s2_pass"] = sig.s2_pass;
        rj["s2_components"] = sig.s2.components;
        rj["s3_pass"] = sig.s3_pass;
        rj["s3_p"] = sig.s3.leverage_effect.p_value;
      } catch (const EstimationError& e) {
        rj["error"] = e.what();
      }
      reps.push_back(rj);
      if (r == 0) first_replication(data, lad);
    }
    Json j;
    j["replications"] = ts.replications;
    j["plateau_band"] = band;
    j["s1_pass_rate"] = double(s1) / ts.replications;
    j["s2_pass_rate"] = double(s2) / ts.replications;
    j["s3_pass_rate"] = double(s3) / ts.replications;
    j["pooled_plateau"] = guarded([&] {
      const PlateauResult p = plateau_test(pooled);
      Json pj = to_json(p);
      pj["matches_targets"] = plateau_matches(p, lad, band);
      pj["targets"] = {lad.z1_star, lad.z2_star};
      return pj;
    });
    j["per_replication"] = reps;
    write("estimates_signatures.json", dump(j));
  }

  void first_replication(const TelemetryData& data, const LadderSolution& lad) {
    const int L = cfg_.telemetry.event_window;
    write("panel.csv", panel_csv(data.panel));
    for (Outcome o : {Outcome::NSignals, Outcome::DispersionX, Outcome::DispersionTime})
      write(std::string("estimates_event_") + to_string(o) + ".json",
            dump(guarded([&] { return to_json(event_study(data.panel, o, L)); })));
    write("estimates_patch_hazard.json", dump(guarded([&] { return to_json(patch_hazard(data.panel)); })));
    write("estimates_cascade.json", dump(guarded([&] { return to_json(cascade_hazard(data.spells)); })));
    std::vector<double> pooled = data.post_patch_metric;
    pooled.insert(pooled.end(), data.post_pivot_metric.begin(), data.post_pivot_metric.end());
    write("estimates_plateau.json", dump(guarded([&] {
            Json j;
            j["patch"] = guarded([&] { return to_json(plateau_test(data.post_patch_metric)); });
            j["pivot"] = guarded([&] { return to_json(plateau_test(data.post_pivot_metric)); });
            j["pooled"] = guarded([&] { return to_json(plateau_test(pooled)); });
            j["targets"] = {lad.z1_star, lad.z2_star};
            return j;
          })));
    // uptake around the adoption cutoff, one group per pivot with its measured silence depth
    write("estimates_rd.json", dump(guarded([&] {
            const double alpha = adoption_solution().alpha;
            std::vector<UptakeGroup> groups;
            for (const auto& row : data.panel.rows)
              if (row.silence_depth) groups.push_back({alpha, std::clamp(*row.silence_depth, 0.0, 1.0), 100});
            const auto rows = synthetic_uptake(groups, 0.4, derive_seed(cfg_.sim.base_seed, 0x5dULL));
            Json j = to_json(adoption_rd(rows, std::vector<double>(groups.size(), alpha), 0.15));
            j["alpha"] = alpha;
            j["groups"] = groups.size();
            return j;
          })));
  }

  void manifest() {
    // the output location is not an input, so it stays out of the hash
    ScenarioConfig hashed = cfg_;
    hashed.output.dir.clear();
    const std::string text = to_config_text(hashed);
    Json files = Json::array();
    for (const auto& [name, hash] : files_) files.push_back({{"file", name}, {"fnv1a64", hash}});
    Json j{{"command", opts_.command},
           {"version", kVersion},
           {"config_hash", hex64(fnv1a64(text))},
           {"seed", cfg_.sim.base_seed},
           {"n_paths", cfg_.sim.n_paths},
           {"finance_n_paths", cfg_.finance.n_paths},
           {"outputs", files},
           {"effective_config", text}};
    write_file(out_ / "manifest.json", dump(j));
  }

  ScenarioConfig cfg_;
  Options opts_;
  fs::path out_;
  std::optional<LadderSolution> ladder_;
  std::optional<AdoptionSolution> adoption_;
  std::vector<std::pair<std::string, std::string>> files_;
};

int fail(const Options& opts, const std::string& out_dir, int code, const char* kind, const std::string& message,
         Json details = nullptr) {
  Json j{{"error", kind}, {"message", message}, {"exit_code", code}, {"command", opts.command}};
  if (!details.is_null()) j["details"] = std::move(details);
  std::cerr << j.dump(2) << '\n';
  if (!out_dir.empty()) {
    try {
      write_file(fs::path(out_dir) / "error.json", dump(j));
    } catch (const IoError&) {
    }
  }
  return code;
}

} // namespace

int main(int argc, char** argv) {
  Options opts;
  opts.workers = std::max(1u, std::thread::hardware_concurrency());
  CLI::App app{"Reset-ladder model: ladder solver, cadence simulator, adoption, financing and telemetry"};
  app.require_subcommand(1, 1);
  std::uint64_t seed = 0;
  int paths = 0;
  const std::pair<const char*, const char*> commands[] = {
      {"solve-ladder", "solve the two-reset ladder and run the QVI check"},
      {"simulate", "Monte Carlo cadence batch with silence windows"},
      {"adoption", "buyer adoption threshold and value table"},
      {"finance-wedge", "levered ladder and financing wedge decomposition"},
      {"telemetry", "synthetic firm panel and signature estimators"},
      {"all", "every command above into one output directory"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config_path, "scenario config (INI)")->required();
    sub->add_option("--out", opts.out, "output directory (overrides [output] dir)");
    sub->add_option("--seed", seed, "base seed override");
    sub->add_option("--paths", paths, "path count override (simulation and financing)")->check(CLI::PositiveNumber);
    sub->add_option("--workers", opts.workers, "OpenMP worker threads")->check(CLI::PositiveNumber);
    sub->callback([&, name = name, sub] {
      opts.command = name;
      if (sub->count("--seed")) opts.seed = seed;
      if (sub->count("--paths")) opts.paths = paths;
    });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string out_dir = opts.out;
  ScenarioConfig cfg;
  try {
    cfg = load_config(opts.config_path);
  } catch (const ConfigError& e) {
    return fail(opts, out_dir, kExitConfig, "config_invalid", e.what());
  } catch (const std::exception& e) {
    return fail(opts, out_dir, kExitIo, "io", e.what());
  }
  if (!opts.out.empty()) cfg.output.dir = opts.out;
  out_dir = cfg.output.dir;
  if (opts.seed) cfg.sim.base_seed = *opts.seed;
  if (opts.paths) {
    cfg.sim.n_paths = *opts.paths;
    cfg.finance.n_paths = *opts.paths;
  }
  const ValidationReport rep = validate(cfg);
  if (!rep.ok()) return fail(opts, out_dir, kExitConfig, "config_invalid", "config failed validation", to_json(rep));

  try {
    Run(cfg, opts).execute();
  } catch (const IoError& e) {
    return fail(opts, out_dir, kExitIo, "io", e.what());
  } catch (const SolverError& e) {
    return fail(opts, out_dir, kExitSolver, "solver", e.what(),
                Json{{"kind", to_string(e.kind())}, {"condition_number", e.condition_number()}});
  } catch (const NoSignChange& e) {
    return fail(opts, out_dir, kExitSolver, "solver", e.what(), Json{{"kind", "no_sign_change"}});
  } catch (const EstimationError& e) {
    return fail(opts, out_dir, kExitSolver, "estimation", e.what());
  } catch (const std::exception& e) {
    return fail(opts, out_dir, 1, "internal", e.what());
  }
  return 0;
}
