#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "tetherkit/checks.hpp"
#include "tetherkit/errors.hpp"
#include "tetherkit/observability.hpp"

#ifndef TETHERKIT_VERSION
#define TETHERKIT_VERSION "0.1.0"
#endif

namespace tetherkit::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using dynamics::SystemParams;

namespace {

const char* kStateColumns[] = {"p0x", "p0y", "p0z", "v0x", "v0y", "v0z", "q0x", "q0y",
                               "q0z", "w0x", "w0y", "w0z", "q1x", "q1y", "q1z", "w1x",
                               "w1y", "w1z", "q2x", "q2y", "q2z", "w2x", "w2y", "w2z",
                               "dp1x", "dp1y", "dp1z", "dp2x", "dp2y", "dp2z"};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string file_hash(const std::string& path) {
  return fmt::format("{:016x}", fnv1a64(read_file(path)));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << text;
  if (!f) throw ConfigError("failed writing " + path);
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

const char* mode_name(FilterMode m) {
  return m == FilterMode::kDisturbanceObserver ? "do_esekf" : "baseline";
}

json metrics_json(const sim::FilterRun& run) {
  const sim::Metrics& m = run.metrics;
  json j;
  j["filter"] = mode_name(run.mode);
  j["records"] = run.trace.size();
  j["position_rmse"] = m.position_rmse;
  j["e_q0_mean"] = m.e_q0_mean;
  j["e_q0_max"] = m.e_q0_max;
  j["disturbance_error"] = m.disturbance_error;
  j["disturbance_error_max"] = m.disturbance_error_max;
  j["convergence_time"] = optional_number(m.convergence_time);
  j["final_cov_trace"] = m.final_cov_trace;
  if (m.max_cov_trace_after_onset) {
    j["pre_pulse_cov_trace"] = optional_number(m.pre_pulse_cov_trace);
    j["max_cov_trace_after_onset"] = optional_number(m.max_cov_trace_after_onset);
    j["recovery_error_max"] = optional_number(m.recovery_error_max);
  }
  return j;
}

std::string trace_file_name(FilterMode mode, bool both) {
  return (both && mode == FilterMode::kBaseline) ? "trace_baseline.csv" : "trace.csv";
}

}  // namespace

std::string version() { return TETHERKIT_VERSION; }

std::string trace_header() {
  std::string h = "t";
  for (const char* c : kStateColumns) h += std::string(",") + c;
  for (const char* c : kStateColumns) h += std::string(",est_") + c;
  for (int i = 1; i <= 12; ++i) h += fmt::format(",z{}", i);
  h += ",e_q0";
  return h;
}

void write_trace_csv(const std::string& path, const sim::Trace& trace, FilterMode) {
  std::string text = trace_header() + "\n";
  for (const sim::TraceRecord& r : trace) {
    text += fmt::format("{:.17g}", r.t);
    for (double v : filter::to_ambient(r.truth)) text += fmt::format(",{:.17g}", v);
    for (double v : filter::to_ambient(r.estimate)) text += fmt::format(",{:.17g}", v);
    for (double v : r.z) text += fmt::format(",{:.17g}", v);
    text += fmt::format(",{:.17g}\n", r.e_q0);
  }
  write_text(path, text);
}

Config resolve_config(const std::optional<std::string>& path,
                      const std::vector<std::string>& overrides) {
  Config cfg = path ? Config::load(*path) : Config{};
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    const Config one = Config::parse(kv);
    for (const auto& [k, v] : one.values()) cfg.set(k, v);
  }
  return cfg;
}

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  Config config;
  sim::ScenarioConfig scenario;
  sim::FilterSelection selection;
  sim::MetricsOptions options;
  try {
    const sim::ScenarioId id = sim::parse_scenario(args.scenario);
    selection = sim::parse_filter_selection(args.filter);
    config = resolve_config(args.config_path, args.overrides);
    scenario = sim::make_scenario(id, config, args.seed);
    options = sim::metrics_options(scenario, config);
    fs::create_directories(args.out_dir);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidConfig;
  }

  sim::RunResult result;
  try {
    result = sim::run_scenario(scenario, selection, options);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  }

  const bool both = result.filters.size() > 1;
  json metrics;
  metrics["scenario"] = args.scenario;
  metrics["seed"] = args.seed;
  metrics["failure"] = result.failure ? json(*result.failure) : json(nullptr);
  metrics["filters"] = json::array();
  std::vector<std::string> outputs;
  try {
    for (const sim::FilterRun& run : result.filters) {
      const std::string name = trace_file_name(run.mode, both);
      write_trace_csv((fs::path(args.out_dir) / name).string(), run.trace, run.mode);
      outputs.push_back(name);
      metrics["filters"].push_back(metrics_json(run));
    }
    write_text((fs::path(args.out_dir) / "metrics.json").string(), metrics.dump(2) + "\n");
    outputs.push_back("metrics.json");

    json manifest;
    manifest["command"] = "simulate";
    manifest["scenario"] = args.scenario;
    manifest["filter"] = args.filter;
    manifest["seed"] = args.seed;
    manifest["config_path"] = args.config_path ? json(*args.config_path) : json(nullptr);
    manifest["config_hash"] = config.hash_hex();
    manifest["config"] = config.dump();
    manifest["version"] = version();
    manifest["outputs"] = outputs;
    json hashes;
    for (const std::string& o : outputs) {
      hashes[o] = file_hash((fs::path(args.out_dir) / o).string());
    }
    manifest["output_fnv1a"] = hashes;
    manifest["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text((fs::path(args.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidConfig;
  }

  if (result.failure) {
    err << "numerical failure: " << *result.failure << " (partial trace written)\n";
    return kNumericalFailure;
  }
  for (const sim::FilterRun& run : result.filters) {
    fmt::print(out, "{:<9} rmse {:.4f} m  max disturbance error {:.4f} N\n", mode_name(run.mode),
               run.metrics.position_rmse, run.metrics.disturbance_error_max);
  }
  return kOk;
}

int cmd_observability_table(const TableArgs& args, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  Config config;
  SystemParams params;
  int samples = 0;
  std::uint64_t seed = 0;
  try {
    config = resolve_config(args.config_path, args.overrides);
    params = sim::params_from_config(config);
    samples = args.samples.value_or(config.get_int("obs_samples", 5));
    seed = args.seed.value_or(static_cast<std::uint64_t>(config.get_int("obs_seed", 1)));
    if (samples < 1) throw ConfigError("--samples must be at least 1");
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidConfig;
  }

  std::vector<observability::TableRow> rows;
  try {
    const auto eqs = observability::sample_equilibria(params, samples, seed);
    rows = observability::sweep_table(params, eqs);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  }

  std::string csv = "combo,state_dim,rank,observable\n";
  json table = json::array();
  for (const auto& r : rows) {
    csv += fmt::format("{},{},{},{}\n", r.label, r.state_dim, r.rank, r.observable ? "Yes" : "No");
    table.push_back({{"combo", r.label},
                     {"state_dim", r.state_dim},
                     {"rank", r.rank},
                     {"observable", r.observable},
                     {"sample_ranks", r.sample_ranks}});
    if (!r.samples_agree || !r.variants_agree) {
      std::string ranks;
      for (int k : r.sample_ranks) ranks += fmt::format(" {}", k);
      err << fmt::format("note: {} ranks differ across equilibria or variants:{}\n", r.label,
                         ranks);
    }
    if (!r.matches_reference()) {
      err << fmt::format("note: {} rank {} differs from reference {}\n", r.label, r.rank,
                         r.expected_rank);
    }
  }
  out << csv;

  if (args.out) {
    try {
      const bool as_json = fs::path(*args.out).extension() == ".json";
      write_text(*args.out, as_json ? table.dump(2) + "\n" : csv);
      json manifest;
      manifest["command"] = "observability-table";
      manifest["config_path"] = args.config_path ? json(*args.config_path) : json(nullptr);
      manifest["config_hash"] = config.hash_hex();
      manifest["config"] = config.dump();
      manifest["samples"] = samples;
      manifest["seed"] = seed;
      manifest["version"] = version();
      manifest["outputs"] = {*args.out};
      manifest["output_fnv1a"] = {{*args.out, file_hash(*args.out)}};
      manifest["wall_time_s"] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_text(*args.out + ".manifest.json", manifest.dump(2) + "\n");
    } catch (const ConfigError& e) {
      err << "error: " << e.what() << "\n";
      return kInvalidConfig;
    }
  }
  return kOk;
}

int cmd_check(const std::string& suite, std::ostream& out, std::ostream& err) {
  std::vector<checks::SuiteReport (*)(std::uint64_t, int)> runs;
  std::vector<int> counts;
  if (suite == "manifold" || suite == "all") {
    runs.push_back(checks::manifold_suite);
    counts.push_back(10000);
  }
  if (suite == "jacobians" || suite == "all") {
    runs.push_back(checks::jacobian_suite);
    counts.push_back(100);
  }
  if (suite == "energy" || suite == "all") {
    runs.push_back(checks::energy_suite);
    counts.push_back(1000);
  }
  if (runs.empty()) {
    err << "error: unknown suite '" << suite << "' (expected manifold, jacobians, energy or all)\n";
    return kInvalidConfig;
  }
  bool ok = true;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    checks::SuiteReport report;
    try {
      report = runs[i](1, counts[i]);
    } catch (const NumericalError& e) {
      err << "numerical failure: " << e.what() << "\n";
      return kNumericalFailure;
    }
    out << "[" << report.suite << "]\n";
    for (const auto& c : report.checks) {
      fmt::print(out, "  {} {:<44} n={:<6} worst={:.3e} tol={:.0e}\n",
                 c.passed() ? "PASS" : "FAIL", c.name, c.samples, c.worst, c.tolerance);
    }
    ok = ok && report.passed();
  }
  return ok ? kOk : kCheckFailed;
}

int cmd_nees(const NeesArgs& args, std::ostream& out, std::ostream& err) {
  sim::NeesOptions opts;
  SystemParams params;
  filter::NoiseConfig noise;
  try {
    const Config config = resolve_config(args.config_path, args.overrides);
    params = sim::params_from_config(config);
    noise.Q = config.get_double("Qk_scale", 0.1) * MatX::Identity(12, 12);
    noise.R = config.get_double("Rk_scale", 0.01) * MatX::Identity(12, 12);
    opts.runs = config.get_int("nees_runs", opts.runs);
    opts.duration = config.get_double("nees_duration", opts.duration);
    opts.seed = args.seed;
    if (opts.runs < 1) throw ConfigError("nees_runs must be at least 1");
    noise.validate();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidConfig;
  }
  sim::NeesResult r;
  try {
    r = sim::nees_monte_carlo(params, noise, opts);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  }
  fmt::print(out, "runs {}  mean ANEES {:.3f}  95% band [{:.3f}, {:.3f}]  steps in band {:.1f}%\n",
             opts.runs, r.time_average, r.band_low, r.band_high, 100.0 * r.fraction_in_band);
  return r.within_band() ? kOk : kCheckFailed;
}

int cmd_replay(const std::string& manifest_path, const std::string& out_dir, std::ostream& out,
               std::ostream& err) {
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const std::exception& e) {
    err << "error: cannot read manifest: " << e.what() << "\n";
    return kInvalidConfig;
  }
  if (manifest.value("command", "") != "simulate") {
    err << "error: only simulate manifests can be replayed\n";
    return kInvalidConfig;
  }
  const Config config = Config::parse(manifest.at("config").get<std::string>());
  if (config.hash_hex() != manifest.at("config_hash").get<std::string>()) {
    err << "error: manifest config does not match its hash\n";
    return kInvalidConfig;
  }
  SimulateArgs args;
  args.scenario = manifest.at("scenario").get<std::string>();
  args.filter = manifest.at("filter").get<std::string>();
  args.seed = manifest.at("seed").get<std::uint64_t>();
  args.out_dir = out_dir;
  for (const auto& [k, v] : config.values()) args.overrides.push_back(k + "=" + v);
  const int code = cmd_simulate(args, out, err);
  if (code != kOk) return code;

  bool same = true;
  for (const auto& [name, hash] : manifest.at("output_fnv1a").items()) {
    const std::string now = file_hash((fs::path(out_dir) / name).string());
    const bool match = now == hash.get<std::string>();
    same = same && match;
    out << (match ? "identical " : "DIFFERS   ") << name << "\n";
  }
  return same ? kOk : kCheckFailed;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-drone suspended-payload dynamics, observability and estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version());

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Run a scenario and write trace, metrics, manifest");
  simulate->add_option("scenario", sim_args.scenario, "point_stab | figure8 | payload_pulse")
      ->required();
  simulate->add_option("--config", sim_args.config_path, "key = value config file");
  simulate->add_option("--set", sim_args.overrides, "override a config key (key=value)");
  simulate->add_option("--seed", sim_args.seed, "master seed");
  simulate->add_option("--out", sim_args.out_dir, "output directory");
  simulate->add_option("--filter", sim_args.filter, "do_esekf | baseline | both");

  TableArgs table_args;
  auto* table = app.add_subcommand("observability-table", "Rank sweep over disturbance combinations");
  table->add_option("--config", table_args.config_path, "key = value config file");
  table->add_option("--set", table_args.overrides, "override a config key (key=value)");
  table->add_option("--samples", table_args.samples, "number of random equilibria");
  table->add_option("--seed", table_args.seed, "sampling seed");
  table->add_option("--out", table_args.out, "write the table to a .csv or .json file");

  std::string suite = "all";
  auto* check = app.add_subcommand("check", "Run randomized property suites");
  check->add_option("suite", suite, "manifold | jacobians | energy | all");

  NeesArgs nees_args;
  auto* nees = app.add_subcommand("nees", "Monte-Carlo filter consistency (NEES)");
  nees->add_option("--config", nees_args.config_path, "key = value config file");
  nees->add_option("--set", nees_args.overrides, "override a config key (key=value)");
  nees->add_option("--seed", nees_args.seed, "master seed");

  std::string manifest_path, replay_out = "replay";
  auto* replay = app.add_subcommand("replay", "Re-run a simulate manifest and compare outputs");
  replay->add_option("manifest", manifest_path, "manifest.json")->required();
  replay->add_option("--out", replay_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kInvalidConfig;
  }

  if (simulate->parsed()) return cmd_simulate(sim_args, out, err);
  if (table->parsed()) return cmd_observability_table(table_args, out, err);
  if (check->parsed()) return cmd_check(suite, out, err);
  if (nees->parsed()) return cmd_nees(nees_args, out, err);
  return cmd_replay(manifest_path, replay_out, out, err);
}

}  // namespace tetherkit::cli
