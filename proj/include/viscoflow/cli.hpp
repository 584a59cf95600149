#pragma once

// Command-line front end.
// Exit codes: 0 success, 1 failed assertion, 2 invalid configuration,
// 3 solver failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "viscoflow/config.hpp"
#include "viscoflow/convergence_lab.hpp"
#include "viscoflow/field_io.hpp"
#include "viscoflow/initial_data.hpp"
#include "viscoflow/linear_flow.hpp"
#include "viscoflow/nonlinear_flow.hpp"
#include "viscoflow/property_suite.hpp"
#include "viscoflow/report.hpp"

namespace viscoflow {

enum ExitCode : int { kExitOk = 0, kExitAssertion = 1, kExitConfig = 2, kExitSolver = 3 };

namespace cli_detail {

struct Outcome {
  int code = kExitOk;
  std::string reason;

  void fail(int c, const std::string& why) {
    if (c > code) code = c;
    if (!reason.empty()) reason += "\n";
    reason += why;
  }
};

inline nlohmann::ordered_json checks_json(const std::vector<Check>& checks) {
  auto a = nlohmann::ordered_json::array();
  for (const auto& c : checks) a.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return a;
}

inline nlohmann::ordered_json summary_head(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["artifact"] = "viscoflow";
  j["version"] = kVersion;
  j["config_hash"] = cfg.hash();
  j["mode"] = cfg.mode;
  j["config"] = cfg.resolved;
  return j;
}

inline void print_checks(std::ostream& log, const std::vector<Check>& checks) {
  for (const auto& c : checks)
    log << (c.passed ? "  pass  " : (c.advisory ? "  note  " : "  FAIL  ")) << c.name
        << (c.detail.empty() ? "" : "  (" + c.detail + ")") << "\n";
}

inline Outcome run_nonlinear(const RunConfig& cfg, std::ostream& log) {
  Outcome out;
  const auto prov = cfg.provenance();
  const auto [y0, u0] = initial_pair(cfg.grid(), cfg.init, cfg.delta, 2);
  const Trajectory tr = run_minimizing_movement(cfg.nonlinear(), cfg.bundle(), y0);
  write_text(cfg.output + "/ledger.csv", ledger_csv(tr.ledger, prov));
  write_snapshot(cfg.output + "/final.bin", tr.fields.back(), tr.ledger.back().t);

  std::vector<Check> checks;
  const double margin = energy_estimate_margin(tr.ledger, cfg.tau);
  checks.push_back({"energy non-increasing", energy_monotone(tr.ledger), ""});
  checks.push_back({"discrete energy estimate", margin >= -1e-8, "margin " + format_number(margin)});
  auto j = summary_head(cfg);
  j["steps"] = tr.steps();
  j["failed"] = tr.failed;
  j["message"] = tr.message;
  j["energy_initial"] = tr.ledger.front().energy;
  j["energy_final"] = tr.ledger.back().energy;
  j["energy_identity_residual"] = energy_identity_residual(tr.ledger, cfg.tau);
  j["checks"] = checks_json(checks);
  write_text(cfg.output + "/summary.json", j.dump(2) + "\n");

  log << "nonlinear: " << tr.steps() << " steps, energy " << format_number(tr.ledger.front().energy) << " -> "
      << format_number(tr.ledger.back().energy) << "\n";
  print_checks(log, checks);
  for (const auto& c : checks)
    if (!c.passed) out.fail(kExitAssertion, c.name);
  if (tr.failed) out.fail(kExitSolver, tr.message);
  return out;
}

inline Outcome run_linear(const RunConfig& cfg, std::ostream& log) {
  Outcome out;
  const auto prov = cfg.provenance();
  const LinearConfig lc = cfg.linear();
  const Field u0 = initial_displacement(cfg.grid(), cfg.init, lc.clamp);
  const LinearTrajectory tr = run_linear_flow(lc, u0);
  write_text(cfg.output + "/ledger.csv", ledger_csv(tr.ledger, prov));
  write_snapshot(cfg.output + "/final.bin", tr.fields.back(), tr.ledger.back().t);

  std::vector<Check> checks;
  checks.push_back({"energy non-increasing", energy_monotone(tr.ledger), ""});
  auto j = summary_head(cfg);
  if (cfg.dim == 1 && cfg.init.family == "mode") {
    // Amplitudes against the discrete and continuous modal solutions.
    const int k = cfg.init.mode;
    const double cw = lc.Cw(0, 0, 0, 0), cd = lc.Cd(0, 0, 0, 0);
    Table t("modal", "n", {}, {"t", "amplitude", "discrete_oracle", "continuous_oracle"});
    double worst = 0.0;
    const double a0 = modal_amplitude(tr.fields.front(), k);
    for (std::size_t n = 0; n < tr.fields.size(); ++n) {
      const double a = modal_amplitude(tr.fields[n], k);
      const double disc = modal_discrete_1d(a0, cfg.tau, static_cast<int>(n), cw, cd);
      const double cont = modal_oracle_1d(k, a0, tr.ledger[n].t, cw, cd);
      t.rows.push_back(std::to_string(n));
      t.cells.push_back({tr.ledger[n].t, a, disc, cont});
      worst = std::fmax(worst, std::fabs(a - disc));
    }
    write_text(cfg.output + "/modal.csv", table_csv(t, prov));
    checks.push_back({"modal amplitudes match the discrete oracle", worst <= 1e-10 * std::fmax(1.0, std::fabs(a0)),
                      "max deviation " + format_number(worst)});
    j["modal_max_deviation"] = worst;
  }
  j["steps"] = tr.steps();
  j["energy_initial"] = tr.ledger.front().energy;
  j["energy_final"] = tr.ledger.back().energy;
  j["checks"] = checks_json(checks);
  write_text(cfg.output + "/summary.json", j.dump(2) + "\n");

  log << "linear: " << tr.steps() << " steps, energy " << format_number(tr.ledger.front().energy) << " -> "
      << format_number(tr.ledger.back().energy) << "\n";
  print_checks(log, checks);
  for (const auto& c : checks)
    if (!c.passed) out.fail(kExitAssertion, c.name);
  return out;
}

inline Outcome run_sweep(const RunConfig& cfg, std::ostream& log) {
  Outcome out;
  const SweepSpec spec = cfg.sweep();
  SweepReport r;
  if (cfg.mode == "sweep-delta") r = sweep_delta_fixed_tau(spec);
  else if (cfg.mode == "sweep-tau") r = sweep_tau_fixed_delta(spec);
  else if (cfg.mode == "diagonal") r = diagonal_sweep(spec);
  else r = convexity_and_metric_audit(spec);
  write_report(cfg.output, r, cfg.provenance());

  log << r.kind << ": " << r.tables.size() << " tables\n";
  print_checks(log, r.checks);
  for (const auto& [k, v] : r.metrics) log << "  " << k << " = " << format_number(v) << "\n";
  for (const auto& f : r.flagged) log << "  flagged: " << f << "\n";
  for (const auto& c : r.checks)
    if (!c.passed && !c.advisory) out.fail(kExitAssertion, c.name);
  if (!r.flagged.empty()) out.fail(kExitSolver, r.flagged.front());
  return out;
}

inline Outcome run_check(const RunConfig& cfg, std::ostream& log) {
  Outcome out;
  const auto results = run_property_suite(cfg.check_samples, cfg.seed);
  Table t("check", "property", {}, {"samples", "worst", "tolerance", "passed"});
  char line[256];
  std::snprintf(line, sizeof line, "%-44s %8s %12s %10s  %s\n", "property", "samples", "worst", "tolerance", "result");
  log << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-44s %8d %12.3e %10.1e  %s\n", r.name.c_str(), r.samples, r.worst,
                  r.tolerance, r.passed() ? "pass" : "FAIL");
    log << line;
    t.rows.push_back(r.name);
    t.cells.push_back({static_cast<double>(r.samples), r.worst, r.tolerance, r.passed() ? 1.0 : 0.0});
    if (!r.passed()) out.fail(kExitAssertion, r.name);
  }
  write_text(cfg.output + "/check.csv", table_csv(t, cfg.provenance()));
  auto j = summary_head(cfg);
  j["passed"] = out.code == kExitOk;
  write_text(cfg.output + "/summary.json", j.dump(2) + "\n");
  return out;
}

}  // namespace cli_detail

/// Runs the pipeline selected by cfg.mode and writes its outputs. A FAILED
/// marker describing the failure is left next to partial outputs.
inline int dispatch(const RunConfig& cfg, std::ostream& log = std::cout) {
  namespace fs = std::filesystem;
  using namespace cli_detail;
  Outcome out;
  try {
    fs::create_directories(cfg.output);
    fs::remove(fs::path(cfg.output) / "FAILED");
  } catch (const std::exception& e) {
    log << "error: cannot prepare output directory '" << cfg.output << "': " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    if (cfg.mode == "nonlinear") out = run_nonlinear(cfg, log);
    else if (cfg.mode == "linear") out = run_linear(cfg, log);
    else if (cfg.mode == "check") out = run_check(cfg, log);
    else out = run_sweep(cfg, log);
  } catch (const AmplitudeTooLarge& e) {
    out.fail(kExitConfig, e.what());
  } catch (const InvalidArgument& e) {
    out.fail(kExitConfig, e.what());
  } catch (const Error& e) {
    out.fail(kExitSolver, e.what());
  }
  if (out.code != kExitOk) {
    write_text(cfg.output + "/FAILED", "exit " + std::to_string(out.code) + "\n" + out.reason + "\n");
    log << "FAILED (exit " << out.code << "): " << out.reason << "\n";
  }
  return out.code;
}

/// Entry point of the viscoflow executable.
inline int cli_main(int argc, char** argv, std::ostream& log = std::cout) {
  CLI::App app{"viscoflow: minimizing movements for nonlinear and linearized viscoelasticity"};
  app.require_subcommand(1);

  struct ConfigCommand {
    CLI::App* app = nullptr;
    std::string path;
    std::map<std::string, std::string> flags;
  };
  std::vector<ConfigCommand> commands;
  commands.reserve(3);
  auto add_config_command = [&](const char* name, const char* help) {
    ConfigCommand& c = commands.emplace_back();
    c.app = app.add_subcommand(name, help);
    c.app->add_option("config", c.path, "JSON configuration file (flat dotted keys)");
  };
  add_config_command("run", "run one trajectory (mode nonlinear or linear)");
  add_config_command("sweep", "run a sweep (mode sweep-delta, sweep-tau, diagonal or audit)");
  add_config_command("check", "run the constitutive and discrete property suite");
  for (auto& c : commands)
    for (const auto& k : config_schema()) {
      const std::string fallback = std::string(k.fallback) == "null" ? "" : std::string(" [default: ") + k.fallback + "]";
      c.app->add_option_function<std::string>(
          std::string("--") + k.key, [&c, key = std::string(k.key)](const std::string& v) { c.flags[key] = v; },
          std::string(k.help) + fallback);
    }

  CLI::App* plot = app.add_subcommand("plot", "draw a log-log SVG from CSV tables");
  std::vector<std::string> csvs;
  std::string svg_out = "plot.svg", title, xlabel = "x", ylabel = "y", by = "columns";
  plot->add_option("csv", csvs, "CSV tables written by run or sweep")->required();
  plot->add_option("-o,--output", svg_out, "SVG file to write [default: plot.svg]");
  plot->add_option("--title", title, "plot title");
  plot->add_option("--xlabel", xlabel, "x-axis label");
  plot->add_option("--ylabel", ylabel, "y-axis label");
  plot->add_option("--by", by, "series per 'columns' (x = row labels) or per 'rows' (x = column labels)")
      ->check(CLI::IsMember({"columns", "rows"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  if (plot->parsed()) {
    try {
      std::vector<Series> series;
      Provenance prov;
      for (const auto& path : csvs) {
        const Table t = read_table_csv(path);
        auto s = by == "rows" ? table_row_series(t, t.name + " ") : table_series(t, t.name + " ");
        series.insert(series.end(), s.begin(), s.end());
        std::ifstream in(path);
        std::string first;
        std::getline(in, first);
        const auto pos = first.find("config_hash=");
        if (pos != std::string::npos) prov.config_hash = first.substr(pos + 12);
      }
      write_text(svg_out, loglog_svg(series, title, xlabel, ylabel, prov));
      log << "wrote " << svg_out << "\n";
      return kExitOk;
    } catch (const Error& e) {
      log << "error: " << e.what() << "\n";
      return kExitConfig;
    }
  }

  for (auto& c : commands) {
    if (!c.app->parsed()) continue;
    RunConfig cfg;
    try {
      std::map<std::string, nlohmann::json> overrides;
      for (const auto& [k, v] : c.flags) overrides[k] = parse_flag_value(k, v);
      const std::string name = c.app->get_name();
      if (name == "check") overrides["mode"] = "check";
      cfg = load_config(c.path, overrides);
      const bool run_mode = cfg.mode == "nonlinear" || cfg.mode == "linear";
      if (name == "run" && !run_mode)
        throw ConfigError("field 'mode': 'run' needs nonlinear or linear, got '" + cfg.mode + "'");
      if (name == "sweep" && (run_mode || cfg.mode == "check"))
        throw ConfigError("field 'mode': 'sweep' needs sweep-delta, sweep-tau, diagonal or audit, got '" +
                          cfg.mode + "'");
    } catch (const Error& e) {
      log << "error: " << e.what() << "\n";
      return kExitConfig;
    }
    return dispatch(cfg, log);
  }
  return kExitConfig;
}

}  // namespace viscoflow
