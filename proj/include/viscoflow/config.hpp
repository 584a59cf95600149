#pragma once

// Run configurations: a JSON object with flat dotted keys, checked against a
// fixed schema. Flags of the same names override file values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "viscoflow/convergence_lab.hpp"
#include "viscoflow/error.hpp"
#include "viscoflow/initial_data.hpp"
#include "viscoflow/linear_flow.hpp"
#include "viscoflow/nonlinear_flow.hpp"
#include "viscoflow/report.hpp"

namespace viscoflow {

enum class KeyType { integer, number, string, number_list };

struct KeySpec {
  const char* key;
  KeyType type;
  const char* fallback;  // JSON text of the default
  const char* help;
};

inline const std::vector<KeySpec>& config_schema() {
  static const std::vector<KeySpec> schema{
      {"mode", KeyType::string, "\"nonlinear\"",
       "nonlinear | linear | sweep-delta | sweep-tau | diagonal | audit | check"},
      {"dim", KeyType::integer, "1", "spatial dimension d (1, 2 or 3)"},
      {"n", KeyType::integer, "64", "cells per axis (power of two, at least 8)"},
      {"material.name", KeyType::string, "\"reference\"", "constitutive bundle"},
      {"material.p", KeyType::number, "null", "second-gradient exponent p > d; default d + 1"},
      {"delta", KeyType::number, "0.05", "strain scale delta > 0"},
      {"alpha", KeyType::number, "0.5", "second-gradient scaling exponent, 0 < alpha < 1"},
      {"tau", KeyType::number, "0.05", "time step tau > 0"},
      {"T", KeyType::number, "1.0", "final time T > 0"},
      {"init.family", KeyType::string, "\"bump\"", "initial displacement: bump | sine | mode"},
      {"init.amplitude", KeyType::number, "0.1", "initial displacement amplitude (>= 0)"},
      {"init.mode", KeyType::integer, "1", "mode index for family 'mode'"},
      {"solver.kind", KeyType::string, "\"newton\"", "inner minimizer: newton | lbfgs"},
      {"solver.grad_tol", KeyType::number, "1e-10", "inner gradient tolerance, relative to 1 + |g0|"},
      {"solver.max_iters", KeyType::integer, "200", "inner iteration cap"},
      {"linear.cg_tol", KeyType::number, "1e-12", "relative residual of the linear solves"},
      {"sweep.deltas", KeyType::number_list, "[0.04, 0.02, 0.01, 0.005]", "delta list, strictly decreasing"},
      {"sweep.taus", KeyType::number_list, "[0.05]", "tau list, strictly decreasing"},
      {"sweep.times", KeyType::number_list, "[]", "comparison times in (0,T]; empty means T/4, T/2, T"},
      {"sweep.ref_refine", KeyType::integer, "8", "linear reference step is min tau / ref_refine"},
      {"audit.delta", KeyType::number, "0.01", "delta of the convexity audit"},
      {"audit.pairs", KeyType::integer, "500", "sampled pairs in the audit"},
      {"audit.escalation", KeyType::number_list, "[0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64, 1.28]",
       "deltas of the threshold search"},
      {"audit.escalation_pairs", KeyType::integer, "100", "pairs per escalation delta"},
      {"check.samples", KeyType::integer, "1000", "random samples per dimension in check mode"},
      {"seed", KeyType::integer, "1", "seed of every random generator"},
      {"workers", KeyType::integer, "0", "worker threads for sweeps; 0 means all cores"},
      {"output", KeyType::string, "\"\"", "output directory; default $VISCOFLOW_OUT/<mode> or viscoflow-out/<mode>"},
  };
  return schema;
}

inline const KeySpec* find_key(const std::string& key) {
  for (const auto& k : config_schema())
    if (key == k.key) return &k;
  return nullptr;
}

struct RunConfig {
  std::string mode;
  int dim = 1;
  int n = 64;
  double p = 2.0;
  double delta = 0.05, alpha = 0.5, tau = 0.05, T = 1.0;
  InitialData init;
  SolverKind solver = SolverKind::newton;
  double grad_tol = 1e-10;
  int max_iters = 200;
  double cg_tol = 1e-12;
  std::vector<double> deltas, taus, times;
  int ref_refine = 8;
  double audit_delta = 0.01;
  int audit_pairs = 500;
  std::vector<double> escalation;
  int escalation_pairs = 100;
  int check_samples = 1000;
  std::uint64_t seed = 1;
  int workers = 0;
  std::string output;

  nlohmann::ordered_json resolved;  // every key, defaults filled

  /// Hash of the settings that influence results (output and workers excluded).
  std::string hash() const {
    nlohmann::ordered_json j = resolved;
    j.erase("output");
    j.erase("workers");
    return hex64(fnv1a(j.dump()));
  }

  Provenance provenance() const { return {hash()}; }

  Grid grid() const { return Grid(dim, n); }
  MaterialBundle bundle() const { return reference_bundle(dim, p); }

  NonlinearConfig nonlinear() const {
    NonlinearConfig c;
    c.delta = delta;
    c.alpha = alpha;
    c.tau = tau;
    c.T = T;
    c.grad_tol = grad_tol;
    c.max_iters = max_iters;
    c.solver = solver;
    return c;
  }

  LinearConfig linear() const {
    LinearConfig c = LinearConfig::from_bundle(bundle(), grid(), tau, T, 1);
    c.cg_tol = cg_tol;
    return c;
  }

  SweepSpec sweep() const {
    SweepSpec s;
    s.dim = dim;
    s.n = n;
    s.p = p;
    s.alpha = alpha;
    s.T = T;
    s.deltas = deltas;
    s.taus = taus;
    s.times = times;
    s.init = init;
    s.grad_tol = grad_tol;
    s.max_iters = max_iters;
    s.workers = workers;
    s.seed = seed;
    s.ref_refine = ref_refine;
    s.audit_delta = audit_delta;
    s.audit_pairs = audit_pairs;
    s.escalation = escalation;
    s.escalation_pairs = escalation_pairs;
    return s;
  }
};

namespace detail {

inline void flatten(const nlohmann::json& j, const std::string& prefix, nlohmann::json& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object() && !find_key(key))
      flatten(*it, key, out);
    else
      out[key] = *it;
  }
}

[[noreturn]] inline void field_error(const std::string& source, const std::string& key, const std::string& msg) {
  throw ConfigError(source + ": field '" + key + "': " + msg);
}

inline std::string render(const nlohmann::json& v) { return v.dump(); }

}  // namespace detail

/// Converts a flag value to JSON according to the key's type.
inline nlohmann::json parse_flag_value(const std::string& key, const std::string& text) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError("unknown option '--" + key + "'");
  auto number = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw ConfigError("option '--" + key + "': '" + s + "' is not a number");
    return v;
  };
  switch (spec->type) {
    case KeyType::string:
      return text;
    case KeyType::integer: {
      const double v = number(text);
      if (v != std::floor(v)) throw ConfigError("option '--" + key + "': '" + text + "' is not an integer");
      return static_cast<std::int64_t>(v);
    }
    case KeyType::number:
      return number(text);
    case KeyType::number_list: {
      nlohmann::json arr = nlohmann::json::array();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) arr.push_back(number(item));
      return arr;
    }
  }
  return nullptr;
}

/// Validates a configuration object (file contents merged with overrides).
inline RunConfig parse_config(const nlohmann::json& input, const std::string& source = "config") {
  if (!input.is_object()) throw ConfigError(source + ": top level must be a JSON object");
  nlohmann::json flat = nlohmann::json::object();
  detail::flatten(input, "", flat);
  for (auto it = flat.begin(); it != flat.end(); ++it)
    if (!find_key(it.key())) detail::field_error(source, it.key(), "unknown field");

  RunConfig c;
  for (const auto& k : config_schema()) {
    nlohmann::json v = flat.contains(k.key) ? flat[k.key] : nlohmann::json::parse(k.fallback);
    const bool given = flat.contains(k.key);
    if (given || !v.is_null()) {
      switch (k.type) {
        case KeyType::string:
          if (!v.is_string()) detail::field_error(source, k.key, "expected a string, got " + detail::render(v));
          break;
        case KeyType::integer:
          if (v.is_number_float() && v.get<double>() == std::floor(v.get<double>()))
            v = static_cast<std::int64_t>(v.get<double>());
          if (!v.is_number_integer()) detail::field_error(source, k.key, "expected an integer, got " + detail::render(v));
          break;
        case KeyType::number:
          if (!v.is_number()) detail::field_error(source, k.key, "expected a number, got " + detail::render(v));
          break;
        case KeyType::number_list:
          if (!v.is_array()) detail::field_error(source, k.key, "expected a list of numbers, got " + detail::render(v));
          for (const auto& x : v)
            if (!x.is_number()) detail::field_error(source, k.key, "list entry " + detail::render(x) + " is not a number");
          break;
      }
    }
    c.resolved[k.key] = v;
  }

  auto& r = c.resolved;
  auto num = [&](const char* k) { return r[k].get<double>(); };
  auto integer = [&](const char* k) { return r[k].get<std::int64_t>(); };
  auto list = [&](const char* k) { return r[k].get<std::vector<double>>(); };
  auto bad = [&](const char* k, const std::string& msg) { detail::field_error(source, k, msg + " (got " + detail::render(r[k]) + ")"); };

  c.mode = r["mode"].get<std::string>();
  static const std::vector<std::string> modes{"nonlinear", "linear", "sweep-delta", "sweep-tau",
                                              "diagonal",  "audit",  "check"};
  if (std::find(modes.begin(), modes.end(), c.mode) == modes.end())
    bad("mode", "must be one of nonlinear, linear, sweep-delta, sweep-tau, diagonal, audit, check");

  if (integer("dim") < 1 || integer("dim") > 3) bad("dim", "must be 1, 2 or 3");
  c.dim = static_cast<int>(integer("dim"));
  {
    const auto n = integer("n");
    if (n < 8 || n > (1 << 20) || (n & (n - 1)) != 0) bad("n", "must be a power of two, at least 8");
    c.n = static_cast<int>(n);
  }
  if (r["material.name"] != "reference") bad("material.name", "only 'reference' is available");
  if (r["material.p"].is_null()) r["material.p"] = c.dim + 1.0;
  c.p = num("material.p");
  if (!(c.p > c.dim)) bad("material.p", "p > d is required (d = " + std::to_string(c.dim) + ")");

  auto positive = [&](const char* k) {
    const double v = num(k);
    if (!(v > 0.0) || !std::isfinite(v)) bad(k, "must be positive");
    return v;
  };
  c.delta = positive("delta");
  c.alpha = num("alpha");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) bad("alpha", "must satisfy 0 < alpha < 1");
  c.tau = positive("tau");
  c.T = positive("T");

  c.init.family = r["init.family"].get<std::string>();
  if (!InitialData::known_family(c.init.family)) bad("init.family", "must be bump, sine or mode");
  if (c.init.family == "mode" && c.dim != 1) bad("init.family", "family 'mode' requires dim = 1");
  c.init.amplitude = num("init.amplitude");
  if (!(c.init.amplitude >= 0.0) || !std::isfinite(c.init.amplitude)) bad("init.amplitude", "must be nonnegative");
  if (integer("init.mode") < 1) bad("init.mode", "must be positive");
  c.init.mode = static_cast<int>(integer("init.mode"));

  const std::string kind = r["solver.kind"].get<std::string>();
  if (kind != "newton" && kind != "lbfgs") bad("solver.kind", "must be newton or lbfgs");
  c.solver = kind == "newton" ? SolverKind::newton : SolverKind::lbfgs;
  c.grad_tol = positive("solver.grad_tol");
  if (integer("solver.max_iters") < 1) bad("solver.max_iters", "must be positive");
  c.max_iters = static_cast<int>(integer("solver.max_iters"));
  c.cg_tol = positive("linear.cg_tol");

  auto dyadic = [&](const char* k) {
    const auto v = list(k);
    if (v.empty()) bad(k, "must not be empty");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] > 0.0)) bad(k, "entries must be positive");
      if (i > 0 && !(v[i] < v[i - 1])) bad(k, "must be strictly decreasing");
    }
    return v;
  };
  c.deltas = dyadic("sweep.deltas");
  c.taus = dyadic("sweep.taus");
  c.times = list("sweep.times");
  for (double t : c.times)
    if (!(t > 0.0 && t <= c.T)) bad("sweep.times", "entries must lie in (0, T]");
  if (integer("sweep.ref_refine") < 1) bad("sweep.ref_refine", "must be positive");
  c.ref_refine = static_cast<int>(integer("sweep.ref_refine"));
  c.audit_delta = positive("audit.delta");
  if (integer("audit.pairs") < 1) bad("audit.pairs", "must be positive");
  c.audit_pairs = static_cast<int>(integer("audit.pairs"));
  c.escalation = list("audit.escalation");
  for (double d : c.escalation)
    if (!(d > 0.0)) bad("audit.escalation", "entries must be positive");
  if (integer("audit.escalation_pairs") < 0) bad("audit.escalation_pairs", "must be nonnegative");
  c.escalation_pairs = static_cast<int>(integer("audit.escalation_pairs"));
  if (integer("check.samples") < 1) bad("check.samples", "must be positive");
  c.check_samples = static_cast<int>(integer("check.samples"));
  if (integer("seed") < 0) bad("seed", "must be nonnegative");
  c.seed = static_cast<std::uint64_t>(integer("seed"));
  if (integer("workers") < 0) bad("workers", "must be nonnegative");
  c.workers = static_cast<int>(integer("workers"));

  c.output = r["output"].get<std::string>();
  if (c.output.empty()) {
    const char* root = std::getenv("VISCOFLOW_OUT");
    c.output = std::string(root && *root ? root : "viscoflow-out") + "/" + c.mode;
  }
  return c;
}

/// Reads a JSON file, applies overrides, validates.
inline RunConfig load_config(const std::string& path, const std::map<std::string, nlohmann::json>& overrides = {}) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open file");
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path + ": top level must be a JSON object");
    nlohmann::json flat = nlohmann::json::object();
    detail::flatten(j, "", flat);
    j = flat;
  }
  for (const auto& [k, v] : overrides) j[k] = v;
  return parse_config(j, path.empty() ? "flags" : path);
}

}  // namespace viscoflow
