#pragma once

// Parameter sweeps over delta and tau, plus a sampled convexity audit of the
// nonlinear functionals.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "viscoflow/discrete_space.hpp"
#include "viscoflow/error.hpp"
#include "viscoflow/initial_data.hpp"
#include "viscoflow/linear_flow.hpp"
#include "viscoflow/material.hpp"
#include "viscoflow/nonlinear_flow.hpp"

namespace viscoflow {

struct SweepSpec {
  int dim = 1;
  int n = 64;
  double p = 2.0;
  double alpha = 0.5;
  double T = 1.0;
  std::vector<double> deltas{0.04, 0.02, 0.01, 0.005};
  std::vector<double> taus{0.05};
  std::vector<double> times;  // empty means {T/4, T/2, T}
  InitialData init;
  double grad_tol = 1e-10;
  int max_iters = 200;
  int workers = 0;  // 0 means one per hardware thread
  std::uint64_t seed = 1;

  // Linear reference: Richardson extrapolation from tau_min / ref_refine.
  int ref_refine = 8;

  // Convexity audit.
  double audit_delta = 0.01;
  int audit_pairs = 500;
  std::vector<double> escalation{0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64, 1.28};
  int escalation_pairs = 100;

  std::vector<double> sample_times() const {
    if (!times.empty()) return times;
    return {T / 4.0, T / 2.0, T};
  }

  Grid grid() const { return Grid(dim, n); }
  MaterialBundle bundle() const { return reference_bundle(dim, p); }

  NonlinearConfig nonlinear(double delta, double tau) const {
    NonlinearConfig c;
    c.delta = delta;
    c.alpha = alpha;
    c.tau = tau;
    c.T = T;
    c.grad_tol = grad_tol;
    c.max_iters = max_iters;
    c.compute_slopes = false;
    return c;
  }

  LinearConfig linear(double tau) const {
    return LinearConfig::from_bundle(bundle(), grid(), tau, T, 2);
  }

  void validate() const {
    if (dim < 1 || dim > 3) throw InvalidArgument("dimension must be 1, 2 or 3");
    if (!(p > dim)) throw InvalidArgument("p must exceed the dimension");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0,1)");
    if (!(T > 0.0)) throw InvalidArgument("T must be positive");
    (void)grid();
    auto decreasing = [](const std::vector<double>& v, const char* what) {
      if (v.empty()) throw InvalidArgument(std::string(what) + " list is empty");
      for (double x : v)
        if (!(x > 0.0)) throw InvalidArgument(std::string(what) + " entries must be positive");
      for (std::size_t k = 1; k < v.size(); ++k)
        if (!(v[k] < v[k - 1])) throw InvalidArgument(std::string(what) + " list must be strictly decreasing");
    };
    decreasing(deltas, "delta");
    decreasing(taus, "tau");
    for (double t : sample_times())
      if (!(t > 0.0 && t <= T)) throw InvalidArgument("sample times must lie in (0,T]");
    if (!InitialData::known_family(init.family))
      throw InvalidArgument("unknown initial-data family '" + init.family + "'");
    if (!(init.amplitude >= 0.0)) throw InvalidArgument("amplitude must be nonnegative");
    if (ref_refine < 1) throw InvalidArgument("ref_refine must be positive");
    if (audit_pairs < 1 || escalation_pairs < 0) throw InvalidArgument("audit sample counts must be positive");
  }
};

/// A labelled matrix of numbers; one CSV per table.
struct Table {
  std::string name;
  std::string row_label;
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<std::vector<double>> cells;  // [row][col]

  Table() = default;
  Table(std::string nm, std::string rl, std::vector<std::string> r, std::vector<std::string> c)
      : name(std::move(nm)), row_label(std::move(rl)), rows(std::move(r)), cols(std::move(c)),
        cells(rows.size(), std::vector<double>(cols.size(), std::numeric_limits<double>::quiet_NaN())) {}
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
  bool advisory = false;  // reported, but does not fail the report
};

struct SweepReport {
  std::string kind;
  std::vector<Table> tables;
  std::vector<Check> checks;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> flagged;

  bool passed() const {
    for (const Check& c : checks)
      if (!c.passed && !c.advisory) return false;
    return flagged.empty();
  }

  const Table& table(const std::string& name) const {
    for (const Table& t : tables)
      if (t.name == name) return t;
    throw InvalidArgument("report has no table '" + name + "'");
  }

  double metric(const std::string& name) const {
    for (const auto& [k, v] : metrics)
      if (k == name) return v;
    throw InvalidArgument("report has no metric '" + name + "'");
  }

  const Check* check(const std::string& name) const {
    for (const Check& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// Shortest round-trip decimal form, used for labels and CSV cells.
inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Runs independent jobs on a pool and returns results in job order.
template <class R>
std::vector<R> run_jobs(const std::vector<std::function<R()>>& jobs, int workers) {
  std::vector<R> out(jobs.size());
  std::vector<std::exception_ptr> errs(jobs.size());
  unsigned hw = std::thread::hardware_concurrency();
  std::size_t nw = workers > 0 ? static_cast<std::size_t>(workers) : std::max(1u, hw);
  nw = std::max<std::size_t>(1, std::min(nw, jobs.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        out[k] = jobs[k]();
      } catch (...) {
        errs[k] = std::current_exception();
      }
    }
  };
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Least-squares slope of log y against log x over the positive finite pairs.
inline double fit_rate(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < x.size(); ++k)
    if (x[k] > 0 && y[k] > 0 && std::isfinite(y[k])) {
      lx.push_back(std::log(x[k]));
      ly.push_back(std::log(y[k]));
    }
  if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    mx += lx[k] / m;
    my += ly[k] / m;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  return sxy / sxx;
}

/// Strict decrease; an all-zero sequence counts as the degenerate pass.
inline bool strictly_decreasing(const std::vector<double>& v) {
  if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) return true;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] < v[k - 1])) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Initial data and single runs

struct PreparedData {
  Field y0;
  Field u0;
  double energy = 0.0;  // phi_delta(y0)
  double hyper = 0.0;   // delta^-(p alpha) int P(grad^2 y0)
  double linear_energy = 0.0;
};

inline PreparedData prepare_initial_data(const SweepSpec& spec, double delta) {
  spec.validate();
  auto [y0, u0] = initial_pair(spec.grid(), spec.init, delta, 2);
  PreparedData d{y0, u0};
  const auto terms = energy_terms(spec.nonlinear(delta, spec.taus.front()), spec.bundle(), y0);
  d.energy = terms.total();
  d.hyper = terms.hyper;
  d.linear_energy = energy_phi0(spec.linear(spec.taus.front()), u0);
  return d;
}

inline Trajectory nonlinear_run(const SweepSpec& spec, double delta, double tau, bool slopes = false,
                                bool extrapolate_guess = false) {
  NonlinearConfig c = spec.nonlinear(delta, tau);
  c.compute_slopes = slopes;
  c.extrapolate_guess = extrapolate_guess;
  const PreparedData d = prepare_initial_data(spec, delta);
  return run_minimizing_movement(c, spec.bundle(), d.y0);
}

inline LinearTrajectory linear_run(const SweepSpec& spec, double tau) {
  const Field u0 = initial_displacement(spec.grid(), spec.init, 2);
  return run_linear_flow(spec.linear(tau), u0);
}

/// Rescaled displacement delta^-1 (Y(t) - id), or nullopt-like NaN marker.
inline const Field* state_at(const Trajectory& tr, double t) {
  if (tr.failed) return nullptr;
  return &tr.at(t);
}

/// Linear flow at the sample times by Richardson extrapolation in tau.
struct LinearReference {
  double tau = 0.0;
  std::vector<double> times;
  std::vector<Field> u;
  double slope0 = 0.0;                  // |d phi0|(u0)
  std::vector<double> correction;       // D0 size of the extrapolation correction
};

inline LinearReference linear_reference(const SweepSpec& spec) {
  const double tau = spec.taus.back() / spec.ref_refine;
  LinearReference ref;
  ref.tau = tau;
  ref.times = spec.sample_times();
  for (double t : ref.times) {
    const double k = t / tau;
    if (std::fabs(k - std::round(k)) > 1e-9 * k)
      throw InvalidArgument("sample time " + format_number(t) + " is not a multiple of the reference step " +
                            format_number(tau));
  }
  std::vector<std::function<LinearTrajectory()>> jobs{[&] { return linear_run(spec, tau); },
                                                      [&] { return linear_run(spec, 2.0 * tau); }};
  const auto runs = run_jobs(jobs, spec.workers);
  const LinearConfig lc = spec.linear(tau);
  ref.slope0 = linear_slope(lc, runs[0].fields.front());
  for (double t : ref.times) {
    const Field& fine = runs[0].at(t);
    const Field& coarse = runs[1].at(t);
    ref.u.push_back(combine(2.0, fine, -1.0, coarse));
    ref.correction.push_back(dissipation_D0(lc, ref.u.back(), fine));
  }
  return ref;
}

namespace detail {

inline std::vector<std::string> labels(const std::vector<double>& v) {
  std::vector<std::string> out;
  for (double x : v) out.push_back(format_number(x));
  return out;
}

inline std::string time_tag(double t) { return "t" + format_number(t); }

/// || delta^-1 (Y - id) - U ||_{H1}
inline double rescaled_error(const Field& y, double delta, const Field& u) {
  return h1_distance(to_displacement(y, delta), u);
}

inline void flag(SweepReport& r, const std::string& what, const std::string& msg) {
  r.flagged.push_back(what + ": " + msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sweeps

/// Nonlinear runs at every delta against the linear run, for each tau.
inline SweepReport sweep_delta_fixed_tau(const SweepSpec& spec) {
  spec.validate();
  SweepReport rep;
  rep.kind = "sweep-delta";
  const auto& ds = spec.deltas;
  const auto& ts = spec.taus;
  const auto times = spec.sample_times();

  for (double d : ds) {
    const PreparedData p = prepare_initial_data(spec, d);
    rep.metrics.emplace_back("initial_energy delta=" + format_number(d), p.energy);
    rep.metrics.emplace_back("initial_hyper delta=" + format_number(d), p.hyper);
  }
  const double lin0 = prepare_initial_data(spec, ds.front()).linear_energy;
  rep.metrics.emplace_back("initial_linear_energy", lin0);
  {
    // Well-prepared data: bounded energies and a vanishing second-gradient part.
    std::vector<double> energy, hyper;
    for (double d : ds) {
      const PreparedData p = prepare_initial_data(spec, d);
      energy.push_back(p.energy);
      hyper.push_back(p.hyper);
    }
    const bool ok = std::all_of(energy.begin(), energy.end(), [](double e) { return std::isfinite(e); }) &&
                    strictly_decreasing(hyper);
    rep.checks.push_back({"initial data well prepared", ok,
                          "sup phi_delta(y0) = " + format_number(*std::max_element(energy.begin(), energy.end()))});
  }

  std::vector<std::function<Trajectory()>> nl_jobs;
  for (double tau : ts)
    for (double d : ds) nl_jobs.push_back([&spec, d, tau] { return nonlinear_run(spec, d, tau); });
  std::vector<std::function<LinearTrajectory()>> lin_jobs;
  for (double tau : ts) lin_jobs.push_back([&spec, tau] { return linear_run(spec, tau); });
  const auto nl = run_jobs(nl_jobs, spec.workers);
  const auto lin = run_jobs(lin_jobs, spec.workers);
  auto run_of = [&](std::size_t i, std::size_t j) -> const Trajectory& { return nl[j * ds.size() + i]; };

  for (std::size_t j = 0; j < ts.size(); ++j)
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (run_of(i, j).failed)
        detail::flag(rep, "delta=" + format_number(ds[i]) + " tau=" + format_number(ts[j]), run_of(i, j).message);

  for (double t : times) {
    Table tab("errors_" + detail::time_tag(t), "delta", detail::labels(ds), detail::labels(ts));
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t j = 0; j < ts.size(); ++j)
        if (const Field* y = state_at(run_of(i, j), t))
          tab.cells[i][j] = detail::rescaled_error(*y, ds[i], lin[j].at(t));
    for (std::size_t j = 0; j < ts.size(); ++j) {
      std::vector<double> col;
      for (std::size_t i = 0; i < ds.size(); ++i) col.push_back(tab.cells[i][j]);
      const double rate = fit_rate(ds, col);
      const std::string tag = "tau=" + format_number(ts[j]) + " t=" + format_number(t);
      rep.metrics.emplace_back("rate " + tag, rate);
      rep.checks.push_back({"decreasing in delta " + tag, strictly_decreasing(col),
                            "fitted rate " + format_number(rate)});
    }
    rep.tables.push_back(std::move(tab));
  }

  // Ledger energies: nonlinear against linear, with C fitted at the largest delta.
  Table gap("energy_gap", "delta", detail::labels(ds), detail::labels(ts));
  for (std::size_t j = 0; j < ts.size(); ++j) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const Trajectory& tr = run_of(i, j);
      if (tr.failed) continue;
      double g = 0.0;
      for (std::size_t k = 0; k < tr.ledger.size(); ++k)
        g = std::fmax(g, std::fabs(tr.ledger[k].energy - lin[j].ledger[k].energy));
      gap.cells[i][j] = g;
    }
    const double c = gap.cells.front()[j] / std::pow(ds.front(), spec.alpha);
    const double last = gap.cells.back()[j];
    const double band = c * std::pow(ds.back(), spec.alpha);
    rep.metrics.emplace_back("energy_band_C tau=" + format_number(ts[j]), c);
    rep.checks.push_back({"energy cross-check tau=" + format_number(ts[j]), last <= band,
                          "gap " + format_number(last) + " vs band " + format_number(band)});
  }
  rep.tables.push_back(std::move(gap));

  // The limit is assumed unique: inner solves started from an extrapolated
  // guess must land on the same trajectory at the largest delta.
  {
    const Trajectory alt = nonlinear_run(spec, ds.front(), ts.front(), false, true);
    double sep = std::numeric_limits<double>::quiet_NaN();
    if (!alt.failed && !run_of(0, 0).failed) {
      sep = 0.0;
      for (double t : times)
        sep = std::fmax(sep, h1_distance(to_displacement(alt.at(t), ds.front()),
                                         to_displacement(run_of(0, 0).at(t), ds.front())));
    }
    rep.metrics.emplace_back("solver_separation", sep);
    Check c{"second solver agrees", sep <= 1e-3, "H1 separation " + format_number(sep), true};
    rep.checks.push_back(c);
  }
  return rep;
}

/// Dyadic tau refinement at each fixed delta.
inline SweepReport sweep_tau_fixed_delta(const SweepSpec& spec) {
  spec.validate();
  SweepReport rep;
  rep.kind = "sweep-tau";
  const auto& ds = spec.deltas;
  const auto& ts = spec.taus;
  const auto times = spec.sample_times();

  std::vector<std::function<Trajectory()>> nl_jobs;
  for (double d : ds)
    for (double tau : ts) nl_jobs.push_back([&spec, d, tau] { return nonlinear_run(spec, d, tau, true); });
  std::vector<std::function<LinearTrajectory()>> lin_jobs;
  for (double tau : ts) lin_jobs.push_back([&spec, tau] { return linear_run(spec, tau); });
  const auto nl = run_jobs(nl_jobs, spec.workers);
  const auto lin = run_jobs(lin_jobs, spec.workers);
  auto run_of = [&](std::size_t i, std::size_t j) -> const Trajectory& { return nl[i * ts.size() + j]; };

  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < ts.size(); ++j)
      if (run_of(i, j).failed)
        detail::flag(rep, "delta=" + format_number(ds[i]) + " tau=" + format_number(ts[j]), run_of(i, j).message);

  Table res("residual", "delta", detail::labels(ds), detail::labels(ts));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ts.size(); ++j)
      if (!run_of(i, j).failed) res.cells[i][j] = energy_identity_residual(run_of(i, j).ledger, ts[j]);
    double worst_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j < ts.size(); ++j)
      worst_ratio = std::fmin(worst_ratio, res.cells[i][j - 1] / res.cells[i][j]);
    const std::string tag = "delta=" + format_number(ds[i]);
    rep.metrics.emplace_back("residual_rate " + tag, fit_rate(ts, res.cells[i]));
    rep.metrics.emplace_back("residual_min_ratio " + tag, worst_ratio);
    rep.checks.push_back({"residual decreasing " + tag, strictly_decreasing(res.cells[i]),
                          "smallest ratio per halving " + format_number(worst_ratio)});
  }
  rep.tables.push_back(std::move(res));

  if (ts.size() > 1) {
    std::vector<std::string> cols = detail::labels(ts);
    cols.erase(cols.begin());
    for (double t : times) {
      Table cau("cauchy_" + detail::time_tag(t), "delta", detail::labels(ds), cols);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 1; j < ts.size(); ++j) {
          const Field* a = state_at(run_of(i, j - 1), t);
          const Field* b = state_at(run_of(i, j), t);
          if (a && b) cau.cells[i][j - 1] = h1_distance(*a, *b) / ds[i];
        }
        rep.checks.push_back({"cauchy decreasing delta=" + format_number(ds[i]) + " t=" + format_number(t),
                              strictly_decreasing(cau.cells[i]), ""});
      }
      rep.tables.push_back(std::move(cau));
    }
  }

  // Linear analogue: D0(U_tau(t), u(t))^2 <= 1/2 tau^2 |d phi0|^2(u0).
  const LinearReference ref = linear_reference(spec);
  const LinearConfig lc = spec.linear(ts.front());
  for (std::size_t m = 0; m < times.size(); ++m) {
    Table lb("linear_bound_" + detail::time_tag(times[m]), "quantity", {"dist2", "bound"}, detail::labels(ts));
    bool ok = true;
    for (std::size_t j = 0; j < ts.size(); ++j) {
      const double dist = dissipation_D0(lc, lin[j].at(times[m]), ref.u[m]);
      const double bound = std::sqrt(0.5) * ts[j] * ref.slope0 + ref.correction[m];
      lb.cells[0][j] = dist * dist;
      lb.cells[1][j] = bound * bound;
      ok = ok && dist <= bound;
    }
    rep.checks.push_back({"linear step-size bound t=" + format_number(times[m]), ok, ""});
    rep.tables.push_back(std::move(lb));
  }
  rep.metrics.emplace_back("linear_reference_tau", ref.tau);
  rep.metrics.emplace_back("linear_initial_slope", ref.slope0);
  return rep;
}

/// Paired (delta_k, tau_k) refinement against the extrapolated linear flow,
/// together with the three other limbs of the commutativity diagram.
inline SweepReport diagonal_sweep(const SweepSpec& spec) {
  spec.validate();
  const auto& ds = spec.deltas;
  const auto& ts = spec.taus;
  if (ds.size() != ts.size()) throw InvalidArgument("diagonal sweep needs equally long delta and tau lists");
  SweepReport rep;
  rep.kind = "diagonal";
  const auto times = spec.sample_times();
  const std::size_t K = ds.size();
  const double tau_fine = ts.back() / 2.0;

  // Runs: diagonal (d_k, t_k), top limb (d_k, t_0), left limb (d_0, t_k) and
  // its fine reference (d_0, tau_fine).
  std::vector<std::function<Trajectory()>> nl_jobs;
  for (std::size_t k = 0; k < K; ++k) nl_jobs.push_back([&, k] { return nonlinear_run(spec, ds[k], ts[k]); });
  for (std::size_t k = 1; k < K; ++k) nl_jobs.push_back([&, k] { return nonlinear_run(spec, ds[k], ts[0]); });
  for (std::size_t k = 1; k < K; ++k) nl_jobs.push_back([&, k] { return nonlinear_run(spec, ds[0], ts[k]); });
  nl_jobs.push_back([&] { return nonlinear_run(spec, ds[0], tau_fine); });
  std::vector<std::function<LinearTrajectory()>> lin_jobs;
  for (double tau : ts) lin_jobs.push_back([&spec, tau] { return linear_run(spec, tau); });
  const auto nl = run_jobs(nl_jobs, spec.workers);
  const auto lin = run_jobs(lin_jobs, spec.workers);
  const LinearReference ref = linear_reference(spec);

  auto diag = [&](std::size_t k) -> const Trajectory& { return nl[k]; };
  auto top = [&](std::size_t k) -> const Trajectory& { return k == 0 ? nl[0] : nl[K + k - 1]; };
  auto left = [&](std::size_t k) -> const Trajectory& { return k == 0 ? nl[0] : nl[2 * K - 2 + k]; };
  const Trajectory& left_ref = nl.back();
  for (const Trajectory& tr : nl)
    if (tr.failed)
      detail::flag(rep, "delta=" + format_number(tr.config.delta) + " tau=" + format_number(tr.config.tau),
                   tr.message);

  std::vector<std::string> tcols;
  for (double t : times) tcols.push_back(format_number(t));
  Table limb_delta("limb_delta", "delta", detail::labels(ds), tcols);
  Table limb_tau_lin("limb_tau_linear", "tau", detail::labels(ts), tcols);
  Table limb_tau_nl("limb_tau_nonlinear", "tau", detail::labels(ts), tcols);
  std::vector<std::string> pair_rows, dcols;
  for (std::size_t k = 0; k < K; ++k) pair_rows.push_back(format_number(ds[k]) + ":" + format_number(ts[k]));
  for (double t : times)
    for (const char* q : {"diag", "delta_limb", "tau_limb"}) dcols.push_back(std::string(q) + "@" + format_number(t));
  Table diagonal("diagonal", "delta:tau", pair_rows, dcols);

  for (std::size_t m = 0; m < times.size(); ++m) {
    const double t = times[m];
    for (std::size_t k = 0; k < K; ++k) {
      if (const Field* y = state_at(top(k), t)) limb_delta.cells[k][m] = detail::rescaled_error(*y, ds[k], lin[0].at(t));
      limb_tau_lin.cells[k][m] = h1_distance(lin[k].at(t), ref.u[m]);
      const Field* a = state_at(left(k), t);
      const Field* b = state_at(left_ref, t);
      if (a && b) limb_tau_nl.cells[k][m] = h1_distance(*a, *b) / ds[0];
      if (const Field* y = state_at(diag(k), t)) {
        const Field u = to_displacement(*y, ds[k]);
        diagonal.cells[k][3 * m] = h1_distance(u, ref.u[m]);
        diagonal.cells[k][3 * m + 1] = h1_distance(u, lin[k].at(t));
        diagonal.cells[k][3 * m + 2] = limb_tau_lin.cells[k][m];
      }
    }
  }

  for (std::size_t m = 0; m < times.size(); ++m) {
    const std::string tag = "t=" + format_number(times[m]);
    std::vector<double> e, ld, ll, ln;
    for (std::size_t k = 0; k < K; ++k) {
      e.push_back(diagonal.cells[k][3 * m]);
      ld.push_back(limb_delta.cells[k][m]);
      ll.push_back(limb_tau_lin.cells[k][m]);
      ln.push_back(limb_tau_nl.cells[k][m]);
    }
    rep.checks.push_back({"diagonal decreasing " + tag, strictly_decreasing(e), ""});
    rep.checks.push_back({"delta limb decreasing " + tag, strictly_decreasing(ld), ""});
    rep.checks.push_back({"linear tau limb decreasing " + tag, strictly_decreasing(ll), ""});
    rep.checks.push_back({"nonlinear tau limb decreasing " + tag, strictly_decreasing(ln), ""});
    bool closed = true;
    double worst = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double sum = diagonal.cells[k][3 * m + 1] + diagonal.cells[k][3 * m + 2];
      const double gap = std::fabs(e[k] - sum);
      worst = std::fmax(worst, gap - sum);
      closed = closed && std::isfinite(gap) && e[k] <= sum * (1 + 1e-12) + 1e-15 && gap <= sum * (1 + 1e-12) + 1e-15;
    }
    rep.checks.push_back({"triangle closure " + tag, closed, "max(gap - limb sum) " + format_number(worst)});
    rep.metrics.emplace_back("diagonal_rate " + tag, fit_rate(ds, e));
  }
  rep.tables.push_back(std::move(limb_delta));
  rep.tables.push_back(std::move(limb_tau_lin));
  rep.tables.push_back(std::move(limb_tau_nl));
  rep.tables.push_back(std::move(diagonal));
  rep.metrics.emplace_back("linear_reference_tau", ref.tau);
  return rep;
}

// ---------------------------------------------------------------------------
// Convexity and metric audit

struct AuditSample {
  Field y0, y1;
};

/// Random clamped deformations id + delta u with |u| <= amplitude, u drawn
/// from the test dictionary with uniform coefficients.
inline std::vector<AuditSample> audit_samples(const SweepSpec& spec, double delta, int count,
                                              std::uint64_t stream) {
  const Grid g = spec.grid();
  const auto dict = test_dictionary(g, 2);
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + stream);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  auto draw = [&] {
    std::vector<double> c(dict.size());
    double l1 = 0.0;
    for (double& x : c) {
      x = coef(rng);
      l1 += std::fabs(x);
    }
    Field u = Field::zero(g, 2);
    for (std::size_t m = 0; m < dict.size(); ++m) u = combine(1.0, u, spec.init.amplitude * c[m] / l1, dict[m]);
    return to_deformation(u, delta, 2);
  };
  std::vector<AuditSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Field a = draw();
    Field b = draw();
    out.push_back({std::move(a), std::move(b)});
  }
  return out;
}

struct AuditCounts {
  int samples = 0;
  int inadmissible = 0;
  int convexity = 0;   // (a)
  int triangle = 0;    // (c)
  std::vector<double> geodesic_excess;  // (D_s^2 / (s^2 D_1^2) - 1) / |grad y1 - grad y0|_inf
};

inline AuditCounts audit_pairs(const SweepSpec& spec, double delta, const std::vector<AuditSample>& pairs) {
  const MaterialBundle b = spec.bundle();
  NonlinearConfig cfg = spec.nonlinear(delta, spec.taus.front());
  const NonlinearModel m(cfg, b, spec.grid(), 2);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  AuditCounts c;
  for (const auto& pr : pairs) {
    ++c.samples;
    const auto k0 = m.kinematics(pr.y0);
    const auto k1 = m.kinematics(pr.y1);
    if (!NonlinearModel::admissible(k0) || !NonlinearModel::admissible(k1)) {
      ++c.inadmissible;
      continue;
    }
    const double e0 = m.energy(k0), e1 = m.energy(k1);
    const double d01 = m.dist_sq(k0.F, k1.F);
    double sup = 0.0;
    for (std::size_t q = 0; q < k0.F.size(); ++q) sup = std::fmax(sup, norm(k1.F[q] - k0.F[q]));
    bool conv_ok = true, tri_ok = true;
    for (double s : {0.25, 0.5, 0.75}) {
      const auto ks = m.kinematics(combine(1.0 - s, pr.y0, s, pr.y1));
      const double es = m.energy(ks);
      const double rhs = (1.0 - s) * e0 + s * e1;
      if (!(es <= rhs + 64 * eps * (std::fabs(e0) + std::fabs(e1)))) conv_ok = false;
      const double ds0 = m.dist_sq(ks.F, k0.F);
      const double ds1 = m.dist_sq(ks.F, k1.F);
      if (!(std::sqrt(d01) <= (std::sqrt(ds0) + std::sqrt(ds1)) * (1 + 64 * eps))) tri_ok = false;
      if (d01 > 0.0 && sup > 0.0) c.geodesic_excess.push_back((ds0 / (s * s * d01) - 1.0) / sup);
    }
    if (!conv_ok) ++c.convexity;
    if (!tri_ok) ++c.triangle;
  }
  return c;
}

inline SweepReport convexity_and_metric_audit(const SweepSpec& spec) {
  spec.validate();
  SweepReport rep;
  rep.kind = "audit";
  const auto pairs = audit_samples(spec, spec.audit_delta, spec.audit_pairs, 0);
  const AuditCounts c = audit_pairs(spec, spec.audit_delta, pairs);

  // (b): fit C on the first half of the excess ratios, validate on the rest.
  const std::size_t half = c.geodesic_excess.size() / 2;
  double fitted = 0.0;
  for (std::size_t k = 0; k < half; ++k) fitted = std::fmax(fitted, c.geodesic_excess[k]);
  int geo_viol = 0;
  for (std::size_t k = half; k < c.geodesic_excess.size(); ++k)
    if (c.geodesic_excess[k] > 2.0 * fitted + 1e-9) ++geo_viol;
  const int geo_n = static_cast<int>(c.geodesic_excess.size() - half);
  const int valid = c.samples - c.inadmissible;

  Table t("audit", "check", {"convexity", "geodesic", "triangle"}, {"violations", "samples", "fraction"});
  auto row = [&](std::size_t r, int viol, int n) {
    t.cells[r] = {static_cast<double>(viol), static_cast<double>(n), n > 0 ? static_cast<double>(viol) / n : 0.0};
  };
  row(0, c.convexity, valid);
  row(1, geo_viol, geo_n);
  row(2, c.triangle, valid);
  rep.tables.push_back(std::move(t));
  rep.metrics.emplace_back("audit_delta", spec.audit_delta);
  rep.metrics.emplace_back("admissible_pairs", valid);
  rep.metrics.emplace_back("geodesic_C", fitted);
  rep.checks.push_back({"convexity violations", c.convexity == 0,
                        format_number(c.convexity) + " of " + format_number(valid)});
  rep.checks.push_back({"geodesic bound", geo_viol == 0, "C = " + format_number(fitted)});
  rep.checks.push_back({"triangle inequality", c.triangle == 0, ""});
  rep.checks.push_back({"admissible samples", valid > 0, ""});

  // Escalation: first tested delta at which convexity fails.
  Table esc("escalation", "delta", detail::labels(spec.escalation), {"pairs", "inadmissible", "violations"});
  double threshold = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < spec.escalation.size(); ++k) {
    const double d = spec.escalation[k];
    const auto s = audit_samples(spec, d, spec.escalation_pairs, k + 1);
    const AuditCounts ck = audit_pairs(spec, d, s);
    esc.cells[k] = {static_cast<double>(ck.samples), static_cast<double>(ck.inadmissible),
                    static_cast<double>(ck.convexity)};
    if (ck.convexity > 0 && !std::isfinite(threshold)) threshold = d;
  }
  rep.tables.push_back(std::move(esc));
  rep.metrics.emplace_back("convexity_threshold_delta", threshold);
  return rep;
}

}  // namespace viscoflow
