// Acceptance run: one line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <viscoflow/cli.hpp>
#include <viscoflow/viscoflow.hpp>

#include "oracles.hpp"

using namespace viscoflow;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

int failures = 0;

void criterion(int id, const std::string& title, double budget_s, const std::function<void(Verdict&)>& body) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    body(v);
  } catch (const std::exception& e) {
    v.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  v.require(secs < budget_s, "runtime " + num(secs) + " s over budget " + num(budget_s) + " s");
  if (!v.passed) ++failures;
  std::printf("[%s] C%-2d %s (%.2f s): %s\n", v.passed ? "PASS" : "FAIL", id, title.c_str(), secs, v.detail.c_str());
  std::fflush(stdout);
}

Field sine_mode(const Grid& g, int k, double a, int clamp) {
  return Field::from_function(g, FieldKind::displacement, clamp, [&](const auto& x) {
    return std::array<double, 3>{a * std::sin(k * oracle::pi() * x[0]), 0, 0};
  });
}

// Nodal least-squares projection onto sin(k pi x), written out here so the
// check does not go through the library's projection.
double project_mode(const Field& u, int k) {
  const Grid& g = u.grid();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const double s = std::sin(k * oracle::pi() * g.coord(static_cast<int>(i)));
    num += s * u.at(i, 0);
    den += s * s;
  }
  return num / den;
}

bool decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

int main() {
  const std::string config_dir = VISCOFLOW_CONFIG_DIR;

  criterion(1, "constitutive property suite", 10.0, [](Verdict& v) {
    for (int d = 1; d <= 2; ++d) {
      std::mt19937_64 rng(100 + d);
      const auto b = reference_bundle(d, d + 1.0);
      double frame = 0, grad = 0;
      for (int s = 0; s < 1000; ++s) {
        const Mat q1 = oracle::givens_rotation(d, rng), q2 = oracle::givens_rotation(d, rng);
        const Mat f = oracle::random_near_identity(d, rng), f2 = oracle::random_near_identity(d, rng);
        const Ten3 g = oracle::random_ten3(d, rng);
        frame = std::fmax(frame, oracle::rel_err(b.W(q1 * f), b.W(f)));
        frame = std::fmax(frame, oracle::rel_err(b.P(q1 * g), b.P(g)));
        frame = std::fmax(frame, oracle::rel_err(b.D2(q1 * f, q2 * f2), b.D2(f, f2)));
        const std::function<double(const Mat&)> w = [&](const Mat& x) { return b.W(x); };
        const std::function<double(const Ten3&)> p = [&](const Ten3& x) { return b.P(x); };
        const std::function<double(const Mat&)> d2 = [&](const Mat& x) { return b.D2(x, f2); };
        grad = std::fmax(grad, oracle::max_rel_err(b.grad_W(f), oracle::fd_gradient(w, f, 1e-5)));
        grad = std::fmax(grad, oracle::max_rel_err(b.grad_P(g), oracle::fd_gradient(p, g, 1e-5)));
        grad = std::fmax(grad, oracle::max_rel_err(b.grad1_D2(f, f2), oracle::fd_gradient(d2, f, 1e-5)));
      }
      v.require(frame <= 1e-12, "d=" + std::to_string(d) + " frame indifference " + num(frame));
      v.require(grad < 1e-6, "d=" + std::to_string(d) + " gradient error " + num(grad));
      v.note("d=" + std::to_string(d) + " frame " + num(frame) + ", grad " + num(grad));
    }
  });

  criterion(2, "Hessian identities of the distance", 10.0, [](Verdict& v) {
    for (int d = 1; d <= 2; ++d) {
      std::mt19937_64 rng(200 + d);
      const auto b = reference_bundle(d, d + 1.0);
      const double h = 1e-4;
      double reduced = 0, skew_part = 0;
      for (int s = 0; s < 50; ++s) {
        // Second derivative of t -> D^2(Y + tA, Y + tB) at 0 against the
        // F1F1 block on A - B.
        const Mat y = oracle::random_near_identity(d, rng, 0.2);
        const Mat a = oracle::random_mat(d, rng), c = oracle::random_mat(d, rng);
        auto g = [&](double t) { return b.D2(y + t * a, y + t * c); };
        const double fd = (g(h) - 2 * g(0) + g(-h)) / (h * h);
        const Mat diff = a - c;
        reduced = std::fmax(reduced, oracle::rel_err(fd, ddot(diff, b.hess11_D2(y, y, diff))));
        const Mat k = oracle::random_mat(d, rng);
        const Mat sk = 0.5 * (k - k.transpose());
        skew_part = std::fmax(skew_part, norm(b.Cd.apply(sk)));
      }
      v.require(reduced <= 1e-5, "d=" + std::to_string(d) + " reduced form " + num(reduced));
      v.require(skew_part <= 1e-12, "d=" + std::to_string(d) + " C_D on skew " + num(skew_part));
      v.note("d=" + std::to_string(d) + " reduced " + num(reduced) + ", skew " + num(skew_part));
    }
  });

  criterion(3, "R from D limit", 5.0, [](Verdict& v) {
    const std::vector<double> eps{1e-2, 1e-3, 1e-4};
    for (int d = 1; d <= 2; ++d) {
      std::mt19937_64 rng(300 + d);
      const auto b = reference_bundle(d, d + 1.0);
      std::vector<double> sup(3, 0.0);
      bool each = true;
      for (int s = 0; s < 100; ++s) {
        const Mat f = oracle::random_near_identity(d, rng);
        const Mat fd = oracle::random_mat(d, rng);
        // R(F, Fdot) = 1/2 |Fdot^T F + F^T Fdot|^2 for the reference bundle.
        const Mat c = fd.transpose() * f + f.transpose() * fd;
        const double r = 0.5 * ddot(c, c);
        std::vector<double> gap;
        for (std::size_t e = 0; e < 3; ++e) {
          gap.push_back(std::fabs(r - b.D2(f + eps[e] * fd, f) / (2 * eps[e] * eps[e])));
          sup[e] = std::fmax(sup[e], gap.back());
        }
        each = each && decreasing(gap);
      }
      const double rate = oracle::loglog_slope(eps, sup);
      v.require(each, "d=" + std::to_string(d) + " gap not decreasing on some sample");
      v.require(std::fabs(rate - 1.0) <= 0.1, "d=" + std::to_string(d) + " order " + num(rate));
      v.note("d=" + std::to_string(d) + " order " + num(rate));
    }
  });

  criterion(4, "linear modal oracle", 30.0, [](Verdict& v) {
    const Grid g(1, 128);
    const auto b = reference_bundle(1, 2.0);
    const double a0 = 0.1;
    std::vector<double> errs;
    for (double tau : {0.1, 0.05, 0.025, 0.0125}) {
      const auto c = LinearConfig::from_bundle(b, g, tau, 1.0);
      const auto tr = run_linear_flow(c, sine_mode(g, 1, a0, c.clamp));
      double disc = 0, cont = 0;
      for (std::size_t n = 0; n < tr.fields.size(); ++n) {
        const double amp = project_mode(tr.fields[n], 1);
        const double t = n * tau;
        disc = std::fmax(disc, std::fabs(amp - a0 * std::pow(1.0 + tau / 4.0, -static_cast<double>(n))));
        cont = std::fmax(cont, std::fabs(amp - a0 * std::exp(-t / 4.0)));
      }
      v.require(disc <= 1e-9, "tau=" + num(tau) + " discrete deviation " + num(disc));
      errs.push_back(cont);
    }
    std::string ratios;
    for (std::size_t i = 1; i < errs.size(); ++i) {
      const double r = errs[i - 1] / errs[i];
      v.require(r >= 1.7 && r <= 2.3, "ratio " + num(r));
      ratios += (i > 1 ? " " : "") + num(r);
    }
    v.note("halving ratios " + ratios);
  });

  criterion(5, "linear slope and energy identity", 30.0, [](Verdict& v) {
    const Grid g(1, 128);
    const auto b = reference_bundle(1, 2.0);
    const double a = 0.1, pi = oracle::pi();
    const auto c = LinearConfig::from_bundle(b, g, 1e-3, 1.0);
    const Field u = sine_mode(g, 1, a, c.clamp);
    const double slope = linear_slope(c, u), exact = a * pi / (2 * std::sqrt(2.0));
    v.require(std::fabs(slope / exact - 1.0) <= 0.01, "slope " + num(slope) + " vs " + num(exact));
    const auto tr = run_linear_flow(c, u);
    // phi(T) - phi(0) + int |u'| |d phi| dt, with the slope taken at the end
    // of each step. The trapezoidal variant is exact for a single mode and is
    // only reported.
    double right = 0, trap = 0;
    for (std::size_t n = 1; n < tr.ledger.size(); ++n) {
      right += c.tau * tr.ledger[n].rate * tr.ledger[n].slope;
      trap += c.tau * tr.ledger[n].rate * 0.5 * (tr.ledger[n].slope + tr.ledger[n - 1].slope);
    }
    const double drop = tr.ledger.back().energy - tr.ledger.front().energy;
    const double residual = std::fabs(drop + right);
    v.require(residual < 1e-3, "energy identity residual " + num(residual));
    v.note("slope/exact " + num(slope / exact) + ", residual " + num(residual) + " (trapezoid " +
           num(std::fabs(drop + trap)) + ")");
  });

  criterion(6, "nonlinear monotonicity and energy estimate", 360.0, [&](Verdict& v) {
    int count = 0;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(config_dir)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
      if (path.extension() != ".json") continue;
      const RunConfig cfg = load_config(path.string());
      if (cfg.mode != "nonlinear") continue;
      ++count;
      const auto start = std::chrono::steady_clock::now();
      const auto [y0, u0] = initial_pair(cfg.grid(), cfg.init, cfg.delta, 2);
      const auto tr = run_minimizing_movement(cfg.nonlinear(), cfg.bundle(), y0);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const std::string name = path.filename().string();
      v.require(!tr.failed, name + " solver: " + tr.message);
      bool mono = true;
      double dissipated = 0;
      for (std::size_t n = 1; n < tr.ledger.size(); ++n) {
        mono = mono && tr.ledger[n].energy <= tr.ledger[n - 1].energy;
        dissipated += 0.5 * cfg.tau * tr.ledger[n].rate * tr.ledger[n].rate;
      }
      const double slack = tr.ledger.front().energy + 1e-8 - (dissipated + tr.ledger.back().energy);
      v.require(mono, name + " energy increased");
      v.require(slack >= 0, name + " estimate violated by " + num(-slack));
      v.require(secs < (cfg.dim == 1 ? 60.0 : 300.0), name + " took " + num(secs) + " s");
      v.note(name + " slack " + num(slack) + " in " + num(secs) + " s");
    }
    v.require(count >= 2, "expected shipped nonlinear configs in 1D and 2D, found " + std::to_string(count));
  });

  criterion(7, "energy-identity residual under tau halving", 180.0, [](Verdict& v) {
    SweepSpec s;
    s.deltas = {0.02};
    s.taus = {0.1, 0.05, 0.025, 0.0125};
    std::vector<double> res;
    for (double tau : s.taus) {
      const auto tr = nonlinear_run(s, 0.02, tau, true);
      v.require(!tr.failed, "tau=" + num(tau) + ": " + tr.message);
      double acc = 0;
      for (std::size_t n = 1; n < tr.ledger.size(); ++n) {
        const auto& now = tr.ledger[n];
        const auto& prev = tr.ledger[n - 1];
        acc += 0.5 * tau * (now.rate * now.rate + 0.5 * (now.slope * now.slope + prev.slope * prev.slope));
      }
      res.push_back(std::fabs(acc + tr.ledger.back().energy - tr.ledger.front().energy));
    }
    std::string ratios;
    for (std::size_t i = 1; i < res.size(); ++i) {
      const double r = res[i - 1] / res[i];
      v.require(r >= 1.5, "ratio " + num(r));
      ratios += (i > 1 ? " " : "") + num(r);
    }
    v.note("residuals " + num(res.front()) + " .. " + num(res.back()) + ", ratios " + ratios);
  });

  criterion(8, "linearization error decreasing in delta", 180.0, [](Verdict& v) {
    SweepSpec s;
    s.n = 64;
    s.taus = {0.05};
    s.deltas = {0.04, 0.02, 0.01, 0.005};
    s.init.amplitude = 0.1;
    const auto r = sweep_delta_fixed_tau(s);
    v.require(r.flagged.empty(), "flagged runs");
    // Independent recomputation at t = 1 from the trajectories.
    const auto lin = linear_run(s, 0.05);
    std::vector<double> own;
    for (double d : s.deltas) {
      const auto tr = nonlinear_run(s, d, 0.05);
      const Field& y = tr.at(1.0);
      Field u(y.grid(), FieldKind::displacement, y.clamp());
      for (std::size_t i = 0; i < y.grid().num_nodes(); ++i)
        u.at(i, 0) = (y.at(i, 0) - y.grid().coord(static_cast<int>(i))) / d;
      own.push_back(h1_distance(u, lin.at(1.0)));
    }
    for (double t : {0.25, 0.5, 1.0}) {
      const Table& tab = r.table("errors_t" + format_number(t));
      std::vector<double> e;
      for (const auto& row : tab.cells) e.push_back(row[0]);
      const double rate = oracle::loglog_slope(s.deltas, e);
      v.require(decreasing(e), "t=" + num(t) + " not strictly decreasing");
      v.require(rate >= 0.4, "t=" + num(t) + " rate " + num(rate));
      v.note("t=" + num(t) + " rate " + num(rate));
      if (t == 1.0)
        for (std::size_t k = 0; k < e.size(); ++k)
          v.require(std::fabs(e[k] - own[k]) <= 1e-10 * (1 + own[k]), "table disagrees with recomputation");
    }
  });

  criterion(9, "diagonal refinement and commutativity report", 300.0, [&](Verdict& v) {
    const RunConfig cfg = load_config(config_dir + "/diagonal.json");
    const auto r = diagonal_sweep(cfg.sweep());
    v.require(r.flagged.empty(), "flagged runs");
    for (const char* name : {"limb_delta", "limb_tau_linear", "limb_tau_nonlinear", "diagonal"}) {
      bool found = false;
      for (const auto& t : r.tables) found = found || t.name == name;
      v.require(found, std::string("missing limb ") + name);
    }
    const Table& diag = r.table("diagonal");
    const auto times = cfg.sweep().sample_times();
    for (std::size_t m = 0; m < times.size(); ++m) {
      std::vector<double> e;
      bool closed = true;
      for (const auto& row : diag.cells) {
        const double err = row[3 * m], dl = row[3 * m + 1], tl = row[3 * m + 2];
        e.push_back(err);
        closed = closed && err <= (dl + tl) * (1 + 1e-12) && std::fabs(err - dl - tl) <= (dl + tl) * (1 + 1e-12);
      }
      v.require(decreasing(e), "t=" + num(times[m]) + " diagonal errors not decreasing");
      v.require(closed, "t=" + num(times[m]) + " closure fails");
      v.note("t=" + num(times[m]) + " errors " + num(e.front()) + " -> " + num(e.back()));
    }
  });

  criterion(10, "convexity audit", 120.0, [](Verdict& v) {
    SweepSpec s;
    s.n = 64;
    s.audit_delta = 0.01;
    s.audit_pairs = 500;
    s.init.amplitude = 0.1;
    const auto r = convexity_and_metric_audit(s);
    const Table& audit = r.table("audit");
    const Table& esc = r.table("escalation");
    const auto* conv = r.check("convexity violations");
    v.require(conv && conv->passed, conv ? conv->detail : "no convexity check");
    v.require(!esc.rows.empty(), "empty threshold search");
    (void)audit;
    v.note((conv ? conv->detail : std::string()) + ", threshold delta " +
           num(r.metric("convexity_threshold_delta")));
  });

  criterion(11, "weak residual under (tau, h) halving", 180.0, [](Verdict& v) {
    std::vector<std::vector<double>> res;
    const std::vector<double> times{0.25, 0.5, 1.0};
    for (auto [n, tau] : std::vector<std::pair<int, double>>{{32, 0.05}, {64, 0.025}, {128, 0.0125}}) {
      SweepSpec s;
      s.n = n;
      s.deltas = {0.05};
      s.taus = {tau};
      const auto tr = nonlinear_run(s, 0.05, tau);
      v.require(!tr.failed, "n=" + std::to_string(n) + ": " + tr.message);
      const auto c = s.nonlinear(0.05, tau);
      std::vector<double> row;
      for (double t : times) {
        const std::size_t k = static_cast<std::size_t>(std::llround(t / tau));
        row.push_back(weak_residual(c, s.bundle(), tr.fields[k], backward_rate(tr.fields[k], tr.fields[k - 1], tau)));
      }
      res.push_back(row);
    }
    double worst = INFINITY;
    for (std::size_t m = 0; m < times.size(); ++m)
      for (std::size_t i = 1; i < res.size(); ++i) worst = std::fmin(worst, res[i - 1][m] / res[i][m]);
    v.require(worst >= 2.0, "smallest ratio " + num(worst));
    v.note("smallest ratio " + num(worst));
  });

  criterion(12, "determinism of the diagonal report", 600.0, [&](Verdict& v) {
    const fs::path root = fs::temp_directory_path() / ("viscoflow-acceptance-" + std::to_string(::getpid()));
    std::ostringstream sink;
    for (const char* run : {"a", "b"}) {
      auto cfg = load_config(config_dir + "/diagonal.json", {{"output", (root / run).string()}});
      v.require(dispatch(cfg, sink) == 0, std::string("run ") + run + " failed");
    }
    int compared = 0;
    for (const auto& e : fs::directory_iterator(root / "a")) {
      if (e.path().extension() != ".csv") continue;
      ++compared;
      v.require(slurp(e.path()) == slurp(root / "b" / e.path().filename()),
                e.path().filename().string() + " differs");
    }
    v.require(compared >= 4, "only " + std::to_string(compared) + " CSVs written");
    v.note(std::to_string(compared) + " CSVs identical");
    fs::remove_all(root);
  });

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
