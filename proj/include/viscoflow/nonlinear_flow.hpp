#pragma once

// Nonlinear second-gradient viscoelasticity: the scaled energy phi_delta, the
// global dissipation distance D_delta, the incremental minimization scheme
// and its discrete solutions, the metric slope and PDE residuals.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "viscoflow/assembly.hpp"
#include "viscoflow/discrete_space.hpp"
#include "viscoflow/error.hpp"
#include "viscoflow/material.hpp"
#include "viscoflow/solvers.hpp"

namespace viscoflow {

struct NonlinearConfig {
  double delta = 0.05;
  double alpha = 0.5;
  double tau = 0.05;
  double T = 1.0;
  double grad_tol = 1e-10;
  int max_iters = 200;
  double guard_radius = 0.5;
  SolverKind solver = SolverKind::newton;
  bool compute_slopes = true;
  /// Start each inner solve from 2 U^{n-1} - U^{n-2} instead of U^{n-1}.
  bool extrapolate_guess = false;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0,1)");
    if (!(delta > 0.0)) throw InvalidArgument("delta must be positive");
    if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
    if (!(T > 0.0)) throw InvalidArgument("T must be positive");
    if (!(grad_tol > 0.0)) throw InvalidArgument("grad_tol must be positive");
    if (max_iters < 1) throw InvalidArgument("max_iters must be positive");
    if (!(guard_radius > 0.0)) throw InvalidArgument("guard radius must be positive");
  }

  /// Coefficient of the second-gradient stress in the weak form, delta^(2 - p alpha).
  double beta(double p) const { return std::pow(delta, 2.0 - p * alpha); }
};

/// One row of a trajectory ledger. Row 0 describes the initial datum.
struct LedgerEntry {
  int n = 0;
  double t = 0.0;
  double energy = 0.0;
  double distance = 0.0;  // D(U^n, U^{n-1})
  double rate = 0.0;      // distance / tau
  double slope = 0.0;     // metric slope at U^n
  int iters = 0;
  double detmin = 0.0;
};

/// Index of the piecewise-constant interpolant: U^n for t in ((n-1)tau, n tau].
inline std::size_t step_index(double t, double tau, std::size_t last) {
  if (t <= 0.0) return 0;
  const double k = std::ceil(t / tau - 1e-9);
  return std::min(static_cast<std::size_t>(std::max(k, 0.0)), last);
}

inline std::size_t step_count(double T, double tau) {
  return static_cast<std::size_t>(std::ceil(T / tau - 1e-9));
}

struct Trajectory {
  NonlinearConfig config;
  Field initial;
  std::vector<Field> fields;  // U^0 .. U^N
  std::vector<LedgerEntry> ledger;
  bool failed = false;
  std::string message;

  std::size_t steps() const { return fields.empty() ? 0 : fields.size() - 1; }
  const Field& at(double t) const { return fields[step_index(t, config.tau, steps())]; }
};

struct EnergyTerms {
  double elastic = 0.0;  // delta^-2 int W(grad y)
  double hyper = 0.0;    // delta^-(p alpha) int P(grad^2 y)
  double force = 0.0;    // -delta^-1 int f.y  (f = 0 in shipped runs)

  double total() const { return elastic + hyper + force; }
};

/// Evaluation kernel shared by every nonlinear operation on one grid.
class NonlinearModel {
 public:
  struct Kinematics {
    std::vector<Mat> F;   // per quadrature point
    std::vector<Ten3> G;  // per cell
  };

  NonlinearModel(const NonlinearConfig& cfg, const MaterialBundle& b, const Grid& grid,
                 int clamp = 2)
      : cfg_(cfg), b_(b), grid_(grid), ops_(ops_for(grid)), dofs_(grid, clamp) {
    cfg_.validate();
    if (b.dim != grid.dim()) throw InvalidArgument("bundle and grid dimensions differ");
    gf_ = ops_->grad * dofs_.extension();
    sf_ = ops_->hess * dofs_.extension();
    wq_ = grid.cell_volume() / grid.qp_per_cell();
    wc_ = grid.cell_volume();
    inv_d2_ = 1.0 / (cfg.delta * cfg.delta);
    hyper_scale_ = std::pow(cfg.delta, -b.p * cfg.alpha);
  }

  const NonlinearConfig& config() const { return cfg_; }
  const MaterialBundle& bundle() const { return b_; }
  const Grid& grid() const { return grid_; }
  const DofMap& dofs() const { return dofs_; }

  Kinematics kinematics(const Vec& full) const {
    return {unpack_mats(ops_->grad * full, grid_.dim()), unpack_ten3(ops_->hess * full, grid_.dim())};
  }
  Kinematics kinematics(const Field& y) const { return kinematics(Vec(y.vec())); }

  static bool admissible(const Kinematics& k) {
    for (const Mat& f : k.F)
      if (!(f.det() > 0.0)) return false;
    return true;
  }

  EnergyTerms energy_terms(const Kinematics& k) const {
    EnergyTerms e;
    double sw = 0.0;
    for (const Mat& f : k.F) sw += b_.W(f);
    double sp = 0.0;
    for (const Ten3& g : k.G) sp += b_.P(g);
    e.elastic = inv_d2_ * wq_ * sw;
    e.hyper = hyper_scale_ * wc_ * sp;
    return e;
  }

  double energy(const Kinematics& k) const { return energy_terms(k).total(); }

  /// delta^2 D_delta^2 = int D^2(F0, F1)
  double raw_dist_sq(const std::vector<Mat>& f0, const std::vector<Mat>& f1) const {
    double s = 0.0;
    for (std::size_t q = 0; q < f0.size(); ++q) s += b_.D2(f0[q], f1[q]);
    return wq_ * s;
  }

  double dist_sq(const std::vector<Mat>& f0, const std::vector<Mat>& f1) const {
    return inv_d2_ * raw_dist_sq(f0, f1);
  }

  /// delta^2 * (gradient of phi_delta) on the free dofs.
  Vec scaled_energy_gradient(const Kinematics& k, double beta) const {
    std::vector<Mat> s(k.F.size());
    for (std::size_t q = 0; q < k.F.size(); ++q) s[q] = wq_ * b_.grad_W(k.F[q]);
    std::vector<Ten3> hs(k.G.size());
    for (std::size_t c = 0; c < k.G.size(); ++c) hs[c] = (wc_ * beta) * b_.grad_P(k.G[c]);
    return gf_.transpose() * pack(s) + sf_.transpose() * pack(hs);
  }

  /// Stiffness of w -> int H_{grad y}[grad w, grad w] on the free dofs.
  SpMat metric_operator(const Kinematics& k) const {
    const int d = grid_.dim();
    SpMat bh = block_diagonal(k.F.size(), d * d, [&](std::size_t q) {
      const Mat& f = k.F[q];
      return Eigen::MatrixXd(wq_ * mat_tangent(d, [&](const Mat& e) {
                               return 0.5 * b_.hess11_D2(f, f, e);
                             }));
    });
    return congruence(gf_, bh);
  }

  /// Incremental objective Phi(tau, y_prev; .) over the free dofs.
  class Increment {
   public:
    Increment(const NonlinearModel& m, const Field& y_prev)
        : m_(m), base_(y_prev.vec()), f_prev_(m.kinematics(base_).F) {}

    Vec full(const Vec& x) const {
      Vec v = base_;
      m_.dofs_.scatter(x, v);
      return v;
    }

    struct Parts {
      double dist_term = 0.0;
      double energy = 0.0;
    };

    /// Distance term and energy, or +inf parts outside the det guard.
    Parts parts(const Vec& x) const {
      const Kinematics k = m_.kinematics(full(x));
      if (!admissible(k)) return {INFINITY, INFINITY};
      return {m_.dist_sq(k.F, f_prev_) / (2.0 * m_.cfg_.tau), m_.energy(k)};
    }

    double value(const Vec& x) const {
      const Parts p = parts(x);
      return p.dist_term + p.energy;
    }

    Vec gradient(const Vec& x) const {
      const Kinematics k = m_.kinematics(full(x));
      const double inv2tau = 1.0 / (2.0 * m_.cfg_.tau);
      std::vector<Mat> s(k.F.size());
      for (std::size_t q = 0; q < k.F.size(); ++q)
        s[q] = (m_.wq_ * m_.inv_d2_) *
               (m_.b_.grad_W(k.F[q]) + inv2tau * m_.b_.grad1_D2(k.F[q], f_prev_[q]));
      std::vector<Ten3> hs(k.G.size());
      for (std::size_t c = 0; c < k.G.size(); ++c)
        hs[c] = (m_.wc_ * m_.hyper_scale_) * m_.b_.grad_P(k.G[c]);
      return m_.gf_.transpose() * pack(s) + m_.sf_.transpose() * pack(hs);
    }

    SpMat hessian(const Vec& x) const {
      const Kinematics k = m_.kinematics(full(x));
      const int d = m_.grid_.dim();
      const double inv2tau = 1.0 / (2.0 * m_.cfg_.tau);
      SpMat bw = block_diagonal(k.F.size(), d * d, [&](std::size_t q) {
        const Mat& f = k.F[q];
        const Mat& fp = f_prev_[q];
        return Eigen::MatrixXd((m_.wq_ * m_.inv_d2_) * mat_tangent(d, [&](const Mat& e) {
                                 return m_.b_.hess_W(f, e) + inv2tau * m_.b_.hess11_D2(f, fp, e);
                               }));
      });
      SpMat bp = block_diagonal(k.G.size(), d * d * d, [&](std::size_t c) {
        const Ten3& g = k.G[c];
        return Eigen::MatrixXd((m_.wc_ * m_.hyper_scale_) *
                               ten3_tangent(d, [&](const Ten3& e) { return m_.b_.hess_P(g, e); }));
      });
      SpMat h = congruence(m_.gf_, bw);
      h += congruence(m_.sf_, bp);
      return h;
    }

   private:
    const NonlinearModel& m_;
    Vec base_;
    std::vector<Mat> f_prev_;
  };

 private:
  NonlinearConfig cfg_;
  MaterialBundle b_;
  Grid grid_;
  std::shared_ptr<const DiscreteOps> ops_;
  DofMap dofs_;
  SpMat gf_, sf_;
  double wq_ = 0.0, wc_ = 0.0, inv_d2_ = 0.0, hyper_scale_ = 0.0;
};

// ---------------------------------------------------------------------------
// Operations

inline EnergyTerms energy_terms(const NonlinearConfig& cfg, const MaterialBundle& b, const Field& y) {
  NonlinearModel m(cfg, b, y.grid(), y.clamp());
  const auto k = m.kinematics(y);
  if (!NonlinearModel::admissible(k)) throw DetGuardViolation("det grad y <= 0 on some cell");
  return m.energy_terms(k);
}

/// phi_delta(y) with f = 0.
inline double energy_phi_delta(const NonlinearConfig& cfg, const MaterialBundle& b, const Field& y) {
  return energy_terms(cfg, b, y).total();
}

/// D_delta(y0, y1) = delta^-1 (int D^2(grad y0, grad y1))^(1/2)
inline double dissipation_D_delta(const NonlinearConfig& cfg, const MaterialBundle& b,
                                  const Field& y0, const Field& y1) {
  if (y0.grid() != y1.grid()) throw GridMismatch("dissipation_D_delta: grids differ");
  NonlinearModel m(cfg, b, y0.grid(), y0.clamp());
  const auto k0 = m.kinematics(y0);
  const auto k1 = m.kinematics(y1);
  if (!NonlinearModel::admissible(k0) || !NonlinearModel::admissible(k1))
    throw DetGuardViolation("det grad y <= 0 on some cell");
  return std::sqrt(m.raw_dist_sq(k0.F, k1.F)) / cfg.delta;
}

/// Phi_delta(tau, y_prev; y) = D_delta(y, y_prev)^2 / (2 tau) + phi_delta(y)
inline double incremental_functional(const NonlinearConfig& cfg, const MaterialBundle& b,
                                     const Field& y_prev, const Field& y) {
  if (y_prev.grid() != y.grid()) throw GridMismatch("incremental_functional: grids differ");
  NonlinearModel m(cfg, b, y.grid(), y.clamp());
  if (!NonlinearModel::admissible(m.kinematics(y_prev)))
    throw DetGuardViolation("previous state violates the det guard");
  NonlinearModel::Increment inc(m, y_prev);
  const double v = inc.value(m.dofs().gather(y));
  if (!std::isfinite(v)) throw DetGuardViolation("det grad y <= 0 on some cell");
  return v;
}

struct IncrementResult {
  Field y;
  MinimizeStats stats;
  double value = 0.0;       // Phi at the result
  double dist_term = 0.0;   // D^2 / (2 tau) at the result
  double energy = 0.0;      // phi_delta at the result
};

inline IncrementResult minimize_increment(const NonlinearModel& m, const Field& y_prev,
                                          const Field* guess = nullptr) {
  NonlinearModel::Increment inc(m, y_prev);
  Vec x = m.dofs().gather(y_prev);
  if (!std::isfinite(inc.value(x))) throw DetGuardViolation("previous state violates the det guard");
  if (guess) {
    const Vec xg = m.dofs().gather(*guess);
    if (std::isfinite(inc.value(xg))) x = xg;
  }
  const auto& cfg = m.config();
  IncrementResult r;
  r.stats = minimize(inc, x, {cfg.grad_tol, cfg.max_iters, cfg.solver});
  r.y = y_prev;
  m.dofs().scatter(x, r.y);
  const auto parts = inc.parts(x);
  r.dist_term = parts.dist_term;
  r.energy = parts.energy;
  r.value = parts.dist_term + parts.energy;
  return r;
}

inline IncrementResult minimize_increment(const NonlinearConfig& cfg, const MaterialBundle& b,
                                          const Field& y_prev) {
  NonlinearModel m(cfg, b, y_prev.grid(), y_prev.clamp());
  return minimize_increment(m, y_prev);
}

inline void check_guard_neighborhood(const NonlinearModel::Kinematics& k, double radius) {
  for (const Mat& f : k.F)
    if (norm(f - Mat::identity(f.dim())) > radius)
      throw OutOfNeighborhood("grad y leaves the guarded neighborhood of Id");
}

/// Metric slope |d phi_delta|(y) through the auxiliary elliptic problem
///   min_w int 1/2 H_{grad y}[grad w, grad w] - (dW + beta L_P) : grad w,
/// returning delta^-1 |sqrt(H) grad w|_{L2}.
inline double nonlinear_slope(const NonlinearModel& m, const Field& y) {
  const auto k = m.kinematics(y);
  if (!NonlinearModel::admissible(k)) throw DetGuardViolation("det grad y <= 0 on some cell");
  check_guard_neighborhood(k, m.config().guard_radius);
  const Vec g = m.scaled_energy_gradient(k, m.config().beta(m.bundle().p));
  if (g.norm() == 0.0) return 0.0;
  const SpMat a = m.metric_operator(k);
  Vec w = Vec::Zero(g.size());
  const CgResult cg = pcg(a, g, w, 1e-12, 20 * static_cast<int>(g.size()) + 100);
  if (!cg.converged) throw SingularSystem("slope system did not converge");
  return std::sqrt(std::fmax(0.0, g.dot(w))) / m.config().delta;
}

inline double nonlinear_slope(const NonlinearConfig& cfg, const MaterialBundle& b, const Field& y) {
  NonlinearModel m(cfg, b, y.grid(), y.clamp());
  return nonlinear_slope(m, y);
}

/// Clamped test fields: sinusoids times sin^2 bumps, plus sin^4 bumps.
inline std::vector<Field> test_dictionary(const Grid& grid, int clamp = 2) {
  std::vector<Field> dict;
  const int d = grid.dim();
  const double pi = std::acos(-1.0);
  for (int a = 0; a < d; ++a) {
    for (int k = 1; k <= 3; ++k)
      dict.push_back(Field::from_function(grid, FieldKind::displacement, clamp, [&](const auto& x) {
        double v = std::sin(k * pi * x[a]);
        for (int j = 0; j < d; ++j) v *= std::pow(std::sin(pi * x[j]), 2);
        std::array<double, 3> out{0.0, 0.0, 0.0};
        out[a] = v;
        return out;
      }));
    dict.push_back(Field::from_function(grid, FieldKind::displacement, clamp, [&](const auto& x) {
      double v = 1.0;
      for (int j = 0; j < d; ++j) v *= std::pow(std::sin(pi * x[j]), 4);
      std::array<double, 3> out{0.0, 0.0, 0.0};
      out[a] = v;
      return out;
    }));
  }
  return dict;
}

/// Max over the test dictionary of the normalized weak-form residual
///   int (dW(grad y) + dR(grad y, grad ydot)) : grad phi + beta int dP : grad^2 phi
///   - delta int f.phi,   divided by |phi|_{H2}.
inline double weak_residual(const NonlinearConfig& cfg, const MaterialBundle& b, const Field& y,
                            const Field& ydot, const Field* force = nullptr,
                            const std::vector<Field>* dictionary = nullptr) {
  if (y.grid() != ydot.grid()) throw GridMismatch("weak_residual: grids differ");
  const Grid& grid = y.grid();
  const auto ops = ops_for(grid);
  const int d = grid.dim();
  const auto F = unpack_mats(ops->grad * Vec(y.vec()), d);
  const auto Fdot = unpack_mats(ops->grad * Vec(ydot.vec()), d);
  const auto G = unpack_ten3(ops->hess * Vec(y.vec()), d);
  const double beta = cfg.beta(b.p);
  const double wq = grid.cell_volume() / grid.qp_per_cell();

  std::vector<Mat> stress(F.size());
  for (std::size_t q = 0; q < F.size(); ++q)
    stress[q] = wq * (b.grad_W(F[q]) + viscous_stress(b, F[q], Fdot[q]));
  std::vector<Ten3> hyper(G.size());
  for (std::size_t c = 0; c < G.size(); ++c) hyper[c] = (grid.cell_volume() * beta) * b.grad_P(G[c]);
  Vec load = ops->grad.transpose() * pack(stress) + ops->hess.transpose() * pack(hyper);
  if (force) {
    if (force->grid() != grid) throw GridMismatch("weak_residual: force grid differs");
    load -= (cfg.delta * wq) * (ops->interp.transpose() * (ops->interp * Vec(force->vec())));
  }

  const std::vector<Field> own = dictionary ? std::vector<Field>{} : test_dictionary(grid, y.clamp());
  const auto& dict = dictionary ? *dictionary : own;
  double worst = 0.0;
  for (const Field& phi : dict) {
    const double nrm = h2_norm(phi);
    if (nrm == 0.0) continue;
    worst = std::fmax(worst, std::fabs(load.dot(phi.vec())) / nrm);
  }
  return worst;
}

/// Backward difference (U^n - U^{n-1}) / tau as a displacement-kind field.
inline Field backward_rate(const Field& now, const Field& prev, double tau) {
  Field r(now.grid(), FieldKind::displacement, now.clamp());
  auto out = r.values();
  auto a = now.values();
  auto p = prev.values();
  for (std::size_t q = 0; q < out.size(); ++q) out[q] = (a[q] - p[q]) / tau;
  r.impose_clamp();
  return r;
}

/// Minimizing-movement trajectory U^0..U^N with N = ceil(T / tau).
inline Trajectory run_minimizing_movement(const NonlinearConfig& cfg, const MaterialBundle& b,
                                          const Field& y0) {
  cfg.validate();
  NonlinearModel m(cfg, b, y0.grid(), y0.clamp());
  Trajectory tr;
  tr.config = cfg;
  tr.initial = y0;
  tr.fields.push_back(y0);

  auto k0 = m.kinematics(y0);
  if (!NonlinearModel::admissible(k0)) throw DetGuardViolation("initial datum violates the det guard");
  LedgerEntry e0;
  e0.energy = m.energy(k0);
  e0.slope = cfg.compute_slopes ? nonlinear_slope(m, y0) : 0.0;
  e0.detmin = det_min(CellTensors{y0.grid(), y0.grid().qp_per_cell(), k0.F, {}});
  tr.ledger.push_back(e0);

  const std::size_t steps = step_count(cfg.T, cfg.tau);
  for (std::size_t n = 1; n <= steps; ++n) {
    IncrementResult r;
    try {
      const std::size_t last = tr.fields.size() - 1;
      if (cfg.extrapolate_guess && last >= 1) {
        const Field guess = combine(2.0, tr.fields[last], -1.0, tr.fields[last - 1]);
        r = minimize_increment(m, tr.fields.back(), &guess);
      } else {
        r = minimize_increment(m, tr.fields.back());
      }
    } catch (const Error& ex) {
      tr.failed = true;
      tr.message = "step " + std::to_string(n) + ": " + ex.what();
      return tr;
    }
    LedgerEntry e;
    e.n = static_cast<int>(n);
    e.t = static_cast<double>(n) * cfg.tau;
    e.energy = r.energy;
    e.distance = std::sqrt(2.0 * cfg.tau * r.dist_term);
    e.rate = e.distance / cfg.tau;
    e.iters = r.stats.iters;
    const auto k = m.kinematics(r.y);
    e.detmin = det_min(CellTensors{r.y.grid(), r.y.grid().qp_per_cell(), k.F, {}});
    try {
      e.slope = cfg.compute_slopes ? nonlinear_slope(m, r.y) : 0.0;
    } catch (const Error& ex) {
      tr.failed = true;
      tr.message = "step " + std::to_string(n) + " slope: " + ex.what();
    }
    tr.fields.push_back(std::move(r.y));
    tr.ledger.push_back(e);
    if (!r.stats.converged()) {
      tr.failed = true;
      tr.message = "step " + std::to_string(n) + ": inner solver " +
                   (r.stats.status == MinimizeStatus::stalled ? "stalled" : "hit max_iters") +
                   " (|grad| = " + std::to_string(r.stats.grad_norm) + ")";
    }
    if (tr.failed) return tr;
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Ledger diagnostics (shared with the linear flow, same ledger layout)

/// phi(U^0) - [ sum 1/2 tau rate^2 + phi(U^N) ]; nonnegative up to solver slack.
inline double energy_estimate_margin(const std::vector<LedgerEntry>& ledger, double tau) {
  if (ledger.empty()) return 0.0;
  double dissipated = 0.0;
  for (std::size_t n = 1; n < ledger.size(); ++n) dissipated += 0.5 * tau * ledger[n].rate * ledger[n].rate;
  return ledger.front().energy - (dissipated + ledger.back().energy);
}

/// |1/2 int |y'|^2 + 1/2 int |d phi|^2 + phi(T) - phi(0)|. Each step
/// contributes its rate as a midpoint value and the trapezoidal average of
/// the squared slopes at its two ends.
inline double energy_identity_residual(const std::vector<LedgerEntry>& ledger, double tau) {
  if (ledger.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t n = 1; n < ledger.size(); ++n) {
    const double slope2 = 0.5 * (ledger[n].slope * ledger[n].slope + ledger[n - 1].slope * ledger[n - 1].slope);
    s += 0.5 * tau * (ledger[n].rate * ledger[n].rate + slope2);
  }
  return std::fabs(s + ledger.back().energy - ledger.front().energy);
}

/// True iff energies never increase along the ledger (exact comparison).
inline bool energy_monotone(const std::vector<LedgerEntry>& ledger) {
  for (std::size_t n = 1; n < ledger.size(); ++n)
    if (ledger[n].energy > ledger[n - 1].energy) return false;
  return true;
}

}  // namespace viscoflow
