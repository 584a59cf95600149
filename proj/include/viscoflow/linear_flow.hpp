#pragma once

// Linearized Kelvin-Voigt flow: quadratic energy, quadratic metric, exact
// implicit-Euler steps and the linear slope.

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "viscoflow/assembly.hpp"
#include "viscoflow/discrete_space.hpp"
#include "viscoflow/error.hpp"
#include "viscoflow/material.hpp"
#include "viscoflow/nonlinear_flow.hpp"
#include "viscoflow/solvers.hpp"

namespace viscoflow {

struct LinearConfig {
  double tau = 0.05;
  double T = 1.0;
  Grid grid;
  Ten4 Cw;
  Ten4 Cd;
  int clamp = 1;
  double cg_tol = 1e-12;

  void validate() const {
    if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
    if (!(T > 0.0)) throw InvalidArgument("T must be positive");
    if (Cw.dim() != grid.dim() || Cd.dim() != grid.dim())
      throw InvalidArgument("material tensors do not match the grid dimension");
    if (!(min_symmetric_eigenvalue(Cw) > 0.0) || !(min_symmetric_eigenvalue(Cd) > 0.0))
      throw InvalidArgument("Cw and Cd must be positive definite on symmetric matrices");
    if (!(cg_tol > 0.0)) throw InvalidArgument("cg_tol must be positive");
  }

  static LinearConfig from_bundle(const MaterialBundle& b, const Grid& grid, double tau, double T,
                                  int clamp = 1) {
    LinearConfig c;
    c.tau = tau;
    c.T = T;
    c.grid = grid;
    c.Cw = b.Cw;
    c.Cd = b.Cd;
    c.clamp = clamp;
    return c;
  }
};

struct LinearTrajectory {
  LinearConfig config;
  std::vector<Field> fields;
  std::vector<LedgerEntry> ledger;

  std::size_t steps() const { return fields.empty() ? 0 : fields.size() - 1; }
  const Field& at(double t) const { return fields[step_index(t, config.tau, steps())]; }
};

/// Assembled quadratic forms of the linear problem on one grid.
class LinearModel {
 public:
  explicit LinearModel(const LinearConfig& cfg)
      : cfg_(cfg), ops_(ops_for(cfg.grid)), dofs_(cfg.grid, cfg.clamp) {
    cfg_.validate();
    const int d = cfg.grid.dim();
    const double wq = cfg.grid.cell_volume() / cfg.grid.qp_per_cell();
    const std::size_t nq = cfg.grid.num_qp();
    auto tensor_block = [&](const Ten4& c) -> Eigen::MatrixXd {
      return wq * mat_tangent(d, [&](const Mat& e) { return c.apply(e); });
    };
    const Eigen::MatrixXd bw = tensor_block(cfg.Cw);
    const Eigen::MatrixXd bd = tensor_block(cfg.Cd);
    kw_full_ = congruence(ops_->grad, block_diagonal(nq, d * d, [&](std::size_t) { return bw; }));
    kd_full_ = congruence(ops_->grad, block_diagonal(nq, d * d, [&](std::size_t) { return bd; }));
    kw_ = SpMat(dofs_.extension().transpose()) * kw_full_ * dofs_.extension();
    kd_ = SpMat(dofs_.extension().transpose()) * kd_full_ * dofs_.extension();
    step_ = kd_ / cfg.tau + kw_;
  }

  const LinearConfig& config() const { return cfg_; }
  const DofMap& dofs() const { return dofs_; }
  const SpMat& stiffness_W() const { return kw_; }
  const SpMat& stiffness_D() const { return kd_; }

  double energy(const Field& u) const {
    const Vec v = u.vec();
    return 0.5 * v.dot(kw_full_ * v);
  }

  double distance(const Field& u0, const Field& u1) const {
    const Vec diff = u0.vec() - u1.vec();
    return std::sqrt(std::fmax(0.0, diff.dot(kd_full_ * diff)));
  }

  Field step(const Field& u_prev) const {
    const Vec rhs = kd_ * dofs_.gather(u_prev) / cfg_.tau;
    Vec x = dofs_.gather(u_prev);
    solve(step_, rhs, x, "implicit step");
    Field u(u_prev.grid(), FieldKind::displacement, u_prev.clamp());
    dofs_.scatter(x, u);
    return u;
  }

  double slope(const Field& u) const {
    const Vec g = kw_ * dofs_.gather(u);
    if (g.norm() == 0.0) return 0.0;
    Vec w = Vec::Zero(g.size());
    solve(kd_, g, w, "slope system");
    return std::sqrt(std::fmax(0.0, w.dot(kd_ * w)));
  }

 private:
  void solve(const SpMat& a, const Vec& b, Vec& x, const char* what) const {
    const CgResult r = pcg(a, b, x, cfg_.cg_tol, 50 * static_cast<int>(b.size()) + 100);
    if (!r.converged) throw SingularSystem(std::string(what) + ": conjugate gradients did not converge");
  }

  LinearConfig cfg_;
  std::shared_ptr<const DiscreteOps> ops_;
  DofMap dofs_;
  SpMat kw_full_, kd_full_, kw_, kd_, step_;
};

inline void require_grid(const LinearConfig& cfg, const Field& u) {
  if (u.grid() != cfg.grid) throw GridMismatch("field does not live on the configured grid");
}

/// phi0(u) = int 1/2 Cw[e(u), e(u)]  (f = 0)
inline double energy_phi0(const LinearConfig& cfg, const Field& u) {
  require_grid(cfg, u);
  const auto ct = gradients(u);
  std::vector<double> vals(ct.grad.size());
  for (std::size_t q = 0; q < vals.size(); ++q) {
    const Mat e = sym(ct.grad[q]);
    vals[q] = 0.5 * cfg.Cw.form(e, e);
  }
  return integrate_qp(cfg.grid, vals);
}

/// D0(u0, u1) = (int Cd[grad(u0 - u1), grad(u0 - u1)])^(1/2)
inline double dissipation_D0(const LinearConfig& cfg, const Field& u0, const Field& u1) {
  if (u0.grid() != u1.grid()) throw GridMismatch("dissipation_D0: grids differ");
  require_grid(cfg, u0);
  const auto ops = ops_for(cfg.grid);
  const auto g = unpack_mats(ops->grad * Vec(u0.vec() - u1.vec()), cfg.grid.dim());
  std::vector<double> vals(g.size());
  for (std::size_t q = 0; q < g.size(); ++q) vals[q] = cfg.Cd.form(g[q], g[q]);
  return std::sqrt(std::fmax(0.0, integrate_qp(cfg.grid, vals)));
}

inline Field implicit_step(const LinearConfig& cfg, const Field& u_prev) {
  require_grid(cfg, u_prev);
  return LinearModel(cfg).step(u_prev);
}

inline double linear_slope(const LinearConfig& cfg, const Field& u) {
  require_grid(cfg, u);
  return LinearModel(cfg).slope(u);
}

inline LinearTrajectory run_linear_flow(const LinearConfig& cfg, const Field& u0) {
  require_grid(cfg, u0);
  if (u0.kind() != FieldKind::displacement) throw InvalidArgument("linear flow expects a displacement");
  const LinearModel m(cfg);
  LinearTrajectory tr;
  tr.config = cfg;
  Field start = u0;
  if (start.clamp() != cfg.clamp) {
    Field c(cfg.grid, FieldKind::displacement, cfg.clamp);
    auto dst = c.values();
    auto src = start.values();
    std::copy(src.begin(), src.end(), dst.begin());
    c.impose_clamp();
    start = c;
  }
  tr.fields.push_back(start);
  LedgerEntry e0;
  e0.energy = m.energy(start);
  e0.slope = m.slope(start);
  e0.detmin = std::numeric_limits<double>::quiet_NaN();
  tr.ledger.push_back(e0);
  const std::size_t steps = step_count(cfg.T, cfg.tau);
  for (std::size_t n = 1; n <= steps; ++n) {
    Field u = m.step(tr.fields.back());
    LedgerEntry e;
    e.n = static_cast<int>(n);
    e.t = static_cast<double>(n) * cfg.tau;
    e.energy = m.energy(u);
    e.distance = m.distance(u, tr.fields.back());
    e.rate = e.distance / cfg.tau;
    e.slope = m.slope(u);
    e.iters = 0;
    e.detmin = std::numeric_limits<double>::quiet_NaN();
    tr.fields.push_back(std::move(u));
    tr.ledger.push_back(e);
  }
  return tr;
}

/// Amplitude of a 1D field along sin(k pi x), by nodal least squares.
inline double modal_amplitude(const Field& u, int k) {
  const Grid& g = u.grid();
  if (g.dim() != 1) throw InvalidArgument("modal amplitude is defined in 1D only");
  const double pi = std::acos(-1.0);
  double num = 0.0, den = 0.0;
  for (std::size_t node = 0; node < g.num_nodes(); ++node) {
    const double s = std::sin(k * pi * g.coord(static_cast<int>(node)));
    num += s * u.at(node, 0);
    den += s * s;
  }
  return num / den;
}

/// Closed-form amplitude a0 exp(-t cw / cd) of a 1D mode under the linear flow.
inline double modal_oracle_1d(int k, double a0, double t, double cw = 1.0, double cd = 4.0) {
  (void)k;  // both operators are multiples of the same Laplacian
  return a0 * std::exp(-t * cw / cd);
}

/// Amplitude after n implicit steps: a0 (1 + tau cw / cd)^(-n).
inline double modal_discrete_1d(double a0, double tau, int steps, double cw = 1.0, double cd = 4.0) {
  return a0 * std::pow(1.0 + tau * cw / cd, -steps);
}

}  // namespace viscoflow
