#pragma once

// Solvers used by the flows. Jacobi-preconditioned conjugate gradients handle
// the linear systems; damped Newton and L-BFGS minimize the increments. Both
// minimizers share one Armijo line search that never accepts an increase of
// the objective.

#include <Eigen/SparseCholesky>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "viscoflow/discrete_space.hpp"

namespace viscoflow {

struct CgResult {
  int iters = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

/// Preconditioned CG for an SPD operator given as apply(x, out).
/// Stops when |b - A x| <= rel_tol * |b|; the iteration order is fixed.
template <class Apply>
CgResult pcg(Apply&& apply, const Vec& diag, const Vec& b, Vec& x, double rel_tol, int max_iters) {
  CgResult res;
  const double bnorm = b.norm();
  if (x.size() != b.size()) x = Vec::Zero(b.size());
  if (bnorm == 0.0) {
    x.setZero();
    res.converged = true;
    return res;
  }
  Vec ax(b.size());
  apply(x, ax);
  Vec r = b - ax;
  Vec z = r.cwiseQuotient(diag);
  Vec p = z;
  double rz = r.dot(z);
  Vec ap(b.size());
  for (int it = 0; it < max_iters; ++it) {
    const double rn = r.norm();
    res.rel_residual = rn / bnorm;
    if (res.rel_residual <= rel_tol) {
      res.converged = true;
      return res;
    }
    apply(p, ap);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;  // lost positive definiteness
    const double alpha = rz / pap;
    x += alpha * p;
    r -= alpha * ap;
    z = r.cwiseQuotient(diag);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
    res.iters = it + 1;
  }
  res.rel_residual = r.norm() / bnorm;
  res.converged = res.rel_residual <= rel_tol;
  return res;
}

inline CgResult pcg(const SpMat& a, const Vec& b, Vec& x, double rel_tol, int max_iters) {
  Vec diag = a.diagonal();
  for (Eigen::Index i = 0; i < diag.size(); ++i)
    if (!(diag[i] > 0.0)) diag[i] = 1.0;
  return pcg([&](const Vec& v, Vec& out) { out = a * v; }, diag, b, x, rel_tol, max_iters);
}

enum class SolverKind { newton, lbfgs };

inline std::string to_string(SolverKind k) { return k == SolverKind::newton ? "newton" : "lbfgs"; }

struct MinimizeOptions {
  double grad_tol = 1e-10;  // relative to 1 + |grad at the starting point|
  int max_iters = 200;
  SolverKind kind = SolverKind::newton;
};

enum class MinimizeStatus { converged, max_iters, stalled };

struct MinimizeStats {
  int iters = 0;
  MinimizeStatus status = MinimizeStatus::max_iters;
  double value = 0.0;
  double grad_norm = 0.0;
  double grad_norm0 = 0.0;
  /// Converged at the rounding level of the objective or of x, before the
  /// gradient tolerance was reached.
  bool at_rounding_floor = false;

  bool converged() const { return status == MinimizeStatus::converged; }
};

namespace detail {

/// Backtracking from a unit step. Returns the accepted step length or 0.
template <class Problem>
double armijo(Problem& prob, const Vec& x, double f, const Vec& g, const Vec& dir, Vec& x_new,
              double& f_new) {
  constexpr double c1 = 1e-4;
  const double slope = g.dot(dir);
  double step = 1.0;
  for (int k = 0; k < 60; ++k, step *= 0.5) {
    x_new = x + step * dir;
    f_new = prob.value(x_new);
    if (!std::isfinite(f_new)) continue;  // guard violation: shrink
    if (f_new <= f + c1 * step * slope) return step;
    // Near the rounding floor the sufficient-decrease test is meaningless;
    // accept a non-increasing step that still reduces the gradient.
    if (f_new <= f && prob.gradient(x_new).norm() < g.norm()) return step;
  }
  return 0.0;
}

}  // namespace detail

/// Minimizes prob over x in place. Problem must provide
///   double value(const Vec&)      (+inf outside the admissible set)
///   Vec    gradient(const Vec&)
///   SpMat  hessian(const Vec&)    (Newton only)
template <class Problem>
MinimizeStats minimize(Problem& prob, Vec& x, const MinimizeOptions& opt) {
  MinimizeStats st;
  double f = prob.value(x);
  Vec g = prob.gradient(x);
  st.grad_norm0 = g.norm();
  const double target = opt.grad_tol * (1.0 + st.grad_norm0);

  std::deque<std::pair<Vec, Vec>> memory;  // L-BFGS (s, y) pairs
  constexpr std::size_t kMemory = 12;

  Vec x_new, dir;
  double f_new = f;
  bool stagnating = false;
  for (st.iters = 0; st.iters < opt.max_iters; ++st.iters) {
    st.value = f;
    st.grad_norm = g.norm();
    if (st.grad_norm <= target) {
      st.status = MinimizeStatus::converged;
      return st;
    }

    if (opt.kind == SolverKind::newton) {
      SpMat k = prob.hessian(x);
      Eigen::SimplicialLDLT<SpMat> ldlt;
      double shift = 0.0;
      const double scale = k.diagonal().cwiseAbs().maxCoeff();
      for (int attempt = 0; attempt < 12; ++attempt) {
        SpMat ks = k;
        if (shift > 0.0)
          for (Eigen::Index i = 0; i < ks.rows(); ++i) ks.coeffRef(i, i) += shift;
        ldlt.compute(ks);
        if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0) break;
        shift = shift == 0.0 ? 1e-10 * scale : 10.0 * shift;
      }
      dir = -ldlt.solve(g);
      if (ldlt.info() != Eigen::Success || !(g.dot(dir) < 0.0)) {
        dir = -g;
      } else if (stagnating &&
                 (-g.dot(dir) <= 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::fabs(f)) ||
                  dir.lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + x.lpNorm<Eigen::Infinity>()))) {
        // The last step no longer halved the gradient, and either the
        // predicted decrease g^T H^-1 g / 2 is below what f can resolve or
        // the Newton correction is negligible against x.
        st.status = MinimizeStatus::converged;
        st.at_rounding_floor = true;
        return st;
      }
    } else {
      Vec q = g;
      std::vector<double> alphas(memory.size());
      for (std::size_t i = memory.size(); i-- > 0;) {
        const auto& [s, y] = memory[i];
        alphas[i] = s.dot(q) / y.dot(s);
        q -= alphas[i] * y;
      }
      if (!memory.empty()) {
        const auto& [s, y] = memory.back();
        q *= s.dot(y) / y.dot(y);
      } else {
        q *= 1.0 / std::fmax(1.0, g.norm());
      }
      for (std::size_t i = 0; i < memory.size(); ++i) {
        const auto& [s, y] = memory[i];
        const double beta = y.dot(q) / y.dot(s);
        q += (alphas[i] - beta) * s;
      }
      dir = -q;
      if (!(g.dot(dir) < 0.0)) {
        memory.clear();
        dir = -g / std::fmax(1.0, g.norm());
      }
    }

    const double step = detail::armijo(prob, x, f, g, dir, x_new, f_new);
    if (step == 0.0) {
      st.status = MinimizeStatus::stalled;
      return st;
    }
    Vec g_new = prob.gradient(x_new);
    if (opt.kind == SolverKind::lbfgs) {
      Vec s = x_new - x;
      Vec y = g_new - g;
      if (y.dot(s) > 1e-300) {
        memory.emplace_back(std::move(s), std::move(y));
        if (memory.size() > kMemory) memory.pop_front();
      }
    }
    stagnating = g_new.norm() > 0.5 * g.norm();
    x = x_new;
    f = f_new;
    g = std::move(g_new);
  }
  st.value = f;
  st.grad_norm = g.norm();
  st.status = st.grad_norm <= target ? MinimizeStatus::converged : MinimizeStatus::max_iters;
  return st;
}

}  // namespace viscoflow
