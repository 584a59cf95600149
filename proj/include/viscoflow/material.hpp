#pragma once

// Pointwise constitutive laws: stored energy W, second-gradient penalty P,
// dissipation distance D (always handled through D^2), the viscosity
// potential R and the linearized tensors C_W, C_D, H_Y.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <utility>

#include "viscoflow/error.hpp"
#include "viscoflow/tensor.hpp"

namespace viscoflow {

struct MaterialBundle {
  int dim = 1;
  double p = 2.0;  // second-gradient growth exponent, p > dim

  std::function<double(const Mat&)> W;
  std::function<Mat(const Mat&)> grad_W;
  /// (F, K) -> d^2 W(F)[K]
  std::function<Mat(const Mat&, const Mat&)> hess_W;

  std::function<double(const Ten3&)> P;
  std::function<Ten3(const Ten3&)> grad_P;
  /// (G, K) -> d^2 P(G)[K]
  std::function<Ten3(const Ten3&, const Ten3&)> hess_P;

  std::function<double(const Mat&, const Mat&)> D2;
  /// derivative of D^2 in its first slot
  std::function<Mat(const Mat&, const Mat&)> grad1_D2;
  /// (F1, F2, K) -> d^2_{F1 F1} D^2(F1, F2)[K]
  std::function<Mat(const Mat&, const Mat&, const Mat&)> hess11_D2;

  Ten4 Cw;  // d^2 W(Id)
  Ten4 Cd;  // 1/2 d^2_{F1 F1} D^2(Id, Id)
};

/// Packs a linear map on matrices into the tensor T with T_{ijkl} = (L e_kl)_{ij}.
template <class Action>
Ten4 tensor_from_action(int d, Action&& action) {
  Ten4 t(d);
  for (int k = 0; k < d; ++k)
    for (int l = 0; l < d; ++l) {
      const Mat col = action(Mat::unit(d, k, l));
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) t(i, j, k, l) = col(i, j);
    }
  return t;
}

/// Reference bundle
///   W(F)      = 1/8 |F^T F - Id|^2
///   P(G)      = |G|^p
///   D(F1, F2) = |F1^T F1 - F2^T F2|
/// so that C_W[H,H] = |sym H|^2 and C_D[H,H] = 4 |sym H|^2.
inline MaterialBundle reference_bundle(int d, double p) {
  check_dim(d);
  if (!(p > d)) throw InvalidArgument("second-gradient exponent must satisfy p > d");

  MaterialBundle b;
  b.dim = d;
  b.p = p;

  const Mat id = Mat::identity(d);
  auto strain = [id](const Mat& f) { return f.transpose() * f - id; };

  b.W = [strain](const Mat& f) {
    const Mat e = strain(f);
    return 0.125 * ddot(e, e);
  };
  b.grad_W = [strain](const Mat& f) { return 0.5 * (f * strain(f)); };
  b.hess_W = [strain](const Mat& f, const Mat& k) {
    const Mat e = strain(f);
    return 0.5 * (k * e) + 0.5 * (f * (k.transpose() * f + f.transpose() * k));
  };

  b.P = [p](const Ten3& g) { return std::pow(ddot(g, g), 0.5 * p); };
  b.grad_P = [p](const Ten3& g) {
    const double n2 = ddot(g, g);
    if (n2 == 0.0) return Ten3(g.dim());
    return (p * std::pow(n2, 0.5 * (p - 2.0))) * g;
  };
  b.hess_P = [p](const Ten3& g, const Ten3& k) {
    // |G|^{p-2} is singular at 0 for p < 2; floor the norm there.
    const double n2 = std::fmax(ddot(g, g), p < 2.0 ? 1e-24 : 0.0);
    if (n2 == 0.0) return p == 2.0 ? 2.0 * k : Ten3(g.dim());
    Ten3 r = (p * std::pow(n2, 0.5 * (p - 2.0))) * k;
    if (p != 2.0) r += (p * (p - 2.0) * std::pow(n2, 0.5 * (p - 4.0)) * ddot(g, k)) * g;
    return r;
  };

  b.D2 = [](const Mat& f1, const Mat& f2) {
    const Mat c = f1.transpose() * f1 - f2.transpose() * f2;
    return ddot(c, c);
  };
  b.grad1_D2 = [](const Mat& f1, const Mat& f2) {
    const Mat c = f1.transpose() * f1 - f2.transpose() * f2;
    return 4.0 * (f1 * c);
  };
  b.hess11_D2 = [](const Mat& f1, const Mat& f2, const Mat& k) {
    const Mat c = f1.transpose() * f1 - f2.transpose() * f2;
    return 4.0 * (k * c) + 4.0 * (f1 * (k.transpose() * f1 + f1.transpose() * k));
  };

  b.Cw = tensor_from_action(d, [&](const Mat& k) { return b.hess_W(id, k); });
  b.Cd = tensor_from_action(d, [&](const Mat& k) { return 0.5 * b.hess11_D2(id, id, k); });
  return b;
}

inline double dissipation_distance_sq(const MaterialBundle& b, const Mat& f1, const Mat& f2) {
  return b.D2(f1, f2);
}

/// R(F, Fdot) = 1/4 d^2_{F1 F1} D^2(F, F)[Fdot, Fdot]
inline double viscosity_potential(const MaterialBundle& b, const Mat& f, const Mat& fdot) {
  return 0.25 * ddot(fdot, b.hess11_D2(f, f, fdot));
}

/// Viscous stress d_{Fdot} R(F, Fdot) = H_F Fdot.
inline Mat viscous_stress(const MaterialBundle& b, const Mat& f, const Mat& fdot) {
  return 0.5 * b.hess11_D2(f, f, fdot);
}

inline std::pair<Ten4, Ten4> hessian_tensors(const MaterialBundle& b) { return {b.Cw, b.Cd}; }

/// H_Y = 1/2 d^2_{F1 F1} D^2(Y, Y). Refuses Y with |Y - Id|_F > guard_radius.
inline Ten4 metric_tensor(const MaterialBundle& b, const Mat& y, double guard_radius) {
  if (norm(y - Mat::identity(y.dim())) > guard_radius)
    throw OutOfNeighborhood("metric tensor requested outside the guarded neighborhood of Id");
  if (!(y.det() > 0.0)) throw DetGuardViolation("metric tensor requires det Y > 0");
  return tensor_from_action(b.dim, [&](const Mat& k) { return 0.5 * b.hess11_D2(y, y, k); });
}

/// Hyperstress d_G P(G).
inline Ten3 hyperstress(const MaterialBundle& b, const Ten3& g) { return b.grad_P(g); }

// ---------------------------------------------------------------------------
// Small dense helpers

inline Eigen::MatrixXd to_eigen(const Mat& a) {
  Eigen::MatrixXd m(a.dim(), a.dim());
  for (int i = 0; i < a.dim(); ++i)
    for (int k = 0; k < a.dim(); ++k) m(i, k) = a(i, k);
  return m;
}

inline Mat from_eigen(const Eigen::MatrixXd& m) {
  Mat a(static_cast<int>(m.rows()));
  for (int i = 0; i < a.dim(); ++i)
    for (int k = 0; k < a.dim(); ++k) a(i, k) = m(i, k);
  return a;
}

/// Closest rotation (polar factor with the det-sign correction).
inline Mat nearest_rotation(const Mat& f) {
  const Eigen::MatrixXd m = to_eigen(f);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::MatrixXd u = svd.matrixU();
  const Eigen::MatrixXd v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(f.dim() - 1) *= -1.0;
  return from_eigen(u * v.transpose());
}

inline double dist_to_SO(const Mat& f) { return norm(f - nearest_rotation(f)); }

/// Smallest eigenvalue of the quadratic form T restricted to symmetric matrices.
inline double min_symmetric_eigenvalue(const Ten4& t) {
  const int d = t.dim();
  std::vector<Mat> basis;
  for (int i = 0; i < d; ++i) basis.push_back(Mat::unit(d, i, i));
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      basis.push_back((Mat::unit(d, i, j) + Mat::unit(d, j, i)) * (1.0 / std::sqrt(2.0)));
  const int m = static_cast<int>(basis.size());
  Eigen::MatrixXd g(m, m);
  for (int a = 0; a < m; ++a)
    for (int c = 0; c < m; ++c) g(a, c) = t.form(basis[a], basis[c]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (g + g.transpose()));
  return es.eigenvalues().minCoeff();
}

/// Uniformly distributed rotation in SO(d).
template <class Rng>
Mat random_rotation(int d, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) a(i, k) = n01(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int k = 0; k < d; ++k)
    if (r(k, k) < 0.0) q.col(k) *= -1.0;
  if (q.determinant() < 0.0) q.col(0) *= -1.0;
  return from_eigen(q);
}

}  // namespace viscoflow
