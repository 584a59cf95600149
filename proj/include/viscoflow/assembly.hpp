#pragma once

#include <Eigen/Dense>
#include <vector>

#include "viscoflow/discrete_space.hpp"

namespace viscoflow {

inline Vec pack(const std::vector<Mat>& ms) {
  if (ms.empty()) return {};
  const int m = ms.front().size();
  Vec v(static_cast<Eigen::Index>(ms.size() * m));
  for (std::size_t q = 0; q < ms.size(); ++q)
    for (int e = 0; e < m; ++e) v[static_cast<Eigen::Index>(q * m + e)] = ms[q][e];
  return v;
}

inline Vec pack(const std::vector<Ten3>& ts) {
  if (ts.empty()) return {};
  const int m = ts.front().size();
  Vec v(static_cast<Eigen::Index>(ts.size() * m));
  for (std::size_t q = 0; q < ts.size(); ++q)
    for (int e = 0; e < m; ++e) v[static_cast<Eigen::Index>(q * m + e)] = ts[q][e];
  return v;
}

/// Dense matrix of a linear map on d x d matrices in packed coordinates.
template <class Action>
Eigen::MatrixXd mat_tangent(int d, Action&& action) {
  const int m = d * d;
  Eigen::MatrixXd k(m, m);
  for (int b = 0; b < m; ++b) {
    Mat e(d);
    e[b] = 1.0;
    const Mat col = action(e);
    for (int a = 0; a < m; ++a) k(a, b) = col[a];
  }
  return k;
}

template <class Action>
Eigen::MatrixXd ten3_tangent(int d, Action&& action) {
  const int m = d * d * d;
  Eigen::MatrixXd k(m, m);
  for (int b = 0; b < m; ++b) {
    Ten3 e(d);
    e[b] = 1.0;
    const Ten3 col = action(e);
    for (int a = 0; a < m; ++a) k(a, b) = col[a];
  }
  return k;
}

/// Block-diagonal sparse matrix; block(i) returns the i-th m x m block.
template <class BlockFn>
SpMat block_diagonal(std::size_t blocks, int m, BlockFn&& block) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(blocks * m * m);
  for (std::size_t i = 0; i < blocks; ++i) {
    const Eigen::MatrixXd b = block(i);
    const auto off = static_cast<int>(i * m);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c)
        if (b(r, c) != 0.0) t.emplace_back(off + r, off + c, b(r, c));
  }
  SpMat out(static_cast<int>(blocks * m), static_cast<int>(blocks * m));
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

/// G^T B G for a symmetric block-diagonal B, symmetrized against roundoff.
inline SpMat congruence(const SpMat& g, const SpMat& b) {
  SpMat k = SpMat(g.transpose()) * (b * g);
  SpMat kt = k.transpose();
  return 0.5 * (k + kt);
}

}  // namespace viscoflow
