#pragma once

// Uniform tensor-product grids on the unit cube, nodal vector fields with
// clamped boundary layers, and the discrete differential operators
// (gradient at quadrature points, second gradient per cell) as sparse maps.

#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "viscoflow/error.hpp"
#include "viscoflow/tensor.hpp"

namespace viscoflow {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Index3 = std::array<int, 3>;

class Grid {
 public:
  Grid() = default;
  Grid(int dim, int n) : dim_(dim), n_(n), h_(1.0 / n) {
    check_dim(dim);
    if (n < 8) throw InvalidArgument("grid needs at least 8 cells per axis");
    if (h_ * n != 1.0) throw InvalidArgument("cell count must satisfy h*n == 1 exactly");
  }

  int dim() const { return dim_; }
  int n() const { return n_; }
  double h() const { return h_; }
  int nodes_per_axis() const { return n_ + 1; }

  std::size_t num_nodes() const { return ipow(n_ + 1); }
  std::size_t num_cells() const { return ipow(n_); }
  /// 1 midpoint in 1D; 2^d Gauss points of the multilinear interpolant otherwise.
  int qp_per_cell() const { return dim_ == 1 ? 1 : (1 << dim_); }
  std::size_t num_qp() const { return num_cells() * qp_per_cell(); }
  /// h^d, the cell measure.
  double cell_volume() const { return std::pow(h_, dim_); }

  Index3 node_multi(std::size_t node) const { return unflatten(node, n_ + 1); }
  std::size_t node_index(const Index3& m) const { return flatten(m, n_ + 1); }
  Index3 cell_multi(std::size_t cell) const { return unflatten(cell, n_); }

  double coord(int i) const { return static_cast<double>(i) / n_; }

  /// Minimal distance (in node layers) from the boundary.
  int boundary_depth(std::size_t node) const {
    const Index3 m = node_multi(node);
    int depth = n_;
    for (int a = 0; a < dim_; ++a) depth = std::min({depth, m[a], n_ - m[a]});
    return depth;
  }

  bool operator==(const Grid& o) const { return dim_ == o.dim_ && n_ == o.n_; }
  bool operator!=(const Grid& o) const { return !(*this == o); }

 private:
  std::size_t ipow(int base) const {
    std::size_t r = 1;
    for (int a = 0; a < dim_; ++a) r *= static_cast<std::size_t>(base);
    return r;
  }
  Index3 unflatten(std::size_t flat, int extent) const {
    Index3 m{0, 0, 0};
    for (int a = 0; a < dim_; ++a) {
      m[a] = static_cast<int>(flat % extent);
      flat /= extent;
    }
    return m;
  }
  std::size_t flatten(const Index3& m, int extent) const {
    std::size_t flat = 0;
    for (int a = dim_ - 1; a >= 0; --a) flat = flat * extent + static_cast<std::size_t>(m[a]);
    return flat;
  }

  int dim_ = 1;
  int n_ = 8;
  double h_ = 0.125;
};

enum class FieldKind { deformation, displacement };

/// Nodal vector field. Nodes within `clamp` layers of the boundary carry the
/// prescribed value (the node position for deformations, zero for
/// displacements) and every constructor re-imposes it exactly.
class Field {
 public:
  Field() = default;
  Field(const Grid& grid, FieldKind kind, int clamp)
      : grid_(grid), kind_(kind), clamp_(clamp), v_(grid.num_nodes() * grid.dim(), 0.0) {
    if (clamp < 1 || 2 * clamp > grid.n() - 2)
      throw InvalidArgument("clamp depth incompatible with grid size");
    impose_clamp();
  }

  static Field identity(const Grid& grid, int clamp = 2) {
    Field f(grid, FieldKind::deformation, clamp);
    for (std::size_t node = 0; node < grid.num_nodes(); ++node)
      for (int i = 0; i < grid.dim(); ++i) f.at(node, i) = f.prescribed(node, i);
    return f;
  }

  static Field zero(const Grid& grid, int clamp = 1) {
    return Field(grid, FieldKind::displacement, clamp);
  }

  /// Samples fn(x) -> std::array<double,3> at the nodes, then re-clamps.
  template <class Fn>
  static Field from_function(const Grid& grid, FieldKind kind, int clamp, Fn&& fn) {
    Field f(grid, kind, clamp);
    std::array<double, 3> x{0.0, 0.0, 0.0};
    for (std::size_t node = 0; node < grid.num_nodes(); ++node) {
      const Index3 m = grid.node_multi(node);
      for (int a = 0; a < grid.dim(); ++a) x[a] = grid.coord(m[a]);
      const std::array<double, 3> val = fn(x);
      for (int i = 0; i < grid.dim(); ++i) f.at(node, i) = val[i];
    }
    f.impose_clamp();
    return f;
  }

  const Grid& grid() const { return grid_; }
  FieldKind kind() const { return kind_; }
  int clamp() const { return clamp_; }
  int dim() const { return grid_.dim(); }

  double& at(std::size_t node, int comp) { return v_[node * grid_.dim() + comp]; }
  double at(std::size_t node, int comp) const { return v_[node * grid_.dim() + comp]; }

  std::span<double> values() { return v_; }
  std::span<const double> values() const { return v_; }
  Eigen::Map<const Vec> vec() const { return {v_.data(), static_cast<Eigen::Index>(v_.size())}; }
  Eigen::Map<Vec> vec() { return {v_.data(), static_cast<Eigen::Index>(v_.size())}; }

  bool is_clamped_node(std::size_t node) const { return grid_.boundary_depth(node) < clamp_; }

  double prescribed(std::size_t node, int comp) const {
    if (kind_ == FieldKind::displacement) return 0.0;
    return grid_.coord(grid_.node_multi(node)[comp]);
  }

  void impose_clamp() {
    for (std::size_t node = 0; node < grid_.num_nodes(); ++node)
      if (is_clamped_node(node))
        for (int i = 0; i < grid_.dim(); ++i) at(node, i) = prescribed(node, i);
  }

  /// Bit-exact check of the clamped layers.
  bool clamp_intact() const {
    for (std::size_t node = 0; node < grid_.num_nodes(); ++node)
      if (is_clamped_node(node))
        for (int i = 0; i < grid_.dim(); ++i)
          if (at(node, i) != prescribed(node, i)) return false;
    return true;
  }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

 private:
  Grid grid_;
  FieldKind kind_ = FieldKind::displacement;
  int clamp_ = 1;
  std::vector<double> v_;
};

/// a*f + b*g with the clamped layers of f re-imposed.
inline Field combine(double a, const Field& f, double b, const Field& g) {
  if (f.grid() != g.grid()) throw GridMismatch("combine: fields live on different grids");
  Field r = f;
  auto out = r.values();
  auto fv = f.values();
  auto gv = g.values();
  for (std::size_t q = 0; q < out.size(); ++q) out[q] = a * fv[q] + b * gv[q];
  r.impose_clamp();
  return r;
}

/// u = (y - id) / delta
inline Field to_displacement(const Field& y, double delta) {
  Field u(y.grid(), FieldKind::displacement, y.clamp());
  for (std::size_t node = 0; node < y.grid().num_nodes(); ++node)
    for (int i = 0; i < y.dim(); ++i)
      u.at(node, i) = (y.at(node, i) - y.prescribed(node, i)) / delta;
  u.impose_clamp();
  return u;
}

/// y = id + delta * u
inline Field to_deformation(const Field& u, double delta, int clamp) {
  Field y = Field::identity(u.grid(), clamp);
  for (std::size_t node = 0; node < u.grid().num_nodes(); ++node)
    if (!y.is_clamped_node(node))
      for (int i = 0; i < u.dim(); ++i) y.at(node, i) += delta * u.at(node, i);
  return y;
}

// ---------------------------------------------------------------------------
// Discrete operators

/// Sparse operators acting on nodal vectors (layout node * d + component).
///   grad   : rows (qp, i, k)     -> d_k y_i at each quadrature point
///   hess   : rows (cell, i, j, k) -> d_jk y_i, nodal second differences
///            averaged over the cell corners
///   interp : rows (qp, i)        -> y_i at each quadrature point
struct DiscreteOps {
  Grid grid;
  SpMat grad;
  SpMat hess;
  SpMat interp;

  explicit DiscreteOps(const Grid& g) : grid(g) {
    build_grad_interp();
    build_hess();
  }

 private:
  void build_grad_interp() {
    const int d = grid.dim();
    const int q = grid.qp_per_cell();
    const int corners = 1 << d;
    const double h = grid.h();
    const double gauss = 0.5 / std::sqrt(3.0);

    // Reference shape values/gradients at each quadrature point.
    std::vector<std::vector<double>> shape(q, std::vector<double>(corners));
    std::vector<std::vector<std::array<double, 3>>> dshape(
        q, std::vector<std::array<double, 3>>(corners));
    for (int g = 0; g < q; ++g) {
      std::array<double, 3> xi{0.5, 0.5, 0.5};
      if (d > 1)
        for (int a = 0; a < d; ++a) xi[a] = ((g >> a) & 1) ? 0.5 + gauss : 0.5 - gauss;
      for (int c = 0; c < corners; ++c) {
        double n = 1.0;
        for (int a = 0; a < d; ++a) n *= ((c >> a) & 1) ? xi[a] : 1.0 - xi[a];
        shape[g][c] = n;
        for (int k = 0; k < d; ++k) {
          double dn = ((c >> k) & 1) ? 1.0 / h : -1.0 / h;
          for (int a = 0; a < d; ++a)
            if (a != k) dn *= ((c >> a) & 1) ? xi[a] : 1.0 - xi[a];
          dshape[g][c][k] = dn;
        }
      }
    }

    std::vector<Eigen::Triplet<double>> tg, ti;
    tg.reserve(grid.num_qp() * d * d * corners);
    ti.reserve(grid.num_qp() * d * corners);
    for (std::size_t cell = 0; cell < grid.num_cells(); ++cell) {
      const Index3 base = grid.cell_multi(cell);
      for (int g = 0; g < q; ++g) {
        const std::size_t qp = cell * q + g;
        for (int c = 0; c < corners; ++c) {
          Index3 m = base;
          for (int a = 0; a < d; ++a) m[a] += (c >> a) & 1;
          const std::size_t node = grid.node_index(m);
          for (int i = 0; i < d; ++i) {
            const auto col = static_cast<int>(node * d + i);
            ti.emplace_back(static_cast<int>(qp * d + i), col, shape[g][c]);
            for (int k = 0; k < d; ++k)
              tg.emplace_back(static_cast<int>((qp * d + i) * d + k), col, dshape[g][c][k]);
          }
        }
      }
    }
    const auto cols = static_cast<int>(grid.num_nodes() * d);
    grad.resize(static_cast<int>(grid.num_qp() * d * d), cols);
    grad.setFromTriplets(tg.begin(), tg.end());
    interp.resize(static_cast<int>(grid.num_qp() * d), cols);
    interp.setFromTriplets(ti.begin(), ti.end());
  }

  void build_hess() {
    const int d = grid.dim();
    const int n = grid.n();
    const int corners = 1 << d;
    const double h2 = grid.h() * grid.h();
    const double avg = 1.0 / corners;

    std::vector<Eigen::Triplet<double>> t;
    auto add = [&](std::size_t row_base, const Index3& m, double w, int i) {
      t.emplace_back(static_cast<int>(row_base), static_cast<int>(grid.node_index(m) * d + i), w);
    };
    for (std::size_t cell = 0; cell < grid.num_cells(); ++cell) {
      const Index3 base = grid.cell_multi(cell);
      for (int c = 0; c < corners; ++c) {
        Index3 node = base;
        for (int a = 0; a < d; ++a) node[a] += (c >> a) & 1;
        // Stencil centers are clamped into [1, n-1] so boundary nodes reuse the
        // one-sided (shifted) second difference; exact for quadratics.
        Index3 ctr = node;
        for (int a = 0; a < d; ++a) ctr[a] = std::clamp(node[a], 1, n - 1);
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
              const std::size_t row = ((cell * d + i) * d + j) * d + k;
              if (j == k) {
                Index3 m = node;
                m[j] = ctr[j] - 1;
                add(row, m, avg / h2, i);
                m[j] = ctr[j];
                add(row, m, -2.0 * avg / h2, i);
                m[j] = ctr[j] + 1;
                add(row, m, avg / h2, i);
              } else {
                const double w = avg / (4.0 * h2);
                for (int sj : {-1, 1})
                  for (int sk : {-1, 1}) {
                    Index3 m = node;
                    m[j] = ctr[j] + sj;
                    m[k] = ctr[k] + sk;
                    add(row, m, sj * sk * w, i);
                  }
              }
            }
      }
    }
    hess.resize(static_cast<int>(grid.num_cells() * d * d * d),
                static_cast<int>(grid.num_nodes() * d));
    hess.setFromTriplets(t.begin(), t.end());
  }
};

/// Shared, immutable operator set per grid.
inline std::shared_ptr<const DiscreteOps> ops_for(const Grid& grid) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const DiscreteOps>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{grid.dim(), grid.n()}];
  if (!slot) slot = std::make_shared<const DiscreteOps>(grid);
  return slot;
}

/// Free (non-clamped) degrees of freedom of a grid for a given clamp depth.
class DofMap {
 public:
  DofMap(const Grid& grid, int clamp) : grid_(grid), clamp_(clamp) {
    const int d = grid.dim();
    for (std::size_t node = 0; node < grid.num_nodes(); ++node)
      if (grid.boundary_depth(node) >= clamp)
        for (int i = 0; i < d; ++i) free_.push_back(static_cast<int>(node * d + i));
    std::vector<Eigen::Triplet<double>> t;
    for (std::size_t q = 0; q < free_.size(); ++q) t.emplace_back(free_[q], static_cast<int>(q), 1.0);
    select_.resize(static_cast<int>(grid.num_nodes() * d), static_cast<int>(free_.size()));
    select_.setFromTriplets(t.begin(), t.end());
  }

  const Grid& grid() const { return grid_; }
  int clamp() const { return clamp_; }
  std::size_t size() const { return free_.size(); }
  /// full nodal vector <- free vector (columns of the identity)
  const SpMat& extension() const { return select_; }

  Vec gather(const Field& f) const {
    Vec x(static_cast<Eigen::Index>(free_.size()));
    auto v = f.values();
    for (std::size_t q = 0; q < free_.size(); ++q) x[static_cast<Eigen::Index>(q)] = v[free_[q]];
    return x;
  }

  void scatter(const Vec& x, Field& f) const {
    auto v = f.values();
    for (std::size_t q = 0; q < free_.size(); ++q) v[free_[q]] = x[static_cast<Eigen::Index>(q)];
  }

  void scatter(const Vec& x, Vec& full) const {
    for (std::size_t q = 0; q < free_.size(); ++q) full[free_[q]] = x[static_cast<Eigen::Index>(q)];
  }

  Vec restrict_full(const Vec& full) const {
    Vec x(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t q = 0; q < free_.size(); ++q) x[static_cast<Eigen::Index>(q)] = full[free_[q]];
    return x;
  }

 private:
  Grid grid_;
  int clamp_;
  std::vector<int> free_;
  SpMat select_;
};

// ---------------------------------------------------------------------------
// Cell tensors and the basic discrete calculus

struct CellTensors {
  Grid grid;
  int qp_per_cell = 1;
  std::vector<Mat> grad;   // per quadrature point
  std::vector<Ten3> hess;  // per cell
};

inline std::vector<Mat> unpack_mats(const Vec& packed, int d) {
  const int m = d * d;
  std::vector<Mat> out(static_cast<std::size_t>(packed.size() / m), Mat(d));
  for (std::size_t q = 0; q < out.size(); ++q)
    for (int e = 0; e < m; ++e) out[q][e] = packed[static_cast<Eigen::Index>(q * m + e)];
  return out;
}

inline std::vector<Ten3> unpack_ten3(const Vec& packed, int d) {
  const int m = d * d * d;
  std::vector<Ten3> out(static_cast<std::size_t>(packed.size() / m), Ten3(d));
  for (std::size_t q = 0; q < out.size(); ++q)
    for (int e = 0; e < m; ++e) out[q][e] = packed[static_cast<Eigen::Index>(q * m + e)];
  return out;
}

inline CellTensors gradients(const Field& f) {
  const auto ops = ops_for(f.grid());
  const Vec v = f.vec();
  CellTensors ct;
  ct.grid = f.grid();
  ct.qp_per_cell = f.grid().qp_per_cell();
  ct.grad = unpack_mats(ops->grad * v, f.dim());
  ct.hess = unpack_ten3(ops->hess * v, f.dim());
  return ct;
}

/// Midpoint rule h^d * sum of per-cell values; fixed summation order.
inline double integrate(const Grid& grid, std::span<const double> cellvals) {
  if (cellvals.size() != grid.num_cells()) throw InvalidArgument("integrate: one value per cell");
  double s = 0.0;
  for (double v : cellvals) s += v;
  return grid.cell_volume() * s;
}

/// Same rule for quadrature-point values (equal weights within a cell).
inline double integrate_qp(const Grid& grid, std::span<const double> qpvals) {
  if (qpvals.size() != grid.num_qp()) throw InvalidArgument("integrate_qp: one value per point");
  double s = 0.0;
  for (double v : qpvals) s += v;
  return grid.cell_volume() * s / grid.qp_per_cell();
}

struct NormPair {
  double L2 = 0.0;
  double H1 = 0.0;
};

/// Discrete L2 and H1 norms of f - g (values interpolated to quadrature points).
inline NormPair norms(const Field& f, const Field& g) {
  if (f.grid() != g.grid()) throw GridMismatch("norms: fields live on different grids");
  const auto ops = ops_for(f.grid());
  const Vec diff = f.vec() - g.vec();
  const double w = f.grid().cell_volume() / f.grid().qp_per_cell();
  const double l2sq = w * (ops->interp * diff).squaredNorm();
  const double gsq = w * (ops->grad * diff).squaredNorm();
  return {std::sqrt(l2sq), std::sqrt(l2sq + gsq)};
}

inline double h1_distance(const Field& f, const Field& g) { return norms(f, g).H1; }

/// Discrete H2 norm (H1 plus the L2 norm of the cellwise second gradient).
inline double h2_norm(const Field& f) {
  const auto ops = ops_for(f.grid());
  const Vec v = f.vec();
  const double w = f.grid().cell_volume() / f.grid().qp_per_cell();
  const double l2sq = w * (ops->interp * v).squaredNorm();
  const double gsq = w * (ops->grad * v).squaredNorm();
  const double hsq = f.grid().cell_volume() * (ops->hess * v).squaredNorm();
  return std::sqrt(l2sq + gsq + hsq);
}

inline double det_min(const CellTensors& ct) {
  double m = INFINITY;
  for (const Mat& f : ct.grad) m = std::fmin(m, f.det());
  return m;
}

/// True iff det(grad y) > 0 at every quadrature point.
inline bool det_guard(const CellTensors& ct) {
  for (const Mat& f : ct.grad)
    if (!(f.det() > 0.0)) return false;
  return true;
}

}  // namespace viscoflow
