#pragma once

// Small runtime-dimension tensors (d <= 3) for pointwise constitutive laws.
// Storage is dense row-major with stride d, so the first d*d (d^3, d^4)
// entries of the backing array are exactly the packed tensor.

#include <array>
#include <cassert>
#include <cmath>

#include "viscoflow/error.hpp"

namespace viscoflow {

inline constexpr int kMaxDim = 3;

inline void check_dim(int d) {
  if (d < 1 || d > kMaxDim) throw InvalidArgument("dimension must be 1, 2 or 3");
}

/// d x d matrix; placeholder for deformation gradients F and rates Fdot.
class Mat {
 public:
  Mat() = default;
  explicit Mat(int dim) : dim_(dim) { check_dim(dim); }

  static Mat identity(int dim) {
    Mat m(dim);
    for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
  }

  /// Matrix with a single unit entry at (i, k).
  static Mat unit(int dim, int i, int k) {
    Mat m(dim);
    m(i, k) = 1.0;
    return m;
  }

  int dim() const { return dim_; }
  int size() const { return dim_ * dim_; }

  double& operator()(int i, int k) { return a_[i * dim_ + k]; }
  double operator()(int i, int k) const { return a_[i * dim_ + k]; }
  double& operator[](int flat) { return a_[flat]; }
  double operator[](int flat) const { return a_[flat]; }

  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }

  Mat transpose() const {
    Mat t(dim_);
    for (int i = 0; i < dim_; ++i)
      for (int k = 0; k < dim_; ++k) t(k, i) = (*this)(i, k);
    return t;
  }

  double trace() const {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += (*this)(i, i);
    return s;
  }

  double det() const {
    const Mat& m = *this;
    switch (dim_) {
      case 1:
        return m(0, 0);
      case 2:
        return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
      default:
        return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
               m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
               m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    }
  }

  Mat& operator+=(const Mat& o) {
    for (int q = 0; q < size(); ++q) a_[q] += o.a_[q];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    for (int q = 0; q < size(); ++q) a_[q] -= o.a_[q];
    return *this;
  }
  Mat& operator*=(double s) {
    for (int q = 0; q < size(); ++q) a_[q] *= s;
    return *this;
  }

 private:
  int dim_ = 1;
  std::array<double, 9> a_{};
};

inline Mat operator+(Mat a, const Mat& b) { return a += b; }
inline Mat operator-(Mat a, const Mat& b) { return a -= b; }
inline Mat operator*(Mat a, double s) { return a *= s; }
inline Mat operator*(double s, Mat a) { return a *= s; }
inline Mat operator-(Mat a) { return a *= -1.0; }

inline Mat operator*(const Mat& a, const Mat& b) {
  const int d = a.dim();
  Mat c(d);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += a(i, j) * b(j, k);
      c(i, k) = s;
    }
  return c;
}

/// Frobenius inner product A : B.
inline double ddot(const Mat& a, const Mat& b) {
  double s = 0.0;
  for (int q = 0; q < a.size(); ++q) s += a[q] * b[q];
  return s;
}

inline double norm(const Mat& a) { return std::sqrt(ddot(a, a)); }

inline Mat sym(const Mat& a) { return 0.5 * (a + a.transpose()); }
inline Mat skew(const Mat& a) { return 0.5 * (a - a.transpose()); }

/// Third-order tensor G_{ijk}; placeholder for second gradients.
class Ten3 {
 public:
  Ten3() = default;
  explicit Ten3(int dim) : dim_(dim) { check_dim(dim); }

  int dim() const { return dim_; }
  int size() const { return dim_ * dim_ * dim_; }

  double& operator()(int i, int j, int k) { return a_[(i * dim_ + j) * dim_ + k]; }
  double operator()(int i, int j, int k) const { return a_[(i * dim_ + j) * dim_ + k]; }
  double& operator[](int flat) { return a_[flat]; }
  double operator[](int flat) const { return a_[flat]; }

  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }

  Ten3& operator+=(const Ten3& o) {
    for (int q = 0; q < size(); ++q) a_[q] += o.a_[q];
    return *this;
  }
  Ten3& operator-=(const Ten3& o) {
    for (int q = 0; q < size(); ++q) a_[q] -= o.a_[q];
    return *this;
  }
  Ten3& operator*=(double s) {
    for (int q = 0; q < size(); ++q) a_[q] *= s;
    return *this;
  }

 private:
  int dim_ = 1;
  std::array<double, 27> a_{};
};

inline Ten3 operator+(Ten3 a, const Ten3& b) { return a += b; }
inline Ten3 operator-(Ten3 a, const Ten3& b) { return a -= b; }
inline Ten3 operator*(Ten3 a, double s) { return a *= s; }
inline Ten3 operator*(double s, Ten3 a) { return a *= s; }

inline double ddot(const Ten3& a, const Ten3& b) {
  double s = 0.0;
  for (int q = 0; q < a.size(); ++q) s += a[q] * b[q];
  return s;
}

inline double norm(const Ten3& a) { return std::sqrt(ddot(a, a)); }

/// (Q G)_{ijk} = Q_{il} G_{ljk}: left action of a matrix on the first index.
inline Ten3 operator*(const Mat& q, const Ten3& g) {
  const int d = g.dim();
  Ten3 r(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) {
        double s = 0.0;
        for (int l = 0; l < d; ++l) s += q(i, l) * g(l, j, k);
        r(i, j, k) = s;
      }
  return r;
}

/// Fourth-order tensor, read as a bilinear form on d x d matrices.
class Ten4 {
 public:
  Ten4() = default;
  explicit Ten4(int dim) : dim_(dim) { check_dim(dim); }

  int dim() const { return dim_; }
  int size() const { return dim_ * dim_ * dim_ * dim_; }

  double& operator()(int i, int j, int k, int l) {
    return a_[((i * dim_ + j) * dim_ + k) * dim_ + l];
  }
  double operator()(int i, int j, int k, int l) const {
    return a_[((i * dim_ + j) * dim_ + k) * dim_ + l];
  }
  double& operator[](int flat) { return a_[flat]; }
  double operator[](int flat) const { return a_[flat]; }

  /// (T H)_{ij} = sum_{kl} T_{ijkl} H_{kl}
  Mat apply(const Mat& h) const {
    const int m = dim_ * dim_;
    Mat r(dim_);
    for (int a = 0; a < m; ++a) {
      double s = 0.0;
      for (int b = 0; b < m; ++b) s += a_[a * m + b] * h[b];
      r[a] = s;
    }
    return r;
  }

  /// T[A, B] = A : (T B)
  double form(const Mat& a, const Mat& b) const { return ddot(a, apply(b)); }

  double max_abs_diff(const Ten4& o) const {
    double m = 0.0;
    for (int q = 0; q < size(); ++q) m = std::fmax(m, std::fabs(a_[q] - o.a_[q]));
    return m;
  }

  double norm() const {
    double s = 0.0;
    for (int q = 0; q < size(); ++q) s += a_[q] * a_[q];
    return std::sqrt(s);
  }

 private:
  int dim_ = 1;
  std::array<double, 81> a_{};
};

inline Ten4 operator-(const Ten4& a, const Ten4& b) {
  Ten4 r(a.dim());
  for (int q = 0; q < a.size(); ++q) r[q] = a[q] - b[q];
  return r;
}

}  // namespace viscoflow
