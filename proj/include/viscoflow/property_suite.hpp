#pragma once

// Sampled property checks of the constitutive bundle and the discrete space,
// run by `viscoflow check`.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "viscoflow/discrete_space.hpp"
#include "viscoflow/material.hpp"

namespace viscoflow {

struct PropertyResult {
  std::string name;
  int samples = 0;
  double worst = 0.0;
  double tolerance = 0.0;

  bool passed() const { return worst <= tolerance; }
};

namespace props {

inline Mat random_mat(int d, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat a(d);
  for (int q = 0; q < d * d; ++q) a[q] = u(rng);
  return a;
}

inline Mat near_identity(int d, std::mt19937_64& rng) {
  for (;;) {
    Mat f = Mat::identity(d) + random_mat(d, rng, 0.3);
    if (f.det() > 0.1) return f;
  }
}

inline Ten3 random_ten3(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Ten3 g(d);
  for (int q = 0; q < d * d * d; ++q) g[q] = u(rng);
  return g;
}

/// Central differences of a scalar function over the entries of x.
template <class T, class F>
T fd_gradient(F&& f, const T& x, double step) {
  T g = x;
  for (int q = 0; q < x.size(); ++q) {
    T xp = x, xm = x;
    xp[q] += step;
    xm[q] -= step;
    g[q] = (f(xp) - f(xm)) / (2.0 * step);
  }
  return g;
}

template <class T>
double rel_diff(const T& a, const T& b) {
  double scale = 1.0, m = 0.0;
  for (int q = 0; q < a.size(); ++q) {
    scale = std::fmax(scale, std::fabs(b[q]));
    m = std::fmax(m, std::fabs(a[q] - b[q]));
  }
  return m / scale;
}

}  // namespace props

/// Material properties on `samples` random points per dimension d in {1,2},
/// followed by discrete-space properties.
inline std::vector<PropertyResult> run_property_suite(int samples = 1000, std::uint64_t seed = 1) {
  std::vector<PropertyResult> out;
  auto add = [&](std::string name, int n, double worst, double tol) {
    out.push_back({std::move(name), n, worst, tol});
  };

  for (int d = 1; d <= 2; ++d) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(d));
    const MaterialBundle b = reference_bundle(d, d + 1.0);
    const std::string tag = " d=" + std::to_string(d);
    double fw = 0, fp = 0, fd = 0, gw = 0, gp = 0, gd = 0, hw = 0;
    for (int s = 0; s < samples; ++s) {
      const Mat q1 = random_rotation(d, rng), q2 = random_rotation(d, rng);
      const Mat f = props::near_identity(d, rng), f2 = props::near_identity(d, rng);
      const Ten3 g = props::random_ten3(d, rng);
      fw = std::fmax(fw, std::fabs(b.W(q1 * f) - b.W(f)) / std::fmax(1.0, b.W(f)));
      fp = std::fmax(fp, std::fabs(b.P(q1 * g) - b.P(g)) / std::fmax(1.0, b.P(g)));
      fd = std::fmax(fd, std::fabs(b.D2(q1 * f, q2 * f2) - b.D2(f, f2)) / std::fmax(1.0, b.D2(f, f2)));
      gw = std::fmax(gw, props::rel_diff(b.grad_W(f), props::fd_gradient([&](const Mat& x) { return b.W(x); }, f, 1e-5)));
      gp = std::fmax(gp, props::rel_diff(b.grad_P(g), props::fd_gradient([&](const Ten3& x) { return b.P(x); }, g, 1e-5)));
      gd = std::fmax(gd, props::rel_diff(b.grad1_D2(f, f2),
                                         props::fd_gradient([&](const Mat& x) { return b.D2(x, f2); }, f, 1e-5)));
      const Mat k = props::random_mat(d, rng, 1.0);
      const Mat fdk = (1.0 / 2e-5) * (b.grad_W(f + 1e-5 * k) - b.grad_W(f - 1e-5 * k));
      hw = std::fmax(hw, props::rel_diff(b.hess_W(f, k), fdk));
    }
    add("frame indifference W" + tag, samples, fw, 1e-12);
    add("frame indifference P" + tag, samples, fp, 1e-12);
    add("frame indifference D" + tag, samples, fd, 1e-12);
    add("grad W vs differences" + tag, samples, gw, 1e-6);
    add("grad P vs differences" + tag, samples, gp, 1e-6);
    add("grad D2 vs differences" + tag, samples, gd, 1e-6);
    add("hess W vs differences" + tag, samples, hw, 1e-6);

    // Cw and Cd see only symmetric parts.
    double sk = 0.0;
    for (int s = 0; s < 20; ++s) {
      const Mat a = skew(props::random_mat(d, rng, 1.0));
      sk = std::fmax(sk, norm(b.Cd.apply(a)) + norm(b.Cw.apply(a)));
    }
    add("C_W and C_D vanish on skew" + tag, 20, sk, 1e-12);

    // D^2(Y + eps K, Y) / eps^2 -> 1/2 d^2_{F1F1} D^2(Y, Y)[K, K], and
    // R(F, Fdot) = D^2(F + eps Fdot, F) / (2 eps^2) + O(eps) with the sup
    // over samples falling like eps.
    const double eps[3] = {1e-2, 1e-3, 1e-4};
    double hq = 0.0, sup[3] = {0.0, 0.0, 0.0};
    for (int s = 0; s < 100; ++s) {
      const Mat y = props::near_identity(d, rng);
      const Mat k = props::random_mat(d, rng, 1.0);
      const double form = 0.5 * ddot(k, b.hess11_D2(y, y, k));
      hq = std::fmax(hq, std::fabs(b.D2(y + 1e-4 * k, y) / 1e-8 - form) / std::fmax(1.0, form));
      const double r = viscosity_potential(b, y, k);
      for (int e = 0; e < 3; ++e)
        sup[e] = std::fmax(sup[e], std::fabs(r - b.D2(y + eps[e] * k, y) / (2.0 * eps[e] * eps[e])));
    }
    const double rate = (std::log(sup[0]) - std::log(sup[2])) / (std::log(eps[0]) - std::log(eps[2]));
    add("D2 quadratic expansion at (Y,Y)" + tag, 100, hq, 1e-3);
    add("R from D limit, |rate - 1|" + tag, 100, std::fabs(rate - 1.0), 0.1);
  }

  // Discrete space.
  std::mt19937_64 rng(seed + 100);
  for (int d = 1; d <= 2; ++d) {
    const Grid g(d, 8);
    const std::string tag = " d=" + std::to_string(d);
    const auto ct = gradients(Field::identity(g));
    double ae = 0.0;
    for (const Mat& f : ct.grad) ae = std::fmax(ae, norm(f - Mat::identity(d)));
    add("identity has unit gradient" + tag, static_cast<int>(ct.grad.size()), ae, 1e-12);
    std::vector<double> ones(g.num_cells(), 1.0);
    add("integral of one" + tag, 1, std::fabs(integrate(g, ones) - 1.0), 1e-14);

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto random_field = [&] {
      Field f(g, FieldKind::displacement, 2);
      for (double& v : f.values()) v = u(rng);
      f.impose_clamp();
      return f;
    };
    double tri = 0.0;
    int clamp_bad = 0;
    for (int s = 0; s < 50; ++s) {
      const Field a = random_field(), b2 = random_field(), c = random_field();
      tri = std::fmax(tri, h1_distance(a, c) - h1_distance(a, b2) - h1_distance(b2, c));
      if (!combine(0.3, a, 0.7, b2).clamp_intact()) ++clamp_bad;
    }
    add("H1 triangle inequality" + tag, 50, std::fmax(0.0, tri), 1e-12);
    add("clamped layers preserved" + tag, 50, clamp_bad, 0.0);
  }
  return out;
}

}  // namespace viscoflow
