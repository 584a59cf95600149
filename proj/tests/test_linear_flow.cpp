#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include <viscoflow/initial_data.hpp>
#include <viscoflow/linear_flow.hpp>

#include "oracles.hpp"

using namespace viscoflow;

namespace {

const double kPi = std::acos(-1.0);

LinearConfig config(int d, int n, double tau, double T = 1.0, int clamp = 1) {
  return LinearConfig::from_bundle(reference_bundle(d, d == 1 ? 2.0 : 4.0), Grid(d, n), tau, T, clamp);
}

Field mode(const Grid& g, int k, double a, int clamp = 1) {
  return Field::from_function(g, FieldKind::displacement, clamp, [&](const auto& x) {
    return std::array<double, 3>{a * std::sin(k * kPi * x[0]), 0, 0};
  });
}

Field random_field(const Grid& g, std::mt19937_64& rng, int clamp = 1) {
  std::normal_distribution<double> n01;
  Field f(g, FieldKind::displacement, clamp);
  for (double& v : f.values()) v = n01(rng);
  f.impose_clamp();
  return f;
}

}  // namespace

TEST(LinearConfig, RejectsIndefiniteTensors) {
  auto c = config(1, 16, 0.1);
  c.Cw[0] = -1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = config(1, 16, 0.0);
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(EnergyPhi0, Examples) {
  const auto c = config(1, 128, 0.1);
  EXPECT_EQ(energy_phi0(c, Field::zero(c.grid)), 0.0);
  const double a = 0.3;
  const double h2 = c.grid.h() * c.grid.h();
  const double exact = a * a * kPi * kPi / 4;
  // Midpoint differences of sin carry a relative error pi^2 h^2 / 12.
  EXPECT_NEAR(energy_phi0(c, mode(c.grid, 1, a)), exact, kPi * kPi * h2 / 6 * exact);
  // Assembled and pointwise forms agree.
  EXPECT_NEAR(LinearModel(c).energy(mode(c.grid, 2, a)), energy_phi0(c, mode(c.grid, 2, a)), 1e-13);
}

TEST(EnergyPhi0, InfinitesimalRotationsCarryNoEnergy) {
  // u = (-(y - 1/2), x - 1/2) has a skew gradient away from the clamped
  // layer, where the density must vanish; all energy sits in boundary cells.
  const auto c = config(2, 16, 0.1);
  const Field u = Field::from_function(c.grid, FieldKind::displacement, 1, [](const auto& x) {
    return std::array<double, 3>{-(x[1] - 0.5), x[0] - 0.5, 0};
  });
  const auto ct = gradients(u);
  const int q = c.grid.qp_per_cell();
  double boundary = 0;
  for (std::size_t cell = 0; cell < c.grid.num_cells(); ++cell) {
    const auto m = c.grid.cell_multi(cell);
    const bool edge = m[0] == 0 || m[1] == 0 || m[0] == 15 || m[1] == 15;
    for (int k = 0; k < q; ++k) {
      const Mat e = sym(ct.grad[cell * q + k]);
      const double dens = 0.5 * ddot(e, e);
      if (edge) boundary += dens * c.grid.cell_volume() / q;
      else EXPECT_LT(dens, 1e-26);
    }
  }
  EXPECT_NEAR(energy_phi0(c, u), boundary, 1e-12 * boundary);
}

TEST(DissipationD0, Examples) {
  const auto c = config(1, 128, 0.1);
  const double a = 0.3;
  const Field u = mode(c.grid, 1, a);
  EXPECT_EQ(dissipation_D0(c, u, u), 0.0);
  const double exact = a * kPi * std::sqrt(2.0);
  EXPECT_NEAR(dissipation_D0(c, u, Field::zero(c.grid)), exact, kPi * kPi * c.grid.h() * c.grid.h() / 12 * exact);
  EXPECT_NEAR(LinearModel(c).distance(u, Field::zero(c.grid)), dissipation_D0(c, u, Field::zero(c.grid)), 1e-13);
}

TEST(DissipationD0, ParallelogramIdentityAndKorn) {
  std::mt19937_64 rng(6);
  const auto c = config(2, 16, 0.1);
  double korn = INFINITY;
  for (int s = 0; s < 50; ++s) {
    const Field u0 = random_field(c.grid, rng), u1 = random_field(c.grid, rng), v = random_field(c.grid, rng);
    const Field mid = combine(0.5, u0, 0.5, u1);
    const double lhs = std::pow(dissipation_D0(c, u0, v), 2) + std::pow(dissipation_D0(c, u1, v), 2) -
                       2 * std::pow(dissipation_D0(c, mid, v), 2);
    const double rhs = 0.5 * std::pow(dissipation_D0(c, u0, u1), 2);
    EXPECT_NEAR(lhs, rhs, 1e-10 * rhs);
    EXPECT_NEAR(dissipation_D0(c, u0, u1), dissipation_D0(c, u1, u0), 1e-12);
    korn = std::min(korn, dissipation_D0(c, u0, u1) / h1_distance(u0, u1));
  }
  EXPECT_GT(korn, 0.5);
}

TEST(ImplicitStep, Examples) {
  const auto c = config(1, 64, 0.4);
  const Field z = implicit_step(c, Field::zero(c.grid));
  EXPECT_EQ(z.vec().norm(), 0.0);
  const Field u = implicit_step(c, mode(c.grid, 1, 0.7));
  EXPECT_NEAR(modal_amplitude(u, 1), 0.7 / 1.1, 1e-12);
  EXPECT_LT(h1_distance(u, mode(c.grid, 1, 0.7 / 1.1)), 1e-11);
}

TEST(ImplicitStep, MatchesDenseSolveWithPermutedUnknowns) {
  std::mt19937_64 rng(12);
  const auto c = config(2, 8, 0.1);
  const Field prev = random_field(c.grid, rng);
  const Field u = implicit_step(c, prev);

  // Independent assembly: stationarity of the quadratic incremental
  // functional computed by central differences of D0^2 / (2 tau) + phi0.
  const DofMap dofs(c.grid, 1);
  const int m = static_cast<int>(dofs.size());
  auto phi = [&](const Vec& x) {
    Field f = prev;
    dofs.scatter(x, f);
    return std::pow(dissipation_D0(c, f, prev), 2) / (2 * c.tau) + energy_phi0(c, f);
  };
  // The functional is quadratic, so second differences are exact up to rounding.
  const Vec x0 = Vec::Zero(m);
  const double f0 = phi(x0);
  Eigen::MatrixXd a(m, m);
  Eigen::VectorXd lin(m);
  for (int i = 0; i < m; ++i) {
    Vec ei = Vec::Zero(m);
    ei[i] = 1.0;
    const double fp = phi(ei), fm = phi(-ei);
    a(i, i) = fp + fm - 2 * f0;
    lin[i] = 0.5 * (fp - fm);
  }
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      Vec e = Vec::Zero(m);
      e[i] = 1.0;
      e[j] = 1.0;
      a(i, j) = a(j, i) = phi(e) - f0 - lin[i] - lin[j] - 0.5 * a(i, i) - 0.5 * a(j, j);
    }
  // Solve with a reversed unknown ordering.
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(m);
  for (int i = 0; i < m; ++i) perm.indices()[i] = m - 1 - i;
  const Eigen::MatrixXd ap = perm * a * perm.transpose();
  const Eigen::VectorXd xp = ap.ldlt().solve(-(perm * lin));
  const Eigen::VectorXd x = perm.transpose() * xp;
  Field ref = prev;
  dofs.scatter(x, ref);
  EXPECT_LT(h1_distance(ref, u), 1e-10);
}

TEST(RunLinearFlow, ZeroStaysZero) {
  const auto c = config(2, 8, 0.25);
  const auto tr = run_linear_flow(c, Field::zero(c.grid));
  ASSERT_EQ(tr.steps(), 4u);
  for (const Field& f : tr.fields) EXPECT_EQ(f.vec().norm(), 0.0);
}

TEST(RunLinearFlow, ModalDecayMatchesDiscreteAndContinuousOracles) {
  std::vector<double> taus{0.1, 0.05, 0.025}, errs;
  for (double tau : taus) {
    const auto c = config(1, 128, tau);
    const auto tr = run_linear_flow(c, mode(c.grid, 1, 1.0));
    double worst_disc = 0, worst_cont = 0;
    for (std::size_t n = 0; n < tr.fields.size(); ++n) {
      const double amp = modal_amplitude(tr.fields[n], 1);
      worst_disc = std::max(worst_disc, std::fabs(amp - modal_discrete_1d(1.0, tau, static_cast<int>(n))));
      worst_cont = std::max(worst_cont, std::fabs(amp - modal_oracle_1d(1, 1.0, n * tau)));
    }
    EXPECT_LT(worst_disc, 1e-10);
    errs.push_back(worst_cont);
    EXPECT_TRUE(energy_monotone(tr.ledger));
    for (const auto& e : tr.ledger) EXPECT_TRUE(std::isnan(e.detmin));
  }
  EXPECT_NEAR(errs[0] / errs[1], 2.0, 0.3);
  EXPECT_NEAR(errs[1] / errs[2], 2.0, 0.3);
}

TEST(RunLinearFlow, StepSizeErrorBound) {
  for (int d = 1; d <= 2; ++d) {
    const int n = d == 1 ? 64 : 16;
    const double tau = 0.1;
    InitialData spec;
    spec.family = "sine";
    spec.amplitude = 0.5;
    const auto c = config(d, n, tau);
    const Field u0 = initial_displacement(c.grid, spec, 1);
    const auto coarse = run_linear_flow(c, u0);
    // tau-extrapolated reference 2 U_{tau/64} - U_{tau/32}
    const auto f1 = run_linear_flow(config(d, n, tau / 32), u0);
    const auto f2 = run_linear_flow(config(d, n, tau / 64), u0);
    const double bound = 0.5 * tau * tau * std::pow(linear_slope(c, u0), 2);
    for (double t : {0.25, 0.5, 1.0}) {
      const Field ref = combine(2.0, f2.at(t), -1.0, f1.at(t));
      for (std::size_t k = 0; k < coarse.steps(); ++k) {
        // Compare at the grid times only, where the piecewise-constant
        // interpolant coincides with the node value.
        if (std::fabs((k + 1) * tau - t) > 1e-12) continue;
        EXPECT_LE(std::pow(dissipation_D0(c, coarse.fields[k + 1], ref), 2), bound);
      }
    }
  }
}

TEST(LinearSlope, Examples) {
  const auto c = config(1, 128, 0.1);
  EXPECT_EQ(linear_slope(c, Field::zero(c.grid)), 0.0);
  const double a = 0.4;
  EXPECT_NEAR(linear_slope(c, mode(c.grid, 1, a)), a * kPi / (2 * std::sqrt(2.0)), 1e-4 * a);
}

TEST(LinearSlope, EqualsSupremumOfDifferenceQuotients) {
  std::mt19937_64 rng(15);
  for (int d = 1; d <= 2; ++d) {
    const auto c = config(d, d == 1 ? 64 : 16, 0.1);
    InitialData spec;
    spec.amplitude = 0.5;
    const Field u = initial_displacement(c.grid, spec, 1);
    const double slope = linear_slope(c, u);
    const double phi = energy_phi0(c, u);
    double best = 0;
    std::vector<Field> dict;
    dict.push_back(u);  // the steepest direction for proportional tensors
    for (int k = 1; k <= 6; ++k) {
      InitialData s;
      s.family = k % 2 ? "sine" : "bump";
      s.amplitude = 1.0 / k;
      dict.push_back(initial_displacement(c.grid, s, 1));
    }
    for (int s = 0; s < 10; ++s) dict.push_back(random_field(c.grid, rng));
    for (const Field& dir : dict) {
      for (double eps : {1e-4, -1e-4}) {
        const Field v = combine(1.0, u, -eps, dir);
        const double q = std::max(0.0, phi - energy_phi0(c, v)) / dissipation_D0(c, u, v);
        EXPECT_LE(q, slope * (1 + 1e-3));
        best = std::max(best, q);
      }
    }
    EXPECT_NEAR(best / slope, 1.0, 0.02);
  }
}

TEST(LinearSlope, EnergyIdentityClosesAlongTheMode) {
  // d/dt phi0 = -|u'| slope; for the mode both sides equal a^2 pi^2 / 8 in
  // magnitude at t = 0.
  const auto c = config(1, 128, 1e-3, 0.01);
  const double a = 1.0;
  const auto tr = run_linear_flow(c, mode(c.grid, 1, a));
  const double dphi = (tr.ledger[1].energy - tr.ledger[0].energy) / c.tau;
  const double prod = tr.ledger[1].rate * tr.ledger[0].slope;
  EXPECT_NEAR(-dphi, a * a * kPi * kPi / 8, 1e-3);
  EXPECT_NEAR(prod, a * a * kPi * kPi / 8, 1e-3);
}

TEST(ModalOracle, Values) {
  EXPECT_EQ(modal_oracle_1d(3, 0.7, 0.0), 0.7);
  EXPECT_NEAR(modal_oracle_1d(1, 1.0, 4.0), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(modal_oracle_1d(1, 1.0, 4.0), 0.367879, 1e-6);
}

TEST(ModalOracle, SuperpositionOfTwoModes) {
  std::vector<double> errs;
  for (int n : {32, 64}) {
    const double tau = 0.5 / n;
    const auto c = config(1, n, tau, 0.5);
    const Field u0 = combine(1.0, mode(c.grid, 1, 1.0), 1.0, mode(c.grid, 3, 0.5));
    const auto tr = run_linear_flow(c, u0);
    const Field expect = combine(1.0, mode(c.grid, 1, modal_oracle_1d(1, 1.0, 0.5)), 1.0,
                                 mode(c.grid, 3, modal_oracle_1d(3, 0.5, 0.5)));
    errs.push_back(h1_distance(tr.at(0.5), expect));
  }
  EXPECT_LT(errs[0], 1e-2);
  EXPECT_NEAR(errs[0] / errs[1], 2.0, 0.3);  // tau ~ h, first order in tau dominates
}

TEST(RunLinearFlow, DiscreteWeakResidualVanishes) {
  InitialData spec;
  spec.family = "bump";
  spec.amplitude = 0.5;
  const auto c = config(2, 16, 0.1, 0.5);
  const LinearModel m(c);
  const auto tr = run_linear_flow(c, initial_displacement(c.grid, spec, 1));
  for (std::size_t n = 1; n < tr.fields.size(); ++n) {
    const Vec un = m.dofs().gather(tr.fields[n]);
    const Vec up = m.dofs().gather(tr.fields[n - 1]);
    const Vec r = m.stiffness_W() * un + m.stiffness_D() * (un - up) / c.tau;
    EXPECT_LT(r.norm(), 1e-9 * (1 + (m.stiffness_W() * un).norm()));
  }
}
