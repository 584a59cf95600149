#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <viscoflow/convergence_lab.hpp>

#include "oracles.hpp"

using namespace viscoflow;

namespace {

SweepSpec small_spec() {
  SweepSpec s;
  s.n = 16;
  s.deltas = {0.04, 0.02};
  s.taus = {0.1};
  s.T = 0.5;
  s.workers = 2;
  return s;
}

void expect_cells_finite_nonnegative(const SweepReport& r) {
  for (const Table& t : r.tables)
    for (const auto& row : t.cells)
      for (double v : row) {
        EXPECT_TRUE(std::isfinite(v)) << t.name;
        EXPECT_GE(v, 0.0) << t.name;
      }
}

bool cells_identical(const SweepReport& a, const SweepReport& b) {
  if (a.tables.size() != b.tables.size()) return false;
  for (std::size_t k = 0; k < a.tables.size(); ++k) {
    const auto& x = a.tables[k].cells;
    const auto& y = b.tables[k].cells;
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < x[i].size(); ++j)
        if (std::memcmp(&x[i][j], &y[i][j], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST(RunJobs, ResultsKeepJobOrder) {
  std::vector<std::function<int()>> jobs;
  for (int k = 0; k < 40; ++k) jobs.push_back([k] { return k * k; });
  for (int w : {1, 3, 8}) {
    const auto out = run_jobs(jobs, w);
    ASSERT_EQ(out.size(), 40u);
    for (int k = 0; k < 40; ++k) EXPECT_EQ(out[k], k * k);
  }
}

TEST(RunJobs, RethrowsAfterAllJobsFinish) {
  std::atomic<int> ran{0};
  std::vector<std::function<int()>> jobs;
  for (int k = 0; k < 10; ++k)
    jobs.push_back([k, &ran]() -> int {
      ++ran;
      if (k == 3) throw std::runtime_error("boom");
      return k;
    });
  EXPECT_THROW(run_jobs(jobs, 4), std::runtime_error);
  EXPECT_EQ(ran.load(), 10);
}

TEST(FitRate, RecoversPowerLaws) {
  const std::vector<double> x{0.04, 0.02, 0.01, 0.005};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, 0.5));
  EXPECT_NEAR(fit_rate(x, y), 0.5, 1e-12);
  EXPECT_NEAR(fit_rate(x, y), oracle::loglog_slope(x, y), 1e-12);
  EXPECT_TRUE(std::isnan(fit_rate({0.1}, {1.0})));
}

TEST(StrictlyDecreasing, Examples) {
  EXPECT_TRUE(strictly_decreasing({3, 2, 1}));
  EXPECT_FALSE(strictly_decreasing({3, 3, 1}));
  EXPECT_TRUE(strictly_decreasing({0, 0, 0}));
  EXPECT_FALSE(strictly_decreasing({1, NAN}));
}

TEST(SweepSpec, Validation) {
  SweepSpec s;
  EXPECT_NO_THROW(s.validate());
  s.deltas = {0.01, 0.02};
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = SweepSpec{};
  s.taus = {};
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = SweepSpec{};
  s.times = {0.0};
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = SweepSpec{};
  s.alpha = 1.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(PrepareInitialData, AmplitudeZeroGivesIdentity) {
  SweepSpec s = small_spec();
  s.init.amplitude = 0.0;
  const auto d = prepare_initial_data(s, 0.02);
  const Field id = Field::identity(s.grid(), 2);
  EXPECT_EQ(h1_distance(d.y0, id), 0.0);
  EXPECT_EQ(h1_distance(d.u0, Field::zero(s.grid(), 2)), 0.0);
  EXPECT_EQ(d.energy, 0.0);
}

TEST(PrepareInitialData, HyperTermIsLinearInDelta) {
  // p = 2, alpha = 1/2: delta^-(p alpha) int P(delta u'') = delta int (u'')^2.
  SweepSpec s;
  s.init.amplitude = 0.1;
  const double h1 = prepare_initial_data(s, 0.02).hyper;
  const double h2 = prepare_initial_data(s, 0.01).hyper;
  EXPECT_GT(h2, 0.0);
  EXPECT_NEAR(h1 / h2, 2.0, 1e-10);
}

TEST(PrepareInitialData, EnergyApproachesLinearEnergy) {
  // The elastic part matches the linear energy already at delta = 1e-3; the
  // hyper part adds delta int (u0'')^2, which drops below 5% of it from
  // delta = 5e-4 on for the bump.
  SweepSpec s;
  s.init.amplitude = 0.1;
  double prev_gap = INFINITY;
  for (double d : {1e-3, 5e-4, 1e-4}) {
    const auto p = prepare_initial_data(s, d);
    EXPECT_NEAR((p.energy - p.hyper) / p.linear_energy, 1.0, 0.05) << "delta=" << d;
    const double gap = std::fabs(p.energy / p.linear_energy - 1.0);
    if (d <= 5e-4) EXPECT_LT(gap, 0.05) << "delta=" << d;
    EXPECT_LT(gap, prev_gap);
    prev_gap = gap;
  }
}

TEST(PrepareInitialData, RejectsFoldingData) {
  SweepSpec s = small_spec();
  s.init.amplitude = 50.0;
  EXPECT_THROW(prepare_initial_data(s, 0.04), AmplitudeTooLarge);
}

TEST(SweepDelta, AmplitudeZeroGivesZeroErrors) {
  SweepSpec s = small_spec();
  s.init.amplitude = 0.0;
  const auto r = sweep_delta_fixed_tau(s);
  for (const Table& t : r.tables)
    if (t.name.rfind("errors_t", 0) == 0)
      for (const auto& row : t.cells)
        for (double v : row) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(r.flagged.empty());
}

TEST(SweepDelta, ErrorsDecreaseInDelta) {
  SweepSpec s;
  s.init.amplitude = 0.1;
  const auto r = sweep_delta_fixed_tau(s);
  EXPECT_TRUE(r.passed());
  expect_cells_finite_nonnegative(r);
  for (double t : s.sample_times()) {
    const Table& tab = r.table("errors_t" + format_number(t));
    std::vector<double> e;
    for (const auto& row : tab.cells) e.push_back(row[0]);
    EXPECT_TRUE(strictly_decreasing(e)) << "t=" << t;
    const double rate = r.metric("rate tau=" + format_number(0.05) + " t=" + format_number(t));
    EXPECT_NEAR(rate, oracle::loglog_slope(s.deltas, e), 1e-12);
    EXPECT_GE(rate, 0.4);
  }
  const Check* cross = r.check("energy cross-check tau=" + format_number(0.05));
  ASSERT_NE(cross, nullptr);
  EXPECT_TRUE(cross->passed) << cross->detail;
  const Check* unique = r.check("second solver agrees");
  ASSERT_NE(unique, nullptr);
  EXPECT_TRUE(unique->advisory);
}

TEST(SweepTau, RestStateHasZeroResidual) {
  SweepSpec s = small_spec();
  s.init.amplitude = 0.0;
  s.taus = {0.1, 0.05};
  const auto r = sweep_tau_fixed_delta(s);
  for (const auto& row : r.table("residual").cells)
    for (double v : row) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(r.passed());
}

TEST(SweepTau, ResidualShrinksPerHalving) {
  SweepSpec s;
  s.deltas = {0.02};
  s.taus = {0.1, 0.05, 0.025, 0.0125};
  const auto r = sweep_tau_fixed_delta(s);
  EXPECT_TRUE(r.passed());
  expect_cells_finite_nonnegative(r);
  const auto& res = r.table("residual").cells[0];
  for (std::size_t k = 1; k < res.size(); ++k) EXPECT_GE(res[k - 1] / res[k], 1.5);
  for (double t : s.sample_times()) {
    const auto& lb = r.table("linear_bound_t" + format_number(t)).cells;
    for (std::size_t j = 0; j < lb[0].size(); ++j) EXPECT_LE(lb[0][j], lb[1][j]);
  }
}

TEST(Diagonal, AmplitudeZeroGivesZero) {
  SweepSpec s = small_spec();
  s.init.amplitude = 0.0;
  s.taus = {0.1, 0.05};
  const auto r = diagonal_sweep(s);
  for (const Table& t : r.tables)
    for (const auto& row : t.cells)
      for (double v : row) EXPECT_EQ(v, 0.0) << t.name;
}

TEST(Diagonal, PairedRefinementDecreasesAndCloses) {
  SweepSpec s;
  s.deltas = {0.04, 0.02, 0.01};
  s.taus = {0.1, 0.05, 0.025};
  const auto r = diagonal_sweep(s);
  EXPECT_TRUE(r.passed());
  expect_cells_finite_nonnegative(r);
  for (const char* name : {"limb_delta", "limb_tau_linear", "limb_tau_nonlinear", "diagonal"})
    EXPECT_NO_THROW(r.table(name));
  const auto& cells = r.table("diagonal").cells;
  for (std::size_t m = 0; m < 3; ++m) {
    for (std::size_t k = 1; k < cells.size(); ++k) EXPECT_LT(cells[k][3 * m], cells[k - 1][3 * m]);
    for (const auto& row : cells) {
      const double sum = row[3 * m + 1] + row[3 * m + 2];
      EXPECT_LE(row[3 * m], sum * (1 + 1e-12));
    }
  }
}

TEST(Diagonal, RejectsUnpairedLists) {
  SweepSpec s = small_spec();
  s.taus = {0.1};
  EXPECT_THROW(diagonal_sweep(s), InvalidArgument);
}

TEST(Audit, EqualPairsPassDegenerately) {
  SweepSpec s = small_spec();
  s.init.amplitude = 0.1;
  auto pairs = audit_samples(s, 0.01, 5, 7);
  for (auto& p : pairs) p.y1 = p.y0;
  const auto c = audit_pairs(s, 0.01, pairs);
  EXPECT_EQ(c.samples, 5);
  EXPECT_EQ(c.convexity, 0);
  EXPECT_EQ(c.triangle, 0);
  EXPECT_TRUE(c.geodesic_excess.empty());
}

TEST(Audit, SamplesAreSeededAndClamped) {
  SweepSpec s = small_spec();
  const auto a = audit_samples(s, 0.01, 3, 1);
  const auto b = audit_samples(s, 0.01, 3, 1);
  const auto c = audit_samples(s, 0.01, 3, 2);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(h1_distance(a[k].y0, b[k].y0), 0.0);
    EXPECT_GT(h1_distance(a[k].y0, c[k].y0), 0.0);
    EXPECT_TRUE(a[k].y0.clamp_intact());
  }
}

TEST(Audit, NoConvexityViolationsAtSmallDelta) {
  SweepSpec s;
  s.init.amplitude = 0.1;
  const auto r = convexity_and_metric_audit(s);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.table("audit").cells[0][0], 0.0);
  EXPECT_EQ(r.table("audit").cells[0][1], 500.0);
  EXPECT_EQ(r.table("escalation").rows.size(), s.escalation.size());
  EXPECT_GE(r.metric("convexity_threshold_delta"), s.audit_delta);
}

TEST(Determinism, ReportsAreBitIdenticalAcrossWorkerCounts) {
  SweepSpec s;
  s.deltas = {0.04, 0.02, 0.01};
  s.taus = {0.1, 0.05, 0.025};
  s.workers = 1;
  const auto a = diagonal_sweep(s);
  s.workers = 4;
  const auto b = diagonal_sweep(s);
  const auto c = diagonal_sweep(s);
  EXPECT_TRUE(cells_identical(a, b));
  EXPECT_TRUE(cells_identical(b, c));
}
