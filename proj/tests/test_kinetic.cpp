#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fhn/kinetic.hpp"

namespace {

using namespace fhn;

struct ColumnMoments {
  double mass, mean, var;
};

ColumnMoments column_moments(const std::vector<double>& f, double v_min, double dv) {
  double m = 0, m1 = 0, m2 = 0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double v = v_min + (double(j) + 0.5) * dv;
    m += f[j];
    m1 += f[j] * v;
    m2 += f[j] * v * v;
  }
  return {m, m1 / m, m2 / m - (m1 / m) * (m1 / m)};
}

TEST(OuColumn, TransitionMomentsMatchClosedForm) {
  // lambda = 20, dt = 0.01: e = exp(-lambda dt), variance 2 (1 - e^2) / (2 lambda).
  const double e = 0.81873075307798182, var = 0.016483997698218036;
  const int n = 800;
  const double v_min = -4.0, dv = 0.01;
  std::vector<double> in(n, 0.0), out(n, 0.0);
  in[450] = 2.0;
  ou_column(in.data(), out.data(), n, v_min, dv, e, 0.3, std::sqrt(var));
  const ColumnMoments m = column_moments(out, v_min, dv);
  const double v0 = v_min + 450.5 * dv;
  EXPECT_NEAR(m.mass, 2.0, 1e-14);
  EXPECT_NEAR(m.mean, e * v0 + 0.3, 1e-12);
  EXPECT_NEAR(m.var, var, 1e-10);
}

TEST(OuColumn, NarrowKernelKeepsMassAndMean) {
  const int n = 64;
  const double v_min = -2.0, dv = 4.0 / n;
  std::vector<double> in(n), out(n, 0.0);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int j = 16; j < 48; ++j) in[j] = u(gen);
  const ColumnMoments before = column_moments(in, v_min, dv);
  ou_column(in.data(), out.data(), n, v_min, dv, 0.97, 0.01, 0.2 * dv);
  const ColumnMoments after = column_moments(out, v_min, dv);
  EXPECT_NEAR(after.mass, before.mass, 1e-13);
  EXPECT_NEAR(after.mean, 0.97 * before.mean + 0.01, 1e-13);
  for (double x : out) EXPECT_GE(x, 0.0);
}

KineticSolver small_solver(ModelParams p = {}, int n = 64, Kernel k = Kernel::exponential(1.0, 0.5)) {
  return KineticSolver(p, PhaseGrid(0.5, 3.0, n, 0.1, 3.5, n), k, bump_density(3, 0.3, p.m_star));
}

TEST(KineticSolver, WellPreparedStateHasExactMassAndMoments) {
  ModelParams p;
  p.epsilon = 0.1;
  const KineticSolver s = small_solver(p, 96);
  const Eigen::Vector3d V0(0.6, 0.5, 0.4), W0(0.2, 0.1, 0.0);
  const KineticState st = s.initialize_well_prepared(V0, W0);
  const MomentSnapshot m = s.diagnose(st);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(m.mass[i], s.rho0().values[i], 1e-14);
    EXPECT_NEAR(m.V[i], V0[i], 1e-10);
    EXPECT_NEAR(m.W[i], W0[i], 1e-10);
    EXPECT_NEAR(m.D2[i], p.epsilon / s.rho0().values[i], 1e-6);
  }
}

TEST(KineticSolver, InitialDataNearEdgeRejected) {
  const KineticSolver s = small_solver();
  EXPECT_THROW(s.initialize_well_prepared(Eigen::Vector3d(3.2, 0.5, 0.5), Eigen::Vector3d::Zero()), ConfigError);
}

TEST(KineticSolver, TransportSubstepEnforcesCfl) {
  const KineticSolver s = small_solver();
  const KineticState st = s.initialize_well_prepared(Eigen::Vector3d::Constant(0.5), Eigen::Vector3d::Constant(0.2));
  EXPECT_THROW(s.transport_substep(st, 10.0), CflViolation);
  EXPECT_NO_THROW(s.transport_substep(st, s.cfl_limit(s.coupling(st))));
}

TEST(KineticSolver, PureRelaxationSubstepPreservesMeanAndMass) {
  SolverOptions full;
  full.drift_split = DriftSplit::Full;
  const ModelParams p;
  const KineticSolver s(p, PhaseGrid(0.5, 3.0, 64, 0.1, 3.5, 64), Kernel::exponential(1.0, 0.5),
                        bump_density(3, 0.3, p.m_star), full);
  const KineticState st = s.initialize_well_prepared(Eigen::Vector3d(0.7, 0.5, 0.3), Eigen::Vector3d::Constant(0.2));
  const KineticState next = s.ou_relaxation_substep(st, 0.01);
  const MomentSnapshot a = s.diagnose(st), b = s.diagnose(next);
  EXPECT_LT((a.mass - b.mass).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((a.V - b.V).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KineticSolver, RunConservesMassAndPositivity) {
  const KineticSolver s = small_solver();
  KineticState st = s.initialize_well_prepared(Eigen::Vector3d(0.7, 0.5, 0.3), Eigen::Vector3d::Constant(0.2));
  const auto snaps = s.run(st, {0.2, 0.0, 0.1});
  ASSERT_EQ(snaps.size(), 3u);
  EXPECT_DOUBLE_EQ(snaps.back().t, 0.2);
  for (const MomentSnapshot& m : snaps) {
    EXPECT_LT(((m.mass - st.initial_mass).array() / st.initial_mass.array()).abs().maxCoeff(), 1e-12);
    EXPECT_GE(m.min_f.minCoeff(), 0.0);
  }
}

TEST(KineticSolver, RunRejectsNonDividingSnapshotStride) {
  const KineticSolver s = small_solver();
  KineticState st = s.initialize_well_prepared(Eigen::Vector3d::Constant(0.5), Eigen::Vector3d::Constant(0.2));
  EXPECT_THROW(s.run(st, {0.25, 0.0, 0.1}), ConfigError);
}

TEST(KineticSolver, FrozenStepIsMonotone) {
  const KineticSolver s = small_solver(ModelParams{}, 40);
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Density lo(3), hi(3);
    for (int i = 0; i < 3; ++i) {
      lo[i] = s.grid().zeros();
      hi[i] = s.grid().zeros();
      for (Eigen::Index k = 0; k < lo[i].size(); ++k) {
        lo[i].data()[k] = u(gen);
        hi[i].data()[k] = lo[i].data()[k] + u(gen);
      }
    }
    const CouplingFields c = s.coupling(hi);
    for (int step = 0; step < 5; ++step) {
      s.step_frozen(lo, c, s.default_dt());
      s.step_frozen(hi, c, s.default_dt());
    }
    for (int i = 0; i < 3; ++i) EXPECT_GE((hi[i] - lo[i]).minCoeff(), 0.0);
  }
}

TEST(KineticSolver, LinearDriftTracksMomentOracle) {
  // N = -v, a = c = 0, no kernel, eps = 0.05, node density 1.2.
  ModelParams p;
  p.drift = Drift::linear();
  p.a = 0.0;
  p.c = 0.0;
  p.epsilon = 0.05;
  SpatialField rho0 = uniform_field(2);
  rho0.values << 1.2, 0.8;
  SolverOptions opt;
  const KineticSolver s(p, PhaseGrid(0.4, 2.5, 128, 0.2, 3.0, 128), Kernel::zero(), rho0, opt);
  KineticState st = s.initialize_well_prepared(Eigen::Vector2d(0.8, 0.8), Eigen::Vector2d(0.2, 0.2));
  const auto snaps = s.run(st, {1.0, 0.0, 0.0});
  const MomentSnapshot& m = snaps.back();
  EXPECT_NEAR(m.V[0] / 0.19884306552067804, 1.0, 2e-3);
  EXPECT_NEAR(m.W[0] / 0.12130613194252662, 1.0, 2e-3);
  EXPECT_NEAR(m.D2[0] / 0.040153219259124864, 1.0, 2e-3);
}

TEST(KineticSolver, LinearizedAndFullSplitsAgree) {
  ModelParams p;
  p.epsilon = 0.1;
  SolverOptions full;
  full.drift_split = DriftSplit::Full;
  const PhaseGrid g(0.5, 3.0, 64, 0.1, 3.5, 64);
  const SpatialField r = bump_density(3, 0.3, p.m_star);
  const KineticSolver a(p, g, Kernel::exponential(1.0, 0.5), r), b(p, g, Kernel::exponential(1.0, 0.5), r, full);
  const Eigen::Vector3d V0(0.7, 0.5, 0.3), W0(0.2, 0.2, 0.2);
  KineticState sa = a.initialize_well_prepared(V0, W0), sb = b.initialize_well_prepared(V0, W0);
  const auto ma = a.run(sa, {0.3, 0.0, 0.0}), mb = b.run(sb, {0.3, 0.0, 0.0});
  EXPECT_LT((ma.back().V - mb.back().V).cwiseAbs().maxCoeff(), 5e-3);
}

}  // namespace
