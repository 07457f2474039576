#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fhn/hopfcole.hpp"

namespace {

using namespace fhn;

TEST(HopfCole, GaussianMapsToQuadratic) {
  const double eps = 0.05;
  const SpatialField r = bump_density(2, 0.3, 0.5);
  const PhaseGrid g(0.5, 2.0, 32, 0.0, 2.0, 32);
  Density f;
  for (int i = 0; i < 2; ++i) {
    const double rho = r.values[i];
    f.push_back(g.sample([&](double v, double) {
      return std::sqrt(rho / (2 * std::numbers::pi * eps)) * std::exp(-rho * (v - 0.4) * (v - 0.4) / (2 * eps));
    }));
  }
  const HopfColeField hc = hopf_cole(f, r, eps);
  const Density p1 = phi1(hc, g, r, Eigen::Vector2d(0.4, 0.4));
  for (int i = 0; i < 2; ++i)
    for (Eigen::Index k = 0; k < p1[i].size(); ++k)
      if (hc.mask[i].data()[k]) EXPECT_NEAR(p1[i].data()[k], 0.0, 1e-9);
}

TEST(HopfCole, ReconstructInvertsOnMask) {
  const double eps = 0.1;
  const SpatialField r = uniform_density(1);
  const PhaseGrid g(0.0, 2.0, 16, 0.0, 2.0, 16);
  Density f{g.sample([](double v, double w) { return std::exp(-v * v - 2 * w * w) * (1.0 + 0.3 * std::sin(v)); })};
  f[0](0, 0) = 0.0;
  const HopfColeField hc = hopf_cole(f, r, eps);
  EXPECT_FALSE(hc.mask[0](0, 0));
  EXPECT_TRUE(std::isnan(hc.phi[0](0, 0)));
  const Density back = reconstruct(hc, r);
  EXPECT_LT(((back[0] - f[0]).array().abs() / f[0].maxCoeff()).maxCoeff(), 1e-13);
}

TEST(Corrector, Phi1BarSamplePoint) {
  ModelParams p;
  const PhaseGrid g(1.2, 0.9, 9, -0.4, 0.9, 9);
  const PhaseField bar = phi1_bar_node(p, g, 0.5, 0.1, 0.01, 0.3);
  EXPECT_NEAR(bar(4, 4), 0.099224999999999994, 1e-14);
}

TEST(Corrector, AlphaSolvesItsOde) {
  const double a = 0.5, b = 0.5, k = std::abs(a) + b;
  EXPECT_DOUBLE_EQ(alpha_at(1.3, a, b, 0.0), 1.3);
  const double h = 1e-5;
  for (double t : {0.1, 0.5, 1.0}) {
    const double d = (alpha_at(1.3, a, b, t + h) - alpha_at(1.3, a, b, t - h)) / (2 * h);
    EXPECT_NEAR(d, 2 * k * alpha_at(1.3, a, b, t) + 2.0, 1e-6);
  }
  EXPECT_DOUBLE_EQ(m_at({1.0, 0.5, 2.0}, a, b, 0.0), 2.5);
}

TEST(Corrector, NonPositiveAlpha0Rejected) {
  const ModelParams p;
  const SpatialField r = uniform_density(1);
  const HJContext ctx{p, PhaseGrid(0.0, 1.0, 8, 0.0, 1.0, 8), r, Eigen::MatrixXd::Zero(1, 1)};
  MomentSnapshot m;
  m.V = m.W = m.E = Eigen::VectorXd::Zero(1);
  EXPECT_THROW(corrector_bundle(ctx, m, {0.0, 0.0, 1.0}), NonPositiveAlpha0);
}

TEST(HJResidual, MatchesSymbolicOperator) {
  ModelParams p;
  p.epsilon = 0.1;
  SpatialField r;
  r.nodes = Eigen::VectorXd::Constant(1, 0.5);
  r.values = Eigen::VectorXd::Constant(1, 1.1);
  r.quad_weights = Eigen::VectorXd::Constant(1, 1.0);
  const PhaseGrid g(0.75, 0.09, 9, -0.5, 0.09, 9);
  const HJContext ctx{p, g, r, Eigen::MatrixXd::Constant(1, 1, 0.25 / 1.1)};
  MomentSnapshot m;
  m.t = 0.1;
  m.V = Eigen::VectorXd::Constant(1, 0.4);
  m.W = Eigen::VectorXd::Constant(1, 0.2);
  m.E = Eigen::VectorXd::Constant(1, 0.02);
  const PhaseField bar = phi1_bar_node(p, g, 0.4, 0.2, 0.02, 0.25);
  const PhaseField extra = g.sample([](double v, double w) { return 0.3 * v * v * w; });
  std::array<Density, 3> chi;
  const std::array<double, 3> times{0.0, 0.1, 0.2};
  for (int n = 0; n < 3; ++n) chi[n] = {(bar + extra).array() + 0.7 * times[n]};
  const Density res = hj_residual_order1({&chi[0], &chi[1], &chi[2]}, times, m, ctx);
  EXPECT_NEAR(res[0](4, 4), -0.36063912499999995, 1e-3);
  EXPECT_TRUE(std::isnan(res[0](0, 4)));
  EXPECT_THROW(hj_residual_order1({&chi[0], &chi[1], &chi[2]}, {0.1, 0.0, 0.2}, m, ctx), MissingSnapshots);
}

TEST(HJResidual, RangeOutsideGridIsBoundaryOnly) {
  const PhaseGrid g(0.0, 1.0, 8, 0.0, 1.0, 8);
  const Density res{PhaseField::Zero(8, 8)};
  EXPECT_THROW(residual_range(res, g, Eigen::VectorXd::Constant(1, 10.0), Eigen::VectorXd::Zero(1), 1.0),
               BoundaryOnly);
}

TEST(TheoremBound, EmptyMaskRaises) {
  const PhaseGrid g(0.0, 1.0, 8, 0.0, 1.0, 8);
  const SpatialField r = uniform_density(1);
  const HopfColeField hc = hopf_cole({g.zeros()}, r, 0.1, 1.0);
  EXPECT_THROW(theorem_bound_check(hc, g, r, ModelParams{}, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), 0.0),
               EmptyMask);
}

struct SmallRun {
  ModelParams params;
  KineticSolver solver;
  HJContext ctx;
  KineticState state;
};

SmallRun small_run() {
  ModelParams p;
  p.epsilon = 0.1;
  const SpatialField r = bump_density(2, 0.3, p.m_star);
  KineticSolver s(p, PhaseGrid(0.5, 3.0, 48, 0.1, 3.5, 48), Kernel::exponential(1.0, 0.5), r);
  HJContext ctx{p, s.grid(), r, s.psi()};
  KineticState st = s.initialize_well_prepared(Eigen::Vector2d(0.7, 0.4), Eigen::Vector2d(0.2, 0.2));
  return {p, std::move(s), std::move(ctx), std::move(st)};
}

TEST(Sandwich, EnvelopesStayOrdered) {
  SmallRun run = small_run();
  const Envelopes env = build_envelopes(run.ctx, run.state, run.solver.diagnose(run.state), {1.0, 0.0, 1.0});
  const SandwichReport rep =
      comparison_sandwich(run.solver, run.state, env.plus, env.minus, {0.2, 0.0, 0.05}, 1.0);
  EXPECT_TRUE(rep.ordered);
  ASSERT_EQ(rep.t.size(), 5u);
  ASSERT_EQ(rep.core_gap_plus.size(), 5u);
  for (std::size_t n = 0; n < rep.t.size(); ++n) {
    EXPECT_GE(rep.min_gap_plus[n], -1e-10 * rep.max_f[n]);
    EXPECT_GE(rep.min_gap_minus[n], -1e-10 * rep.max_f[n]);
  }
}

TEST(Sandwich, SwappedEnvelopesRejected) {
  SmallRun run = small_run();
  const Envelopes env = build_envelopes(run.ctx, run.state, run.solver.diagnose(run.state), {1.0, 0.0, 1.0});
  EXPECT_THROW(comparison_sandwich(run.solver, run.state, env.minus, env.plus, {0.1, 0.0, 0.05}),
               InitialOrderingViolated);
}

TEST(Lemma, CertifiesShortRun) {
  SmallRun run = small_run();
  const auto snaps = run.solver.run(run.state, {0.3, 0.0, 0.05});
  const LemmaReport rep = certify_lemma(run.ctx, snaps, 1.0);
  EXPECT_TRUE(rep.certified);
  EXPECT_EQ(rep.times.size(), snaps.size() - 2);
  EXPECT_THROW(certify_lemma(run.ctx, {snaps[0], snaps[1]}, 1.0), MissingSnapshots);
}

}  // namespace
