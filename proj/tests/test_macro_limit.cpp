#include <cmath>

#include <gtest/gtest.h>

#include "fhn/macro_limit.hpp"

namespace {

using namespace fhn;

TEST(NonlocalL, ThreeNodeSpike) {
  const SpatialField r = uniform_density(3);
  const Eigen::MatrixXd psi = kernel_matrix(Kernel::exponential(1.0, 1.0), r);
  const Eigen::VectorXd L = nonlocal_L(Eigen::Vector3d(0.0, 1.0, 0.0), r, psi);
  EXPECT_NEAR(L[0], -0.23884377019126307, 1e-15);
  EXPECT_NEAR(L[1], 0.4776875403825262, 1e-15);
  EXPECT_NEAR(L[2], -0.23884377019126307, 1e-15);
}

TEST(NonlocalL, VanishesOnConstants) {
  const SpatialField r = bump_density(5, 0.3, 0.5);
  const Eigen::MatrixXd psi = kernel_matrix(Kernel::exponential(2.0, 0.7), r);
  EXPECT_LT(nonlocal_L(Eigen::VectorXd::Constant(5, 0.8), r, psi).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MacroSystem, LinearSystemMatchesMatrixExponential) {
  ModelParams p;
  p.drift = Drift::linear();
  const MacroSystem sys(p, Kernel::exponential(1.0, 0.5), bump_density(3, 0.3, 0.5));
  const auto traj = sys.integrate({0.0, Eigen::Vector3d(1.0, 0.5, -0.2), Eigen::Vector3d(0.2, 0.0, 0.1)}, 1.0);
  ASSERT_EQ(traj.size(), 2u);
  const MacroState& s = traj.back();
  EXPECT_DOUBLE_EQ(s.t, 1.0);
  const Eigen::Vector3d V(0.10867672818440272, 0.087459197961707646, -0.080783640023050163);
  const Eigen::Vector3d W(0.37574403919529764, 0.17946804308603209, 0.094200410160384981);
  EXPECT_LT((s.V - V).cwiseAbs().maxCoeff(), 1e-11);
  EXPECT_LT((s.W - W).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(MacroSystem, StrideReturnsEveryMultiple) {
  const MacroSystem sys(ModelParams{}, Kernel::zero(), uniform_density(2));
  const auto traj = sys.integrate({0.0, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d::Zero()}, 1.0, 1e-3, 0.25);
  ASSERT_EQ(traj.size(), 5u);
  EXPECT_DOUBLE_EQ(traj[2].t, 0.5);
}

TEST(MacroSystem, BlowupDetected) {
  ModelParams p;
  p.drift = Drift::polynomial({0.0, 0.0, 0.0, 1.0});
  const MacroSystem sys(p, Kernel::zero(), uniform_density(1));
  EXPECT_THROW(sys.integrate({0.0, Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Zero(1)}, 1.0), BlowupDetected);
}

std::vector<MomentSnapshot> as_snapshots(const std::vector<MacroState>& traj) {
  std::vector<MomentSnapshot> out;
  for (const MacroState& m : traj) {
    MomentSnapshot s;
    s.t = m.t;
    s.V = m.V;
    s.W = m.W;
    s.E = Eigen::VectorXd::Zero(m.V.size());
    out.push_back(s);
  }
  return out;
}

TEST(EpsMacroReconstruction, ExactTrajectoryHasSmallResidual) {
  const MacroSystem sys(ModelParams{}, Kernel::exponential(1.0, 0.5), bump_density(4, 0.3, 0.5));
  const auto traj =
      sys.integrate({0.0, Eigen::Vector4d(0.9, 0.7, 0.5, 0.7), Eigen::Vector4d::Constant(0.2)}, 0.5, 1e-3, 0.01);
  const EpsMacroReconstruction rec = eps_macro_reconstruction(as_snapshots(traj), sys);
  EXPECT_EQ(rec.residuals.size(), traj.size() - 2);
  EXPECT_LT(rec.max_abs_residual, 1e-4);
}

TEST(EpsMacroReconstruction, NeedsThreeSnapshots) {
  const MacroSystem sys(ModelParams{}, Kernel::zero(), uniform_density(1));
  const auto traj = sys.integrate({0.0, Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Zero(1)}, 0.1);
  EXPECT_THROW(eps_macro_reconstruction(as_snapshots(traj), sys), MissingSnapshots);
}

}  // namespace
