#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fhn/kinetic.hpp"
#include "fhn/model.hpp"

namespace fhn {

struct MacroState {
  double t = 0.0;
  Eigen::VectorXd V, W;
};

/// L[V] = V (Psi *_r rho0) - Psi *_r (rho0 V) at every node.
Eigen::VectorXd nonlocal_L(const Eigen::VectorXd& V, const SpatialField& rho0, const Eigen::MatrixXd& psi);

/// The limit system dV/dt = N(V) - W - L[V], dW/dt = A(V, W).
class MacroSystem {
 public:
  MacroSystem(ModelParams params, Kernel kernel, SpatialField rho0);

  const ModelParams& params() const { return params_; }
  const SpatialField& rho0() const { return rho0_; }
  const Eigen::MatrixXd& psi() const { return psi_; }

  Eigen::VectorXd L(const Eigen::VectorXd& V) const { return nonlocal_L(V, rho0_, psi_); }
  std::pair<Eigen::VectorXd, Eigen::VectorXd> rhs(const MacroState& state) const;

  /// Classical RK4 with fixed step. Returns the initial state and one state
  /// per multiple of stride (or only the final state when stride is 0).
  std::vector<MacroState> integrate(const MacroState& initial, double t_end, double dt = 1e-3,
                                    double stride = 0.0) const;

 private:
  ModelParams params_;
  SpatialField rho0_;
  Eigen::MatrixXd psi_;
};

struct MacroResidual {
  double t = 0.0;
  Eigen::VectorXd dV, dW;  // finite-difference derivative minus right-hand side
};

struct EpsMacroReconstruction {
  std::vector<MacroState> trajectory;
  std::vector<MacroResidual> residuals;  // interior snapshots only
  double max_abs_residual = 0.0;
};

/// Extracts (V^eps, W^eps) from kinetic snapshots and evaluates the
/// eps-level macroscopic equations with centred differences in time.
EpsMacroReconstruction eps_macro_reconstruction(const std::vector<MomentSnapshot>& snapshots,
                                                const MacroSystem& system);

}  // namespace fhn
