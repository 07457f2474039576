#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fhn/model.hpp"
#include "fhn/phase_grid.hpp"

namespace fhn {

/// f(t, x_i, v, w): one n_v x n_w block per spatial node.
using Density = std::vector<PhaseField>;

/// How the v-drift is shared between transport and the exact OU substep.
enum class DriftSplit {
  /// OU absorbs the relaxation plus the drift linearised around the node
  /// mean at step start; transport carries the nonlinear remainder.
  Linearized,
  /// OU carries only the relaxation; transport carries N(v) - w - K_psi.
  Full,
};

enum class TimeIntegrator { Euler, Heun };
enum class Reconstruction { Upwind, Muscl };

struct SolverOptions {
  double cfl = 0.9;
  DriftSplit drift_split = DriftSplit::Linearized;
  TimeIntegrator integrator = TimeIntegrator::Heun;
  Reconstruction reconstruction = Reconstruction::Upwind;
  double mass_drift_abort = 1e-6;
  double truncation_tolerance = 1e-8;
  double sigma_w = 0.5;
};

/// Per-node coefficients that the substeps read. Everything the update
/// depends on lives here, so two densities advanced with the same
/// CouplingFields see the same linear operator.
struct CouplingFields {
  Eigen::VectorXd V;          // relaxation target
  Eigen::VectorXd W;
  Eigen::VectorXd V_lin;      // linearisation point (Linearized split)
  Eigen::VectorXd psi_rho;    // Psi *_r rho0
  Eigen::VectorXd psi_rho_V;  // Psi *_r (rho0 V)
};

struct KineticState {
  double t = 0.0;
  Density f;
  SpatialField rho0;
  Eigen::VectorXd V, W;
  Eigen::VectorXd outflow;       // cumulative mass lost through the box edges
  Eigen::VectorXd initial_mass;
};

struct MomentSnapshot {
  double t = 0.0;
  Eigen::VectorXd mass, V, W, D2, Mq, E, min_f;
};

using Observer = std::function<void(const KineticState&)>;

struct Schedule {
  double t_end = 1.0;
  double dt = 0.0;           // 0 selects default_dt()
  double snapshot_dt = 0.1;  // 0 disables intermediate snapshots
};

class KineticSolver {
 public:
  KineticSolver(ModelParams params, PhaseGrid grid, Kernel kernel, SpatialField rho0, SolverOptions options = {});

  const ModelParams& params() const { return params_; }
  const PhaseGrid& grid() const { return grid_; }
  const SpatialField& rho0() const { return rho0_; }
  const Eigen::MatrixXd& psi() const { return psi_; }
  const SolverOptions& options() const { return options_; }
  Eigen::Index nodes() const { return rho0_.size(); }

  /// rho0 * Gauss(v; V0, eps/rho0) * Gauss(w; W0, sigma_w^2), renormalised
  /// so that every node carries exactly rho0(x_i).
  KineticState initialize_well_prepared(const Eigen::VectorXd& V0, const Eigen::VectorXd& W0) const;

  /// Recomputes the cached V and W of the state from f.
  void refresh_moments(KineticState& state) const;
  CouplingFields coupling(const Density& f, const Eigen::VectorXd* V_lin = nullptr) const;
  CouplingFields coupling(const KineticState& state) const { return coupling(state.f); }

  /// Exact OU transition over dt toward the current V (refreshed first).
  KineticState ou_relaxation_substep(const KineticState& state, double dt) const;
  /// One upwind transport update; throws CflViolation when dt is too large.
  KineticState transport_substep(const KineticState& state, double dt) const;
  /// Strang step. Companions are advanced with the coefficients of f.
  void step(KineticState& state, double dt, std::span<Density* const> companions = {}) const;
  KineticState step(const KineticState& state, double dt) const;

  /// Linear updates with frozen coefficients.
  void apply_ou(Density& f, const CouplingFields& c, double dt) const;
  /// Returns the outflow per node. Subcycles when dt exceeds the CFL limit.
  Eigen::VectorXd apply_transport(Density& f, const CouplingFields& c, double dt) const;
  void step_frozen(Density& f, const CouplingFields& c, double dt) const;

  /// Largest dt satisfying the transport CFL for these coefficients.
  double cfl_limit(const CouplingFields& c) const;
  /// 0.5 x the w-advection CFL bound.
  double default_dt() const;

  MomentSnapshot diagnose(const KineticState& state) const;

  /// Advances to t_end and returns one snapshot at t0 and at every
  /// multiple of snapshot_dt. Observers see the state at the same times.
  std::vector<MomentSnapshot> run(KineticState& state, const Schedule& schedule,
                                  const std::vector<Observer>& observers = {},
                                  std::span<Density* const> companions = {}) const;

  /// Checks per-node mass drift and throws MassDriftExceeded.
  void check_mass(const KineticState& state) const;

 private:
  double v_velocity(const CouplingFields& c, Eigen::Index i, double v, double w) const;

  ModelParams params_;
  PhaseGrid grid_;
  Kernel kernel_;
  SpatialField rho0_;
  SolverOptions options_;
  Eigen::MatrixXd psi_;
  Eigen::VectorXd psi_rho_;
  int q_moment_;
};

/// Mass-conserving Gaussian convolution of a column: the source at v_j is
/// moved to mean v_j * e + shift with standard deviation s.
void ou_column(const double* in, double* out, int n, double v_min, double dv, double e, double shift, double s);

}  // namespace fhn
