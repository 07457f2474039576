#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fhn/model.hpp"

namespace fhn {

/// n neurons frozen at the spatial nodes, one cell per node.
struct Ensemble {
  Eigen::Index n = 0;
  std::vector<Eigen::Index> cell;  // spatial cell of each neuron
  Eigen::VectorXd positions;
  Eigen::VectorXd v, w;
  std::uint64_t rng_seed = 0;
  std::uint64_t steps = 0;
  double t = 0.0;
};

/// Standard normal deviate that depends only on its four arguments.
double counter_gaussian(std::uint64_t seed, std::uint64_t neuron, std::uint64_t step, std::uint64_t stream);

struct CellMoments {
  Eigen::VectorXi count;
  Eigen::VectorXd mean_v, mean_w, Mq, Dq;
};

class ParticleSystem {
 public:
  ParticleSystem(ModelParams params, Kernel kernel, SpatialField rho0);

  const ModelParams& params() const { return params_; }
  const SpatialField& cells() const { return rho0_; }

  /// Splits n neurons over the cells in proportion to rho0 dx (largest
  /// remainder) and samples v ~ N(V0, eps/rho0), w ~ N(W0, sigma_w^2).
  Ensemble init(Eigen::Index n, const Eigen::VectorXd& V0, const Eigen::VectorXd& W0, double sigma_w,
                std::uint64_t seed) const;
  /// Places neurons explicitly; cells are given per neuron.
  Ensemble init_states(std::vector<Eigen::Index> cell, Eigen::VectorXd v, Eigen::VectorXd w,
                       std::uint64_t seed) const;

  /// Largest coupling rate rho_hat/eps + (Psi *_r rho_hat) over cells.
  double coupling_rate(const Ensemble& ens) const;
  /// Euler-Maruyama step; throws StabilityViolation when dt * rate > 1/4.
  void em_step(Ensemble& ens, double dt, bool noise = true) const;

 private:
  ModelParams params_;
  SpatialField rho0_;
  Eigen::MatrixXd psi_;
};

/// Plug-in estimates per cell; throws EmptyCell.
CellMoments empirical_moments(const Ensemble& ens, Eigen::Index cells, double q);

}  // namespace fhn
