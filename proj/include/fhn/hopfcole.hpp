#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "fhn/kinetic.hpp"
#include "fhn/model.hpp"
#include "fhn/phase_grid.hpp"

namespace fhn {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct HopfColeField {
  Density phi;              // NaN outside the mask
  std::vector<Mask> mask;
  double floor = 0.0;       // absolute density threshold
  double epsilon = 0.0;
};

/// phi = eps ln(sqrt(2 pi eps / rho0) f) where f > floor. A non-positive
/// floor selects 1e-30 x max f.
HopfColeField hopf_cole(const Density& f, const SpatialField& rho0, double epsilon, double floor = 0.0);
/// sqrt(rho0 / (2 pi eps)) exp(phi / eps) on the mask, 0 elsewhere.
Density reconstruct(const HopfColeField& field, const SpatialField& rho0);

/// (phi + rho0 |v - V|^2 / 2) / eps on the mask, NaN elsewhere.
Density phi1(const HopfColeField& field, const PhaseGrid& grid, const SpatialField& rho0, const Eigen::VectorXd& V);

/// Everything the order-one HJ operator needs besides chi itself.
struct HJContext {
  ModelParams params;
  PhaseGrid grid;
  SpatialField rho0;
  Eigen::MatrixXd psi;
};

/// n(v) - n(V) - (v - V)[N(V) + (w - W) + E + (Psi *_r rho0)(v - V) / 2].
PhaseField phi1_bar_node(const ModelParams& params, const PhaseGrid& grid, double V, double W, double E,
                         double psi_rho);
Density phi1_bar(const HJContext& ctx, const MomentSnapshot& macro);

struct CorrectorParams {
  double alpha0 = 1.0;
  double m0 = 0.0;
  double C = 1.0;
};

double alpha_at(double alpha0, double a, double b, double t);
double m_at(const CorrectorParams& cp, double a, double b, double t);

struct CorrectorBundle {
  Density phi1_bar;
  Density psi;
  CorrectorParams params;
  double t = 0.0;
  double alpha_t = 0.0;
  double m_t = 0.0;
};

/// Throws NonPositiveAlpha0.
CorrectorBundle corrector_bundle(const HJContext& ctx, const MomentSnapshot& macro, const CorrectorParams& cp);

struct ChiPair {
  Density minus, plus;
};
ChiPair chi_bounds(const CorrectorBundle& bundle);

/// Order-one HJ operator applied to chi at the middle of three snapshots,
/// with centred differences in v, w and t. The outer ring is NaN.
Density hj_residual_order1(const std::array<const Density*, 3>& chi, const std::array<double, 3>& times,
                           const MomentSnapshot& macro, const HJContext& ctx);

struct ResidualRange {
  double min = 0.0, max = 0.0;
  Eigen::Index cells = 0;
};
/// Extremes of the finite residual entries with |v - V| <= half_width and
/// |w - W| <= half_width. Throws BoundaryOnly when only the outer ring is
/// inside the box.
ResidualRange residual_range(const Density& residual, const PhaseGrid& grid, const Eigen::VectorXd& V,
                             const Eigen::VectorXd& W, double half_width);

struct LemmaReport {
  double C = 0.0;
  bool certified = false;
  std::vector<double> times, min_plus, max_minus;
  int doublings = 0;
};

/// Checks residual(chi_+) >= -tol and residual(chi_-) <= tol at every
/// interior snapshot, doubling C from c_start until both hold or C > c_cap.
LemmaReport certify_lemma(const HJContext& ctx, const std::vector<MomentSnapshot>& snapshots, double alpha0,
                          double tol = 1e-2, double half_width = 2.0, double c_start = 1.0,
                          double c_cap = 1024.0);

struct TheoremBound {
  double t = 0.0;
  double statistic = 0.0;    // normalised by eps (1 + |u|^2)
  double unnormalized = 0.0;
  Eigen::Index cells = 0;
};

/// sup over the mask inside the centred box of |phi + rho0 |v - V|^2 / 2 - eps n(v)|,
/// where (V, W) is the limit macroscopic state. Throws EmptyMask.
TheoremBound theorem_bound_check(const HopfColeField& field, const PhaseGrid& grid, const SpatialField& rho0,
                                 const ModelParams& params, const Eigen::VectorXd& V, const Eigen::VectorXd& W,
                                 double t, double half_width = 2.0);

/// f_+- = sqrt(rho0 / (2 pi eps)) exp(-rho0 |v - V|^2 / (2 eps) + chi_+-).
Density envelope(const HJContext& ctx, const MomentSnapshot& macro, const Density& chi);

struct Envelopes {
  Density plus, minus;
  CorrectorParams params;  // with m0 raised so that the ordering holds
};

/// Builds f_+ and f_- from chi_+- at the snapshot, raising m0 until
/// f_- <= f <= f_+ holds on the whole grid.
Envelopes build_envelopes(const HJContext& ctx, const KineticState& state, const MomentSnapshot& macro,
                          CorrectorParams cp);

struct SandwichReport {
  std::vector<double> t, min_gap_plus, min_gap_minus, max_f;
  // min over the mask of (phi1_bar + psi - phi1) and (phi1 - phi1_bar + psi);
  // adding m(t) gives the log gaps to the analytic envelopes chi_+-.
  std::vector<double> core_gap_plus, core_gap_minus;
  bool ordered = true;
  double tolerance = 1e-10;
};

/// Evolves f_+ and f_- with the coefficients of f and records
/// min(f_+ - f) and min(f - f_-). Throws InitialOrderingViolated. A positive
/// alpha0 also records the core gaps. Extra observers run after the gap
/// bookkeeping at every snapshot.
SandwichReport comparison_sandwich(const KineticSolver& solver, KineticState& state, Density fplus, Density fminus,
                                   const Schedule& schedule, double alpha0 = 0.0, double tolerance = 1e-10,
                                   const std::vector<Observer>& extra = {},
                                   std::vector<MomentSnapshot>* snapshots = nullptr);

}  // namespace fhn
