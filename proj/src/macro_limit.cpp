#include "fhn/macro_limit.hpp"

#include <cmath>
#include <sstream>

namespace fhn {

Eigen::VectorXd nonlocal_L(const Eigen::VectorXd& V, const SpatialField& rho0, const Eigen::MatrixXd& psi) {
  const Eigen::VectorXd psi_rho = convolve_right(psi, rho0, rho0.values);
  const Eigen::VectorXd psi_rho_V = convolve_right(psi, rho0, rho0.values.cwiseProduct(V));
  return V.cwiseProduct(psi_rho) - psi_rho_V;
}

MacroSystem::MacroSystem(ModelParams params, Kernel kernel, SpatialField rho0)
    : params_(std::move(params)), rho0_(std::move(rho0)) {
  params_.validate();
  psi_ = kernel_matrix(kernel, rho0_);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> MacroSystem::rhs(const MacroState& s) const {
  const Eigen::VectorXd LV = L(s.V);
  Eigen::VectorXd dV(s.V.size()), dW(s.V.size());
  for (Eigen::Index i = 0; i < s.V.size(); ++i) {
    dV[i] = drift_N(params_, s.V[i]) - s.W[i] - LV[i];
    dW[i] = adaptation_A(params_, s.V[i], s.W[i]);
  }
  return {dV, dW};
}

std::vector<MacroState> MacroSystem::integrate(const MacroState& initial, double t_end, double dt,
                                               double stride) const {
  if (!(dt > 0.0)) throw ConfigError("macro dt must be positive");
  const double span = t_end - initial.t;
  if (span < 0.0) throw ConfigError("macro t_end lies before the initial time");
  std::vector<MacroState> out{initial};
  if (span == 0.0) return out;

  int blocks = 1;
  double block = span;
  if (stride > 0.0) {
    blocks = static_cast<int>(std::lround(span / stride));
    if (blocks < 1 || std::abs(blocks * stride - span) > 1e-9 * std::max(1.0, span))
      throw ConfigError("macro t_end - t must be a whole number of strides");
    block = stride;
  }
  const int per_block = std::max(1, static_cast<int>(std::ceil(block / dt - 1e-9)));
  const double h = block / per_block;

  MacroState s = initial;
  for (int b = 0; b < blocks; ++b) {
    for (int n = 0; n < per_block; ++n) {
      const auto [k1v, k1w] = rhs(s);
      const auto [k2v, k2w] = rhs({s.t + 0.5 * h, s.V + 0.5 * h * k1v, s.W + 0.5 * h * k1w});
      const auto [k3v, k3w] = rhs({s.t + 0.5 * h, s.V + 0.5 * h * k2v, s.W + 0.5 * h * k2w});
      const auto [k4v, k4w] = rhs({s.t + h, s.V + h * k3v, s.W + h * k3w});
      s.V += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
      s.W += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
      s.t = initial.t + b * block + (n + 1) * h;
      if (!s.V.allFinite() || s.V.cwiseAbs().maxCoeff() > 10.0) {
        std::ostringstream os;
        os << "|V| exceeded 10 at t = " << s.t;
        throw BlowupDetected(os.str());
      }
    }
    s.t = initial.t + (b + 1) * block;
    if (stride > 0.0 || b + 1 == blocks) out.push_back(s);
  }
  return out;
}

EpsMacroReconstruction eps_macro_reconstruction(const std::vector<MomentSnapshot>& snapshots,
                                                const MacroSystem& system) {
  if (snapshots.size() < 3) throw MissingSnapshots("need at least three kinetic snapshots");
  EpsMacroReconstruction out;
  for (const MomentSnapshot& s : snapshots) out.trajectory.push_back({s.t, s.V, s.W});

  for (std::size_t n = 1; n + 1 < snapshots.size(); ++n) {
    const MomentSnapshot &prev = snapshots[n - 1], &cur = snapshots[n], &next = snapshots[n + 1];
    const double span = next.t - prev.t;
    if (!(span > 0.0)) throw MissingSnapshots("snapshot times must increase");
    const auto [fv, fw] = system.rhs({cur.t, cur.V, cur.W});
    MacroResidual r;
    r.t = cur.t;
    r.dV = (next.V - prev.V) / span - (fv + cur.E);
    r.dW = (next.W - prev.W) / span - fw;
    out.max_abs_residual =
        std::max({out.max_abs_residual, r.dV.cwiseAbs().maxCoeff(), r.dW.cwiseAbs().maxCoeff()});
    out.residuals.push_back(std::move(r));
  }
  return out;
}

}  // namespace fhn
