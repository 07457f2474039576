#include "fhn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace fhn {

Drift::Drift(std::vector<double> coefficients, std::string name)
    : c_(std::move(coefficients)), name_(std::move(name)) {
  while (c_.size() > 1 && c_.back() == 0.0) c_.pop_back();
  if (c_.empty()) c_.push_back(0.0);
}

int Drift::degree() const { return static_cast<int>(c_.size()) - 1; }

double Drift::leading() const { return c_.back(); }

void ModelParams::validate() const {
  if (!(b > 0.0)) throw ConfigError("model.b must be strictly positive");
  if (!(epsilon > 0.0)) throw ConfigError("model.epsilon must be strictly positive");
  if (!(m_star > 0.0)) throw ConfigError("model.m_star must be strictly positive");
  if (p_prime < 0) throw ConfigError("model.p_prime must be non-negative");
  if (!std::isfinite(a) || !std::isfinite(c)) throw ConfigError("model.a and model.c must be finite");
}

SpatialField uniform_field(Eigen::Index n) {
  if (n < 1) throw ConfigError("spatial grid needs at least one node");
  SpatialField field;
  const double h = 1.0 / double(n);
  field.nodes = Eigen::VectorXd::LinSpaced(n, 0.5 * h, 1.0 - 0.5 * h);
  field.values = Eigen::VectorXd::Zero(n);
  field.quad_weights = Eigen::VectorXd::Constant(n, h);
  return field;
}

SpatialField uniform_density(Eigen::Index n) {
  SpatialField field = uniform_field(n);
  field.values.setOnes();
  return field;
}

SpatialField bump_density(Eigen::Index n, double amplitude, double m_star) {
  SpatialField field = uniform_field(n);
  const double lo = m_star, hi = 1.0 / m_star;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double raw = 1.0 + amplitude * std::cos(2.0 * std::numbers::pi * field.nodes[i]);
    field.values[i] = std::clamp(raw, lo, hi);
  }
  field.values /= field.integral();
  return field;
}

void check_density(const SpatialField& rho0, double m_star) {
  for (Eigen::Index i = 0; i < rho0.size(); ++i) {
    const double r = rho0.values[i];
    if (!(r >= m_star && r <= 1.0 / m_star)) {
      std::ostringstream os;
      os << "rho0(x_" << i << ") = " << r << " outside [" << m_star << ", " << 1.0 / m_star << "]";
      throw ConfigError(os.str());
    }
  }
  if (std::abs(rho0.integral() - 1.0) > 1e-10) throw ConfigError("rho0 does not integrate to 1 over K");
}

double Kernel::operator()(double x, double xp) const {
  const double r = std::abs(x - xp);
  switch (kind) {
    case KernelKind::Zero:
      return 0.0;
    case KernelKind::Exponential:
      return strength * std::exp(-kappa * r);
    case KernelKind::PowerLaw:
      return strength * std::pow(r, -beta);
  }
  return 0.0;
}

Eigen::MatrixXd kernel_matrix(const Kernel& kernel, const SpatialField& field) {
  const Eigen::Index n = field.size();
  if (kernel.strength < 0.0) throw ConfigError("kernel strength must be non-negative");
  for (Eigen::Index i = 1; i < n; ++i)
    if (!(field.nodes[i] > field.nodes[i - 1])) throw ConfigError("spatial nodes must be distinct and increasing");

  if (kernel.kind == KernelKind::PowerLaw && kernel.beta >= double(kernel.dimension)) {
    // Row integrals of |x - x'|^-beta over K diverge like h^(d - beta) as h -> 0.
    throw NonIntegrableKernel("power-law kernel with beta >= d has divergent row norms under refinement");
  }

  Eigen::MatrixXd psi(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (kernel.kind == KernelKind::PowerLaw && i == j) {
        psi(i, j) = kernel.strength * std::pow(0.5 * field.quad_weights[i], -kernel.beta);
      } else {
        psi(i, j) = kernel(field.nodes[i], field.nodes[j]);
      }
    }
  }
  return psi;
}

std::vector<AssumptionCheck> assumption_report(const ModelParams& params, const Kernel& kernel,
                                               const SpatialField& rho0) {
  std::vector<AssumptionCheck> out;
  auto add = [&](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };

  {
    std::ostringstream os;
    os << "b=" << params.b << " epsilon=" << params.epsilon << " m_star=" << params.m_star;
    add("parameters", params.b > 0 && params.epsilon > 0 && params.m_star > 0, os.str());
  }
  {
    const int d = params.drift.degree();
    const bool odd = d % 2 == 1;
    const bool neg = params.drift.leading() < 0;
    std::ostringstream os;
    os << params.drift.name() << " drift: degree " << d << ", leading coefficient " << params.drift.leading()
       << ", p=" << params.p;
    add("drift confinement", odd && neg && d == params.p && params.p >= 2, os.str());
  }
  {
    const int need = std::max(params.drift.degree() - 1, 0);
    std::ostringstream os;
    os << "|N'|+|N''| grows like |v|^" << need << ", p'=" << params.p_prime;
    add("drift derivative growth", params.p_prime >= need, os.str());
  }
  {
    bool ok = true;
    std::ostringstream os;
    try {
      const Eigen::MatrixXd psi = kernel_matrix(kernel, rho0);
      const Eigen::MatrixXd weighted = psi.cwiseAbs();
      const double col = (rho0.quad_weights.transpose() * weighted).maxCoeff();
      const double row = (weighted * rho0.quad_weights).maxCoeff();
      ok = std::isfinite(col) && std::isfinite(row);
      os << "max column L1 " << col << ", max row L1 " << row;
    } catch (const Error& e) {
      ok = false;
      os << e.what();
    }
    add("kernel integrability", ok, os.str());
  }
  {
    const double mass = rho0.integral();
    std::ostringstream os;
    os << "int_K rho0 = " << mass;
    add("initial mass", std::abs(mass - 1.0) <= 1e-10 && rho0.values.minCoeff() >= 0, os.str());
  }
  {
    const double lo = rho0.values.minCoeff(), hi = rho0.values.maxCoeff();
    std::ostringstream os;
    os << "rho0 in [" << lo << ", " << hi << "], bounds [" << params.m_star << ", " << 1.0 / params.m_star << "]";
    add("density bounds", lo >= params.m_star && hi <= 1.0 / params.m_star, os.str());
  }
  return out;
}

}  // namespace fhn
