#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fhn/errors.hpp"

namespace fhn {

/// Polynomial voltage drift N(v) = sum_k c_k v^k.
///
/// The cubic FitzHugh-Nagumo choice v - v^3 is the default. Other
/// polynomials are accepted; whether they are confining is checked by
/// assumption_report(), not by the constructor, so test-only drifts such
/// as N = 0 or N = -v can still be simulated.
class Drift {
 public:
  Drift() : Drift(cubic()) {}

  static Drift cubic() { return Drift({0.0, 1.0, 0.0, -1.0}, "cubic"); }
  static Drift linear() { return Drift({0.0, -1.0}, "linear"); }
  static Drift zero() { return Drift({0.0}, "zero"); }
  static Drift polynomial(std::vector<double> coefficients) {
    return Drift(std::move(coefficients), "polynomial");
  }

  template <typename Scalar>
  Scalar value(Scalar v) const {
    Scalar acc(0);
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * v + Scalar(*it);
    return acc;
  }

  template <typename Scalar>
  Scalar derivative(Scalar v) const {
    Scalar acc(0);
    for (std::size_t k = c_.size(); k-- > 1;) acc = acc * v + Scalar(double(k) * c_[k]);
    return acc;
  }

  template <typename Scalar>
  Scalar second_derivative(Scalar v) const {
    Scalar acc(0);
    for (std::size_t k = c_.size(); k-- > 2;) acc = acc * v + Scalar(double(k * (k - 1)) * c_[k]);
    return acc;
  }

  /// n(v) = int_0^v N(s) ds, so n(0) = 0.
  template <typename Scalar>
  Scalar primitive(Scalar v) const {
    Scalar acc(0);
    for (std::size_t k = c_.size(); k-- > 0;) acc = acc * v + Scalar(c_[k] / double(k + 1));
    return acc * v;
  }

  int degree() const;
  double leading() const;
  const std::vector<double>& coefficients() const { return c_; }
  const std::string& name() const { return name_; }

 private:
  Drift(std::vector<double> coefficients, std::string name);

  std::vector<double> c_;
  std::string name_;
};

struct ModelParams {
  double a = 0.5;
  double b = 0.5;
  double c = 0.1;
  double epsilon = 0.05;
  int p = 3;
  int p_prime = 2;
  double m_star = 0.5;
  Drift drift = Drift::cubic();

  /// Throws ConfigError unless b > 0, epsilon > 0 and m_star > 0.
  void validate() const;
};

template <typename Scalar>
Scalar drift_N(const ModelParams& params, Scalar v) {
  return params.drift.value(v);
}

template <typename Scalar>
Scalar primitive_n(const ModelParams& params, Scalar v) {
  return params.drift.primitive(v);
}

template <typename Scalar>
Scalar adaptation_A(const ModelParams& params, Scalar v, Scalar w) {
  return Scalar(params.a) * v - Scalar(params.b) * w + Scalar(params.c);
}

/// Nodal values on the spatial domain K with midpoint quadrature weights.
struct SpatialField {
  Eigen::VectorXd nodes;
  Eigen::VectorXd values;
  Eigen::VectorXd quad_weights;

  Eigen::Index size() const { return nodes.size(); }
  double integral() const { return quad_weights.dot(values); }
  SpatialField with_values(Eigen::VectorXd v) const { return {nodes, std::move(v), quad_weights}; }
};

/// Cell-centred uniform grid on K = [0, 1], values zero.
SpatialField uniform_field(Eigen::Index n);

/// rho0 = 1 everywhere.
SpatialField uniform_density(Eigen::Index n);

/// 1 + amplitude cos(2 pi x), clipped to [m_star, 1/m_star] and renormalised.
SpatialField bump_density(Eigen::Index n, double amplitude, double m_star);

/// Checks m_star <= rho0 <= 1/m_star and unit total mass (1e-10).
void check_density(const SpatialField& rho0, double m_star);

enum class KernelKind { Zero, Exponential, PowerLaw };

struct Kernel {
  KernelKind kind = KernelKind::Zero;
  double strength = 0.0;
  double kappa = 1.0;  // exponential decay rate
  double beta = 0.5;   // power-law exponent
  int dimension = 1;

  static Kernel zero() { return {}; }
  static Kernel exponential(double kappa, double strength) {
    return {KernelKind::Exponential, strength, kappa, 0.5, 1};
  }
  static Kernel power_law(double beta, double strength) {
    return {KernelKind::PowerLaw, strength, 1.0, beta, 1};
  }

  /// Psi(x, x'); the power-law singularity is handled in kernel_matrix.
  double operator()(double x, double xp) const;
};

/// Dense matrix of Psi(x_i, x_j). Power-law diagonals are capped at the
/// value half a grid cell away. Throws NonIntegrableKernel for beta >= d.
Eigen::MatrixXd kernel_matrix(const Kernel& kernel, const SpatialField& field);

/// Psi *_r g at every node: sum_j Psi(x_i, x_j) g(x_j) dx_j.
inline Eigen::VectorXd convolve_right(const Eigen::MatrixXd& psi, const SpatialField& field,
                                      const Eigen::VectorXd& g) {
  return psi * field.quad_weights.cwiseProduct(g);
}

struct AssumptionCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Evaluates the standing assumptions on the drift, kernel and rho0.
std::vector<AssumptionCheck> assumption_report(const ModelParams& params, const Kernel& kernel,
                                               const SpatialField& rho0);

}  // namespace fhn
