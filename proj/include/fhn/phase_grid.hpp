#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "fhn/errors.hpp"

namespace fhn {

/// Grid function on the (v, w) plane: rows index v, columns index w.
using PhaseField = Eigen::MatrixXd;

/// Uniform cell-centred tensor grid on [v_min, v_max] x [w_min, w_max].
class PhaseGrid {
 public:
  PhaseGrid(double v_center, double v_half_width, int n_v, double w_center, double w_half_width, int n_w);

  /// Default box: v, w in [-4, 4], 192 x 192 cells.
  static PhaseGrid standard(int n = 192) { return PhaseGrid(0.0, 4.0, n, 0.0, 4.0, n); }

  double v_min() const { return v_min_; }
  double v_max() const { return v_max_; }
  double w_min() const { return w_min_; }
  double w_max() const { return w_max_; }
  int n_v() const { return n_v_; }
  int n_w() const { return n_w_; }
  double dv() const { return dv_; }
  double dw() const { return dw_; }
  double cell_area() const { return dv_ * dw_; }

  double v(Eigen::Index j) const { return v_min_ + (double(j) + 0.5) * dv_; }
  double w(Eigen::Index k) const { return w_min_ + (double(k) + 0.5) * dw_; }
  const Eigen::VectorXd& v_centers() const { return v_centers_; }
  const Eigen::VectorXd& w_centers() const { return w_centers_; }

  PhaseField zeros() const { return PhaseField::Zero(n_v_, n_w_); }

  /// Samples g(v, w) at the cell centres.
  template <typename Fn>
  PhaseField sample(Fn&& g) const {
    PhaseField out(n_v_, n_w_);
    for (int k = 0; k < n_w_; ++k)
      for (int j = 0; j < n_v_; ++j) out(j, k) = g(v(j), w(k));
    return out;
  }

  std::string describe() const;

 private:
  double v_min_, v_max_, w_min_, w_max_;
  int n_v_, n_w_;
  double dv_, dw_;
  Eigen::VectorXd v_centers_, w_centers_;
};

void require_finite(const PhaseField& f);

/// Midpoint quadrature sum_jk f(v_j, w_k) weight(v_j, w_k) dv dw.
template <typename Weight>
double moment(const PhaseGrid& grid, const PhaseField& f, Weight&& weight) {
  require_finite(f);
  double acc = 0.0;
  for (int k = 0; k < grid.n_w(); ++k) {
    const double w = grid.w(k);
    for (int j = 0; j < grid.n_v(); ++j) acc += f(j, k) * weight(grid.v(j), w);
  }
  return acc * grid.cell_area();
}

inline double mass(const PhaseGrid& grid, const PhaseField& f) {
  require_finite(f);
  return f.sum() * grid.cell_area();
}

/// Mass carried by the outermost ring of cells.
double truncation_report(const PhaseGrid& grid, const PhaseField& f);

}  // namespace fhn
