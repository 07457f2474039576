#include "fhn/phase_grid.hpp"

#include <sstream>

namespace fhn {

PhaseGrid::PhaseGrid(double v_center, double v_half_width, int n_v, double w_center, double w_half_width, int n_w)
    : v_min_(v_center - v_half_width),
      v_max_(v_center + v_half_width),
      w_min_(w_center - w_half_width),
      w_max_(w_center + w_half_width),
      n_v_(n_v),
      n_w_(n_w) {
  if (n_v < 8 || n_w < 8) throw ConfigError("phase grid needs at least 8 cells per direction");
  if (!(v_half_width > 0.0) || !(w_half_width > 0.0)) throw ConfigError("phase grid half widths must be positive");
  dv_ = (v_max_ - v_min_) / n_v_;
  dw_ = (w_max_ - w_min_) / n_w_;
  v_centers_.resize(n_v_);
  w_centers_.resize(n_w_);
  for (int j = 0; j < n_v_; ++j) v_centers_[j] = v(j);
  for (int k = 0; k < n_w_; ++k) w_centers_[k] = w(k);
}

std::string PhaseGrid::describe() const {
  std::ostringstream os;
  os << "v in [" << v_min_ << ", " << v_max_ << "] x " << n_v_ << ", w in [" << w_min_ << ", " << w_max_ << "] x "
     << n_w_;
  return os.str();
}

void require_finite(const PhaseField& f) {
  if (!f.allFinite()) throw NonFiniteInput("grid function contains non-finite entries");
}

double truncation_report(const PhaseGrid& grid, const PhaseField& f) {
  const int nv = grid.n_v(), nw = grid.n_w();
  double ring = f.row(0).sum() + f.row(nv - 1).sum();
  ring += f.col(0).segment(1, nv - 2).sum() + f.col(nw - 1).segment(1, nv - 2).sum();
  return ring * grid.cell_area();
}

}  // namespace fhn
