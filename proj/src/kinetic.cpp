#include "fhn/kinetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace fhn {

namespace {

constexpr double kFlush = 1e-250;

double phi_factor(double lam, double dt) {
  const double x = lam * dt;
  if (std::abs(x) < 1e-12) return dt;
  return -std::expm1(-x) / lam;
}

double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

struct NodeSums {
  double mass, v, w;
};

NodeSums node_sums(const PhaseGrid& grid, const PhaseField& f) {
  const Eigen::VectorXd col = f.rowwise().sum();  // sum over w at each v
  const Eigen::RowVectorXd row = f.colwise().sum();
  const double m = col.sum();
  return {m, grid.v_centers().dot(col), row.dot(grid.w_centers())};
}

}  // namespace

void ou_column(const double* in, double* out, int n, double v_min, double dv, double e, double shift, double s) {
  thread_local std::vector<double> wbuf;
  wbuf.resize(static_cast<std::size_t>(n));
  const int radius = s > 0 ? static_cast<int>(std::ceil(12.0 * s / dv)) : 0;

  for (int j = 0; j < n; ++j) {
    const double src = in[j];
    if (src == 0.0) continue;
    const double vj = v_min + (j + 0.5) * dv;
    const double m = vj * e + shift;
    const double x = (m - v_min) / dv - 0.5;

    if (s < 0.5 * dv) {
      // Kernel narrower than a cell: split between the two neighbours so
      // the mean is still exact.
      const double fl = std::floor(x);
      int i0 = static_cast<int>(fl);
      double frac = x - fl;
      if (i0 < 0) {
        i0 = 0;
        frac = 0.0;
      } else if (i0 >= n - 1) {
        i0 = n - 1;
        frac = 0.0;
      }
      out[i0] += src * (1.0 - frac);
      if (frac > 0.0) out[i0 + 1] += src * frac;
      continue;
    }

    const int i0 = std::clamp(static_cast<int>(std::lround(x)), 0, n - 1);
    const int lo = std::max(0, i0 - radius), hi = std::min(n - 1, i0 + radius);
    const double inv2s2 = 1.0 / (2.0 * s * s);
    const double q = std::exp(-dv * dv / (s * s));
    const double d = v_min + (i0 + 0.5) * dv - m;

    wbuf[i0] = 1.0;
    double sum = 1.0;
    int top = i0, bottom = i0;
    {
      double r = std::exp(-(2.0 * d * dv + dv * dv) * inv2s2);
      double wv = 1.0;
      for (int i = i0 + 1; i <= hi; ++i) {
        wv *= r;
        r *= q;
        if (wv < kFlush) break;
        wbuf[i] = wv;
        sum += wv;
        top = i;
      }
    }
    {
      double r = std::exp(-(-2.0 * d * dv + dv * dv) * inv2s2);
      double wv = 1.0;
      for (int i = i0 - 1; i >= lo; --i) {
        wv *= r;
        r *= q;
        if (wv < kFlush) break;
        wbuf[i] = wv;
        sum += wv;
        bottom = i;
      }
    }
    const double scale = src / sum;
    for (int i = bottom; i <= top; ++i) out[i] += scale * wbuf[i];
  }
  for (int i = 0; i < n; ++i)
    if (out[i] < kFlush) out[i] = 0.0;
}

KineticSolver::KineticSolver(ModelParams params, PhaseGrid grid, Kernel kernel, SpatialField rho0,
                             SolverOptions options)
    : params_(std::move(params)),
      grid_(std::move(grid)),
      kernel_(kernel),
      rho0_(std::move(rho0)),
      options_(options) {
  params_.validate();
  check_density(rho0_, params_.m_star);
  if (!(options_.cfl > 0.0 && options_.cfl <= 1.0)) throw ConfigError("cfl must lie in (0, 1]");
  if (!(options_.sigma_w > 0.0)) throw ConfigError("sigma_w must be positive");
  psi_ = kernel_matrix(kernel_, rho0_);
  psi_rho_ = convolve_right(psi_, rho0_, rho0_.values);
  q_moment_ = std::max(2, 2 * (params_.p + params_.p_prime));
}

KineticState KineticSolver::initialize_well_prepared(const Eigen::VectorXd& V0, const Eigen::VectorXd& W0) const {
  const Eigen::Index nx = nodes();
  if (V0.size() != nx || W0.size() != nx) throw ConfigError("initial profiles must have one value per spatial node");
  const double eps = params_.epsilon, sw = options_.sigma_w;

  KineticState state;
  state.rho0 = rho0_;
  state.f.resize(static_cast<std::size_t>(nx));
  for (Eigen::Index i = 0; i < nx; ++i) {
    const double rho = rho0_.values[i];
    const double sv = std::sqrt(eps / rho);
    if (V0[i] - 4 * sv < grid_.v_min() || V0[i] + 4 * sv > grid_.v_max() || W0[i] - 4 * sw < grid_.w_min() ||
        W0[i] + 4 * sw > grid_.w_max()) {
      std::ostringstream os;
      os << "initial data at node " << i << " is closer than 4 standard deviations to the phase box edge";
      throw ConfigError(os.str());
    }
    Eigen::VectorXd gv(grid_.n_v()), gw(grid_.n_w());
    for (int j = 0; j < grid_.n_v(); ++j) gv[j] = std::exp(-rho * std::pow(grid_.v(j) - V0[i], 2) / (2 * eps));
    for (int k = 0; k < grid_.n_w(); ++k) gw[k] = std::exp(-std::pow(grid_.w(k) - W0[i], 2) / (2 * sw * sw));
    PhaseField f = gv * gw.transpose();
    f *= rho / (f.sum() * grid_.cell_area());
    const double ring = truncation_report(grid_, f);
    if (ring > options_.truncation_tolerance) {
      std::ostringstream os;
      os << "initial boundary-ring mass " << ring << " at node " << i;
      throw TruncationViolation(os.str(), ring);
    }
    state.f[static_cast<std::size_t>(i)] = std::move(f);
  }
  state.outflow = Eigen::VectorXd::Zero(nx);
  state.initial_mass.resize(nx);
  for (Eigen::Index i = 0; i < nx; ++i) state.initial_mass[i] = mass(grid_, state.f[static_cast<std::size_t>(i)]);
  refresh_moments(state);
  return state;
}

void KineticSolver::refresh_moments(KineticState& state) const {
  const Eigen::Index nx = nodes();
  state.V.resize(nx);
  state.W.resize(nx);
  for (Eigen::Index i = 0; i < nx; ++i) {
    const PhaseField& f = state.f[static_cast<std::size_t>(i)];
    require_finite(f);
    const NodeSums s = node_sums(grid_, f);
    state.V[i] = s.v / s.mass;
    state.W[i] = s.w / s.mass;
  }
}

CouplingFields KineticSolver::coupling(const Density& f, const Eigen::VectorXd* V_lin) const {
  const Eigen::Index nx = nodes();
  CouplingFields c;
  c.V.resize(nx);
  c.W.resize(nx);
  for (Eigen::Index i = 0; i < nx; ++i) {
    const NodeSums s = node_sums(grid_, f[static_cast<std::size_t>(i)]);
    if (!(s.mass > 0.0)) throw NonFiniteInput("node carries no mass");
    c.V[i] = s.v / s.mass;
    c.W[i] = s.w / s.mass;
  }
  c.V_lin = V_lin ? *V_lin : c.V;
  c.psi_rho = psi_rho_;
  c.psi_rho_V = convolve_right(psi_, rho0_, rho0_.values.cwiseProduct(c.V));
  return c;
}

double KineticSolver::v_velocity(const CouplingFields& c, Eigen::Index i, double v, double w) const {
  const Drift& N = params_.drift;
  if (options_.drift_split == DriftSplit::Linearized) {
    const double L = c.V_lin[i];
    return N.value(v) - N.value(L) - N.derivative(L) * (v - L);
  }
  return N.value(v) - w - c.psi_rho[i] * v + c.psi_rho_V[i];
}

void KineticSolver::apply_ou(Density& f, const CouplingFields& c, double dt) const {
  const Eigen::Index nx = nodes();
  const double eps = params_.epsilon;
  const Drift& N = params_.drift;
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < nx; ++i) {
    const double rho = rho0_.values[i];
    double lam = rho / eps, base = lam * c.V[i];
    bool per_column_w = false;
    if (options_.drift_split == DriftSplit::Linearized) {
      const double L = c.V_lin[i];
      lam += -N.derivative(L) + c.psi_rho[i];
      base += N.value(L) - N.derivative(L) * L + c.psi_rho_V[i];
      per_column_w = true;
    }
    const double e = std::exp(-lam * dt);
    const double phi = phi_factor(lam, dt);
    const double s = std::sqrt(2.0 * phi_factor(2.0 * lam, dt));
    PhaseField& fi = f[static_cast<std::size_t>(i)];
    PhaseField out = PhaseField::Zero(fi.rows(), fi.cols());
    for (int k = 0; k < grid_.n_w(); ++k) {
      const double kappa = per_column_w ? base - grid_.w(k) : base;
      ou_column(fi.col(k).data(), out.col(k).data(), grid_.n_v(), grid_.v_min(), grid_.dv(), e, kappa * phi, s);
    }
    fi = std::move(out);
  }
}

namespace {

struct Velocities {
  PhaseField uv, uw;
  double rate;  // max over cells of |uv|/dv + |uw|/dw
};

// Euler update in non-negative coefficient form. Returns the outflow mass.
double euler_upwind(const PhaseField& f, const Velocities& vel, double cv, double cw, double area,
                    PhaseField& out) {
  const Eigen::Index nv = f.rows(), nw = f.cols();
  out.resize(nv, nw);
  double outflow = 0.0;
  for (Eigen::Index k = 0; k < nw; ++k) {
    for (Eigen::Index j = 0; j < nv; ++j) {
      const double uv = vel.uv(j, k), uw = vel.uw(j, k);
      double val = f(j, k) * (1.0 - cv * std::abs(uv) - cw * std::abs(uw));
      if (j > 0) val += cv * std::max(vel.uv(j - 1, k), 0.0) * f(j - 1, k);
      if (j + 1 < nv) val += -cv * std::min(vel.uv(j + 1, k), 0.0) * f(j + 1, k);
      if (k > 0) val += cw * std::max(vel.uw(j, k - 1), 0.0) * f(j, k - 1);
      if (k + 1 < nw) val += -cw * std::min(vel.uw(j, k + 1), 0.0) * f(j, k + 1);
      out(j, k) = val;
      if ((j == 0 && uv < 0) || (j == nv - 1 && uv > 0)) outflow += cv * std::abs(uv) * f(j, k);
      if ((k == 0 && uw < 0) || (k == nw - 1 && uw > 0)) outflow += cw * std::abs(uw) * f(j, k);
    }
  }
  return outflow * area;
}

// Flux form with minmod-limited linear reconstruction.
double euler_muscl(const PhaseField& f, const Velocities& vel, double cv, double cw, double area, PhaseField& out) {
  const Eigen::Index nv = f.rows(), nw = f.cols();
  out = f;
  double outflow = 0.0;
  auto slope = [](double l, double c, double r) { return minmod(c - l, r - c); };
  // v-direction
  for (Eigen::Index k = 0; k < nw; ++k) {
    double prev_flux = 0.0;  // flux through the left face of cell j
    {
      const double s0 = nv > 1 ? minmod(0.0, f(1, k) - f(0, k)) : 0.0;
      prev_flux = std::min(vel.uv(0, k), 0.0) * (f(0, k) - 0.5 * s0);
    }
    outflow -= cv * prev_flux;
    for (Eigen::Index j = 0; j < nv; ++j) {
      double flux;
      const double sj = slope(j > 0 ? f(j - 1, k) : 0.0, f(j, k), j + 1 < nv ? f(j + 1, k) : 0.0);
      if (j + 1 < nv) {
        const double sr = slope(f(j, k), f(j + 1, k), j + 2 < nv ? f(j + 2, k) : 0.0);
        flux = std::max(vel.uv(j, k), 0.0) * (f(j, k) + 0.5 * sj) +
               std::min(vel.uv(j + 1, k), 0.0) * (f(j + 1, k) - 0.5 * sr);
      } else {
        flux = std::max(vel.uv(j, k), 0.0) * (f(j, k) + 0.5 * sj);
        outflow += cv * flux;
      }
      out(j, k) -= cv * (flux - prev_flux);
      prev_flux = flux;
    }
  }
  // w-direction
  for (Eigen::Index j = 0; j < nv; ++j) {
    double prev_flux;
    {
      const double s0 = nw > 1 ? minmod(0.0, f(j, 1) - f(j, 0)) : 0.0;
      prev_flux = std::min(vel.uw(j, 0), 0.0) * (f(j, 0) - 0.5 * s0);
    }
    outflow -= cw * prev_flux;
    for (Eigen::Index k = 0; k < nw; ++k) {
      double flux;
      const double sk = slope(k > 0 ? f(j, k - 1) : 0.0, f(j, k), k + 1 < nw ? f(j, k + 1) : 0.0);
      if (k + 1 < nw) {
        const double sr = slope(f(j, k), f(j, k + 1), k + 2 < nw ? f(j, k + 2) : 0.0);
        flux = std::max(vel.uw(j, k), 0.0) * (f(j, k) + 0.5 * sk) +
               std::min(vel.uw(j, k + 1), 0.0) * (f(j, k + 1) - 0.5 * sr);
      } else {
        flux = std::max(vel.uw(j, k), 0.0) * (f(j, k) + 0.5 * sk);
        outflow += cw * flux;
      }
      out(j, k) -= cw * (flux - prev_flux);
      prev_flux = flux;
    }
  }
  return outflow * area;
}

}  // namespace

double KineticSolver::cfl_limit(const CouplingFields& c) const {
  double rate = 0.0;
  for (Eigen::Index i = 0; i < nodes(); ++i) {
    for (int k = 0; k < grid_.n_w(); ++k) {
      const double w = grid_.w(k);
      for (int j = 0; j < grid_.n_v(); ++j) {
        const double v = grid_.v(j);
        rate = std::max(rate, std::abs(v_velocity(c, i, v, w)) / grid_.dv() +
                                  std::abs(adaptation_A(params_, v, w)) / grid_.dw());
      }
    }
  }
  const double cfl = options_.reconstruction == Reconstruction::Muscl ? 0.5 * options_.cfl : options_.cfl;
  return rate > 0.0 ? cfl / rate : std::numeric_limits<double>::infinity();
}

double KineticSolver::default_dt() const {
  const double vmax = std::max(std::abs(grid_.v_min()), std::abs(grid_.v_max()));
  const double wmax = std::max(std::abs(grid_.w_min()), std::abs(grid_.w_max()));
  const double amax = std::abs(params_.a) * vmax + params_.b * wmax + std::abs(params_.c);
  return 0.5 * options_.cfl * grid_.dw() / amax;
}

namespace {

Velocities velocities(const KineticSolver& solver, const CouplingFields& c, Eigen::Index i,
                      const std::function<double(const CouplingFields&, Eigen::Index, double, double)>& vv) {
  const PhaseGrid& g = solver.grid();
  Velocities out;
  out.uv.resize(g.n_v(), g.n_w());
  out.uw.resize(g.n_v(), g.n_w());
  out.rate = 0.0;
  for (int k = 0; k < g.n_w(); ++k) {
    const double w = g.w(k);
    for (int j = 0; j < g.n_v(); ++j) {
      const double v = g.v(j);
      out.uv(j, k) = vv(c, i, v, w);
      out.uw(j, k) = adaptation_A(solver.params(), v, w);
      out.rate = std::max(out.rate, std::abs(out.uv(j, k)) / g.dv() + std::abs(out.uw(j, k)) / g.dw());
    }
  }
  return out;
}

}  // namespace

Eigen::VectorXd KineticSolver::apply_transport(Density& f, const CouplingFields& c, double dt) const {
  const Eigen::Index nx = nodes();
  Eigen::VectorXd outflow = Eigen::VectorXd::Zero(nx);
  const double cfl = options_.reconstruction == Reconstruction::Muscl ? 0.5 * options_.cfl : options_.cfl;
  auto vv = [this](const CouplingFields& cc, Eigen::Index i, double v, double w) {
    return v_velocity(cc, i, v, w);
  };
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < nx; ++i) {
    const Velocities vel = velocities(*this, c, i, vv);
    const int nsub = std::max(1, static_cast<int>(std::ceil(dt * vel.rate / cfl - 1e-12)));
    const double h = dt / nsub;
    const double cv = h / grid_.dv(), cw = h / grid_.dw(), area = grid_.cell_area();
    PhaseField& fi = f[static_cast<std::size_t>(i)];
    PhaseField a, b;
    double lost = 0.0;
    auto euler = [&](const PhaseField& in, PhaseField& out) {
      return options_.reconstruction == Reconstruction::Muscl
                 ? euler_muscl(in, vel, cv, cw, area, out)
                 : euler_upwind(in, vel, cv, cw, area, out);
    };
    for (int s = 0; s < nsub; ++s) {
      if (options_.integrator == TimeIntegrator::Euler) {
        lost += euler(fi, a);
        fi.swap(a);
      } else {
        const double o1 = euler(fi, a);
        const double o2 = euler(a, b);
        lost += 0.5 * (o1 + o2);
        fi = 0.5 * fi + 0.5 * b;
      }
    }
    for (Eigen::Index idx = 0; idx < fi.size(); ++idx)
      if (fi.data()[idx] < kFlush) fi.data()[idx] = 0.0;
    outflow[i] = lost;
  }
  return outflow;
}

KineticState KineticSolver::ou_relaxation_substep(const KineticState& state, double dt) const {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  KineticState out = state;
  CouplingFields c = coupling(out.f);
  apply_ou(out.f, c, dt);
  refresh_moments(out);
  return out;
}

KineticState KineticSolver::transport_substep(const KineticState& state, double dt) const {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const CouplingFields c = coupling(state.f);
  const double limit = cfl_limit(c);
  if (dt > limit * (1.0 + 1e-12)) {
    const double cfl = options_.reconstruction == Reconstruction::Muscl ? 0.5 * options_.cfl : options_.cfl;
    const double ratio = dt / limit * cfl;
    std::ostringstream os;
    os << "transport CFL number " << ratio << " exceeds " << cfl;
    throw CflViolation(os.str(), ratio);
  }
  KineticState out = state;
  out.outflow += apply_transport(out.f, c, dt);
  refresh_moments(out);
  return out;
}

void KineticSolver::step(KineticState& state, double dt, std::span<Density* const> companions) const {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const CouplingFields c0 = coupling(state.f);

  state.outflow += apply_transport(state.f, c0, 0.5 * dt);
  for (Density* g : companions) apply_transport(*g, c0, 0.5 * dt);

  CouplingFields c1 = coupling(state.f, &c0.V_lin);
  if (options_.drift_split == DriftSplit::Linearized) {
    // Pick the frozen relaxation target so that the OU substep moves each
    // node mean exactly as the relaxation-free linear drift would.
    const double eps = params_.epsilon;
    const Drift& N = params_.drift;
    for (Eigen::Index i = 0; i < nodes(); ++i) {
      const double rho = rho0_.values[i], L = c1.V_lin[i];
      const double mu = -N.derivative(L) + c1.psi_rho[i];
      const double lam = rho / eps + mu;
      const double kbar = N.value(L) - N.derivative(L) * L - c1.W[i] + c1.psi_rho_V[i];
      const double m0 = c1.V[i];
      const double target = m0 * std::exp(-mu * dt) + kbar * phi_factor(mu, dt);
      const double phi = phi_factor(lam, dt);
      c1.V[i] = (target - std::exp(-lam * dt) * m0 - phi * kbar) / (phi * rho / eps);
    }
  }

  apply_ou(state.f, c1, dt);
  for (Density* g : companions) apply_ou(*g, c1, dt);

  state.outflow += apply_transport(state.f, c1, 0.5 * dt);
  for (Density* g : companions) apply_transport(*g, c1, 0.5 * dt);

  state.t += dt;
  refresh_moments(state);
  check_mass(state);
}

KineticState KineticSolver::step(const KineticState& state, double dt) const {
  KineticState out = state;
  step(out, dt);
  return out;
}

void KineticSolver::step_frozen(Density& f, const CouplingFields& c, double dt) const {
  apply_transport(f, c, 0.5 * dt);
  apply_ou(f, c, dt);
  apply_transport(f, c, 0.5 * dt);
}

void KineticSolver::check_mass(const KineticState& state) const {
  for (Eigen::Index i = 0; i < nodes(); ++i) {
    const double m = mass(grid_, state.f[static_cast<std::size_t>(i)]);
    const double drift = std::abs(m - state.initial_mass[i]) / state.initial_mass[i];
    if (drift > options_.mass_drift_abort) {
      std::ostringstream os;
      os << "mass drift " << drift << " at node " << i << ", t = " << state.t;
      throw MassDriftExceeded(os.str(), drift);
    }
  }
}

MomentSnapshot KineticSolver::diagnose(const KineticState& state) const {
  const Eigen::Index nx = nodes();
  MomentSnapshot s;
  s.t = state.t;
  s.mass.resize(nx);
  s.V.resize(nx);
  s.W.resize(nx);
  s.D2.resize(nx);
  s.Mq.resize(nx);
  s.E.resize(nx);
  s.min_f.resize(nx);
  const Drift& N = params_.drift;
  const double q = q_moment_;
  for (Eigen::Index i = 0; i < nx; ++i) {
    const PhaseField& f = state.f[static_cast<std::size_t>(i)];
    require_finite(f);
    const NodeSums ns = node_sums(grid_, f);
    const double V = ns.v / ns.mass, W = ns.w / ns.mass;
    const Eigen::VectorXd vm = f.rowwise().sum();
    double d2 = 0.0, en = 0.0;
    for (int j = 0; j < grid_.n_v(); ++j) {
      const double v = grid_.v(j);
      d2 += (v - V) * (v - V) * vm[j];
      en += N.value(v) * vm[j];
    }
    double mq = 0.0;
    for (int k = 0; k < grid_.n_w(); ++k) {
      const double w = grid_.w(k);
      for (int j = 0; j < grid_.n_v(); ++j) {
        const double v = grid_.v(j);
        mq += std::pow(v * v + w * w, 0.5 * q) * f(j, k);
      }
    }
    s.mass[i] = ns.mass * grid_.cell_area();
    s.V[i] = V;
    s.W[i] = W;
    s.D2[i] = d2 / ns.mass;
    s.Mq[i] = mq / ns.mass;
    s.E[i] = en / ns.mass - N.value(V);
    s.min_f[i] = f.minCoeff();
  }
  return s;
}

std::vector<MomentSnapshot> KineticSolver::run(KineticState& state, const Schedule& schedule,
                                               const std::vector<Observer>& observers,
                                               std::span<Density* const> companions) const {
  const double span = schedule.t_end - state.t;
  if (span < 0.0) throw ConfigError("t_end lies before the current time");
  std::vector<MomentSnapshot> out;
  auto record = [&] {
    out.push_back(diagnose(state));
    for (const Observer& obs : observers) obs(state);
  };
  record();
  if (span == 0.0) return out;

  const double dt = schedule.dt > 0.0 ? schedule.dt : default_dt();
  const double t0 = state.t;
  int blocks = 1;
  double block = span;
  if (schedule.snapshot_dt > 0.0) {
    blocks = static_cast<int>(std::lround(span / schedule.snapshot_dt));
    if (blocks < 1 || std::abs(blocks * schedule.snapshot_dt - span) > 1e-9 * std::max(1.0, span))
      throw ConfigError("t_end - t must be a whole number of snapshot intervals");
    block = schedule.snapshot_dt;
  }
  const int per_block = std::max(1, static_cast<int>(std::ceil(block / dt - 1e-9)));
  const double h = block / per_block;
  for (int b = 0; b < blocks; ++b) {
    for (int s = 0; s < per_block; ++s) step(state, h, companions);
    state.t = t0 + (b + 1) * block;
    record();
  }
  return out;
}

}  // namespace fhn
