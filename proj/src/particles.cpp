#include "fhn/particles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace fhn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double to_unit(std::uint64_t x) { return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53; }

}  // namespace

double counter_gaussian(std::uint64_t seed, std::uint64_t neuron, std::uint64_t step, std::uint64_t stream) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ neuron);
  h = splitmix64(h ^ step);
  h = splitmix64(h ^ stream);
  const double u1 = to_unit(h);
  const double u2 = to_unit(splitmix64(h));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

ParticleSystem::ParticleSystem(ModelParams params, Kernel kernel, SpatialField rho0)
    : params_(std::move(params)), rho0_(std::move(rho0)) {
  params_.validate();
  psi_ = kernel_matrix(kernel, rho0_);
}

Ensemble ParticleSystem::init(Eigen::Index n, const Eigen::VectorXd& V0, const Eigen::VectorXd& W0, double sigma_w,
                              std::uint64_t seed) const {
  const Eigen::Index nc = rho0_.size();
  if (n < nc) throw ConfigError("need at least one neuron per cell");
  if (V0.size() != nc || W0.size() != nc) throw ConfigError("initial profiles must have one value per cell");

  const Eigen::VectorXd share = rho0_.values.cwiseProduct(rho0_.quad_weights) / rho0_.integral();
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(nc));
  std::vector<std::pair<double, Eigen::Index>> rem;
  Eigen::Index assigned = 0;
  for (Eigen::Index c = 0; c < nc; ++c) {
    const double exact = share[c] * double(n);
    counts[c] = static_cast<Eigen::Index>(std::floor(exact));
    assigned += counts[c];
    rem.push_back({exact - std::floor(exact), c});
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (Eigen::Index r = 0; assigned < n; ++r, ++assigned) ++counts[rem[static_cast<std::size_t>(r)].second];

  std::vector<Eigen::Index> cell;
  cell.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < nc; ++c) cell.insert(cell.end(), static_cast<std::size_t>(counts[c]), c);

  Eigen::VectorXd v(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index c = cell[static_cast<std::size_t>(i)];
    const double sv = std::sqrt(params_.epsilon / rho0_.values[c]);
    v[i] = V0[c] + sv * counter_gaussian(seed, i, 0, 0);
    w[i] = W0[c] + sigma_w * counter_gaussian(seed, i, 0, 1);
  }
  return init_states(std::move(cell), std::move(v), std::move(w), seed);
}

Ensemble ParticleSystem::init_states(std::vector<Eigen::Index> cell, Eigen::VectorXd v, Eigen::VectorXd w,
                                     std::uint64_t seed) const {
  const Eigen::Index n = v.size();
  if (static_cast<Eigen::Index>(cell.size()) != n || w.size() != n) throw ConfigError("state arrays differ in length");
  Ensemble ens;
  ens.n = n;
  ens.positions.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index c = cell[static_cast<std::size_t>(i)];
    if (c < 0 || c >= rho0_.size()) throw ConfigError("neuron assigned to a cell outside the grid");
    ens.positions[i] = rho0_.nodes[c];
  }
  ens.cell = std::move(cell);
  ens.v = std::move(v);
  ens.w = std::move(w);
  ens.rng_seed = seed;
  return ens;
}

namespace {

struct CellSums {
  Eigen::VectorXd count, vbar;
};

CellSums cell_sums(const Ensemble& ens, Eigen::Index nc) {
  CellSums s{Eigen::VectorXd::Zero(nc), Eigen::VectorXd::Zero(nc)};
  for (Eigen::Index i = 0; i < ens.n; ++i) {
    const Eigen::Index c = ens.cell[static_cast<std::size_t>(i)];
    s.count[c] += 1.0;
    s.vbar[c] += ens.v[i];
  }
  for (Eigen::Index c = 0; c < nc; ++c)
    if (s.count[c] > 0) s.vbar[c] /= s.count[c];
  return s;
}

}  // namespace

double ParticleSystem::coupling_rate(const Ensemble& ens) const {
  const Eigen::Index nc = rho0_.size();
  const CellSums s = cell_sums(ens, nc);
  const Eigen::VectorXd frac = s.count / double(ens.n);
  const Eigen::VectorXd psi_frac = psi_ * frac;
  double rate = 0.0;
  for (Eigen::Index c = 0; c < nc; ++c)
    rate = std::max(rate, frac[c] / (rho0_.quad_weights[c] * params_.epsilon) + std::abs(psi_frac[c]));
  return rate;
}

void ParticleSystem::em_step(Ensemble& ens, double dt, bool noise) const {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const double rate = coupling_rate(ens);
  if (dt * rate > 0.25) {
    std::ostringstream os;
    os << "dt * coupling rate = " << dt * rate << " exceeds 1/4";
    throw StabilityViolation(os.str());
  }
  const Eigen::Index nc = rho0_.size();
  const CellSums s = cell_sums(ens, nc);
  const Eigen::VectorXd frac = s.count / double(ens.n);
  const Eigen::VectorXd S = psi_ * frac;                      // sum_c' Psi(c, c') n_c'/n
  const Eigen::VectorXd T = psi_ * frac.cwiseProduct(s.vbar);  // same, weighted by vbar_c'
  Eigen::VectorXd local(nc);
  for (Eigen::Index c = 0; c < nc; ++c) local[c] = frac[c] / (rho0_.quad_weights[c] * params_.epsilon);

  const double sq = std::sqrt(2.0 * dt);
  const std::uint64_t step = ens.steps + 1;
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < ens.n; ++i) {
    const Eigen::Index c = ens.cell[static_cast<std::size_t>(i)];
    const double v = ens.v[i], w = ens.w[i];
    const double dv = drift_N(params_, v) - w - local[c] * (v - s.vbar[c]) - (S[c] * v - T[c]);
    const double dw = adaptation_A(params_, v, w);
    ens.v[i] = v + dt * dv + (noise ? sq * counter_gaussian(ens.rng_seed, static_cast<std::uint64_t>(i), step, 2) : 0.0);
    ens.w[i] = w + dt * dw;
  }
  ens.steps = step;
  ens.t += dt;
  if (!ens.v.allFinite() || !ens.w.allFinite()) throw NonFiniteInput("particle state became non-finite");
}

CellMoments empirical_moments(const Ensemble& ens, Eigen::Index cells, double q) {
  CellMoments m;
  m.count = Eigen::VectorXi::Zero(cells);
  m.mean_v = Eigen::VectorXd::Zero(cells);
  m.mean_w = Eigen::VectorXd::Zero(cells);
  m.Mq = Eigen::VectorXd::Zero(cells);
  m.Dq = Eigen::VectorXd::Zero(cells);
  for (Eigen::Index i = 0; i < ens.n; ++i) {
    const Eigen::Index c = ens.cell[static_cast<std::size_t>(i)];
    if (c < 0 || c >= cells) throw ConfigError("neuron cell index outside the requested range");
    m.count[c] += 1;
    m.mean_v[c] += ens.v[i];
    m.mean_w[c] += ens.w[i];
    m.Mq[c] += std::pow(ens.v[i] * ens.v[i] + ens.w[i] * ens.w[i], 0.5 * q);
  }
  for (Eigen::Index c = 0; c < cells; ++c) {
    if (m.count[c] == 0) {
      std::ostringstream os;
      os << "cell " << c << " holds no neurons";
      throw EmptyCell(os.str());
    }
    m.mean_v[c] /= m.count[c];
    m.mean_w[c] /= m.count[c];
    m.Mq[c] /= m.count[c];
  }
  for (Eigen::Index i = 0; i < ens.n; ++i) {
    const Eigen::Index c = ens.cell[static_cast<std::size_t>(i)];
    m.Dq[c] += std::pow(std::abs(ens.v[i] - m.mean_v[c]), q);
  }
  for (Eigen::Index c = 0; c < cells; ++c) m.Dq[c] /= m.count[c];
  return m;
}

}  // namespace fhn
