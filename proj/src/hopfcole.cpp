#include "fhn/hopfcole.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace fhn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double prefactor(double rho, double eps) { return std::sqrt(rho / (2.0 * std::numbers::pi * eps)); }

Eigen::VectorXd psi_rho_of(const HJContext& ctx) { return convolve_right(ctx.psi, ctx.rho0, ctx.rho0.values); }

}  // namespace

HopfColeField hopf_cole(const Density& f, const SpatialField& rho0, double epsilon, double floor) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  double fmax = 0.0;
  for (const PhaseField& fi : f) {
    require_finite(fi);
    fmax = std::max(fmax, fi.maxCoeff());
  }
  HopfColeField out;
  out.epsilon = epsilon;
  out.floor = floor > 0.0 ? floor : 1e-30 * fmax;
  out.phi.resize(f.size());
  out.mask.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double scale = 1.0 / prefactor(rho0.values[static_cast<Eigen::Index>(i)], epsilon);
    out.mask[i] = f[i].array() > out.floor;
    out.phi[i] = out.mask[i].select(epsilon * (scale * f[i].array()).log(), kNaN).matrix();
  }
  return out;
}

Density reconstruct(const HopfColeField& field, const SpatialField& rho0) {
  Density out(field.phi.size());
  for (std::size_t i = 0; i < field.phi.size(); ++i) {
    const double pre = prefactor(rho0.values[static_cast<Eigen::Index>(i)], field.epsilon);
    out[i] = field.mask[i].select(pre * (field.phi[i].array() / field.epsilon).exp(), 0.0).matrix();
  }
  return out;
}

Density phi1(const HopfColeField& field, const PhaseGrid& grid, const SpatialField& rho0, const Eigen::VectorXd& V) {
  Density out(field.phi.size());
  for (std::size_t i = 0; i < field.phi.size(); ++i) {
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    const Eigen::ArrayXd dv = grid.v_centers().array() - V[ii];
    const Eigen::ArrayXd quad = 0.5 * rho0.values[ii] * dv.square();
    out[i] = ((field.phi[i].array().colwise() + quad) / field.epsilon).matrix();
  }
  return out;
}

PhaseField phi1_bar_node(const ModelParams& params, const PhaseGrid& grid, double V, double W, double E,
                         double psi_rho) {
  const double nV = primitive_n(params, V), NV = drift_N(params, V);
  return grid.sample([&](double v, double w) {
    const double d = v - V;
    return primitive_n(params, v) - nV - d * (NV + (w - W) + E + 0.5 * psi_rho * d);
  });
}

Density phi1_bar(const HJContext& ctx, const MomentSnapshot& macro) {
  const Eigen::VectorXd pr = psi_rho_of(ctx);
  Density out(static_cast<std::size_t>(macro.V.size()));
  for (Eigen::Index i = 0; i < macro.V.size(); ++i)
    out[static_cast<std::size_t>(i)] = phi1_bar_node(ctx.params, ctx.grid, macro.V[i], macro.W[i], macro.E[i], pr[i]);
  return out;
}

double alpha_at(double alpha0, double a, double b, double t) {
  const double k = std::abs(a) + b;
  const double g = std::exp(2.0 * k * t);
  return alpha0 * g + (g - 1.0) / k;
}

double m_at(const CorrectorParams& cp, double a, double b, double t) {
  return cp.m0 + cp.C * std::exp(6.0 * (std::abs(a) + b) * t);
}

CorrectorBundle corrector_bundle(const HJContext& ctx, const MomentSnapshot& macro, const CorrectorParams& cp) {
  if (!(cp.alpha0 > 0.0)) throw NonPositiveAlpha0("alpha0 must be strictly positive");
  CorrectorBundle b;
  b.params = cp;
  b.t = macro.t;
  b.alpha_t = alpha_at(cp.alpha0, ctx.params.a, ctx.params.b, macro.t);
  b.m_t = m_at(cp, ctx.params.a, ctx.params.b, macro.t);
  b.phi1_bar = phi1_bar(ctx, macro);
  b.psi.resize(b.phi1_bar.size());
  for (Eigen::Index i = 0; i < macro.V.size(); ++i) {
    const double V = macro.V[i], W = macro.W[i];
    b.psi[static_cast<std::size_t>(i)] = ctx.grid.sample([&](double v, double w) {
      return 0.5 * cp.alpha0 * (v - V) * (v - V) + 0.5 * b.alpha_t * (w - W) * (w - W);
    });
  }
  return b;
}

ChiPair chi_bounds(const CorrectorBundle& bundle) {
  ChiPair out;
  for (std::size_t i = 0; i < bundle.phi1_bar.size(); ++i) {
    const PhaseField lift = bundle.psi[i].array() + bundle.m_t;
    out.plus.push_back(bundle.phi1_bar[i] + lift);
    out.minus.push_back(bundle.phi1_bar[i] - lift);
  }
  return out;
}

Density hj_residual_order1(const std::array<const Density*, 3>& chi, const std::array<double, 3>& times,
                           const MomentSnapshot& macro, const HJContext& ctx) {
  if (!(times[0] < times[1] && times[1] < times[2])) throw MissingSnapshots("residual needs three increasing times");
  const PhaseGrid& g = ctx.grid;
  const ModelParams& p = ctx.params;
  const Drift& N = p.drift;
  const Eigen::VectorXd pr = psi_rho_of(ctx);
  const Eigen::VectorXd prV = convolve_right(ctx.psi, ctx.rho0, ctx.rho0.values.cwiseProduct(macro.V));
  const Density bar = phi1_bar(ctx, macro);
  const double eps = p.epsilon;
  const double dt_span = times[2] - times[0];
  const double dv = g.dv(), dw = g.dw();

  Density out(bar.size());
  for (std::size_t i = 0; i < bar.size(); ++i) {
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    const PhaseField& c = (*chi[1])[i];
    const PhaseField& cm = (*chi[0])[i];
    const PhaseField& cp = (*chi[2])[i];
    const double rho = ctx.rho0.values[ii], V = macro.V[ii];
    PhaseField r = PhaseField::Constant(g.n_v(), g.n_w(), kNaN);
    for (int k = 1; k + 1 < g.n_w(); ++k) {
      const double w = g.w(k);
      for (int j = 1; j + 1 < g.n_v(); ++j) {
        const double v = g.v(j);
        const double ct = (cp(j, k) - cm(j, k)) / dt_span;
        const double cv = (c(j + 1, k) - c(j - 1, k)) / (2.0 * dv);
        const double cw = (c(j, k + 1) - c(j, k - 1)) / (2.0 * dw);
        const double cvv = (c(j + 1, k) - 2.0 * c(j, k) + c(j - 1, k)) / (dv * dv);
        const double dbar =
            ((c(j + 1, k) - bar[i](j + 1, k)) - (c(j - 1, k) - bar[i](j - 1, k))) / (2.0 * dv);
        const double B = N.value(v) - w - pr[ii] * v + prV[ii];
        const double A = adaptation_A(p, v, w);
        const double div_b = N.derivative(v) - pr[ii] - p.b;
        r(j, k) = ct + cv * B + cw * A + div_b - cvv - cv * cv + rho / eps * (v - V) * dbar;
      }
    }
    out[i] = std::move(r);
  }
  return out;
}

ResidualRange residual_range(const Density& residual, const PhaseGrid& grid, const Eigen::VectorXd& V,
                             const Eigen::VectorXd& W, double half_width) {
  ResidualRange rr{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0};
  bool any_box = false;
  for (std::size_t i = 0; i < residual.size(); ++i) {
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    for (int k = 0; k < grid.n_w(); ++k) {
      if (std::abs(grid.w(k) - W[ii]) > half_width) continue;
      for (int j = 0; j < grid.n_v(); ++j) {
        if (std::abs(grid.v(j) - V[ii]) > half_width) continue;
        any_box = true;
        const double x = residual[i](j, k);
        if (!std::isfinite(x)) continue;
        rr.min = std::min(rr.min, x);
        rr.max = std::max(rr.max, x);
        ++rr.cells;
      }
    }
  }
  if (any_box && rr.cells == 0) throw BoundaryOnly("centred box meets only the outer ring of the grid");
  if (!any_box) throw BoundaryOnly("centred box lies outside the grid");
  return rr;
}

LemmaReport certify_lemma(const HJContext& ctx, const std::vector<MomentSnapshot>& snapshots, double alpha0,
                          double tol, double half_width, double c_start, double c_cap) {
  if (snapshots.size() < 3) throw MissingSnapshots("lemma certification needs at least three snapshots");
  if (!(alpha0 > 0.0)) throw NonPositiveAlpha0("alpha0 must be strictly positive");

  // phi1_bar and psi do not depend on C; only m(t) does.
  std::vector<CorrectorBundle> base;
  for (const MomentSnapshot& s : snapshots) base.push_back(corrector_bundle(ctx, s, {alpha0, 0.0, 0.0}));

  LemmaReport report;
  for (double C = c_start; C <= c_cap; C *= 2.0, ++report.doublings) {
    const CorrectorParams cp{alpha0, 0.0, C};
    std::vector<ChiPair> chis;
    for (CorrectorBundle b : base) {
      b.params = cp;
      b.m_t = m_at(cp, ctx.params.a, ctx.params.b, b.t);
      chis.push_back(chi_bounds(b));
    }
    report = LemmaReport{C, true, {}, {}, {}, report.doublings};
    for (std::size_t n = 1; n + 1 < snapshots.size(); ++n) {
      const std::array<double, 3> times{snapshots[n - 1].t, snapshots[n].t, snapshots[n + 1].t};
      const Density rp = hj_residual_order1({&chis[n - 1].plus, &chis[n].plus, &chis[n + 1].plus}, times,
                                            snapshots[n], ctx);
      const Density rm = hj_residual_order1({&chis[n - 1].minus, &chis[n].minus, &chis[n + 1].minus}, times,
                                            snapshots[n], ctx);
      const ResidualRange a = residual_range(rp, ctx.grid, snapshots[n].V, snapshots[n].W, half_width);
      const ResidualRange b = residual_range(rm, ctx.grid, snapshots[n].V, snapshots[n].W, half_width);
      report.times.push_back(snapshots[n].t);
      report.min_plus.push_back(a.min);
      report.max_minus.push_back(b.max);
      if (a.min < -tol || b.max > tol) report.certified = false;
    }
    if (report.certified) return report;
  }
  return report;
}

TheoremBound theorem_bound_check(const HopfColeField& field, const PhaseGrid& grid, const SpatialField& rho0,
                                 const ModelParams& params, const Eigen::VectorXd& V, const Eigen::VectorXd& W,
                                 double t, double half_width) {
  TheoremBound tb;
  tb.t = t;
  const double eps = field.epsilon;
  for (std::size_t i = 0; i < field.phi.size(); ++i) {
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    const double rho = rho0.values[ii];
    for (int k = 0; k < grid.n_w(); ++k) {
      const double w = grid.w(k);
      if (std::abs(w - W[ii]) > half_width) continue;
      for (int j = 0; j < grid.n_v(); ++j) {
        const double v = grid.v(j);
        if (std::abs(v - V[ii]) > half_width || !field.mask[i](j, k)) continue;
        const double dev =
            std::abs(field.phi[i](j, k) + 0.5 * rho * (v - V[ii]) * (v - V[ii]) - eps * primitive_n(params, v));
        tb.unnormalized = std::max(tb.unnormalized, dev);
        tb.statistic = std::max(tb.statistic, dev / (eps * (1.0 + v * v + w * w)));
        ++tb.cells;
      }
    }
  }
  if (tb.cells == 0) throw EmptyMask("no masked cell inside the centred box");
  return tb;
}

Density envelope(const HJContext& ctx, const MomentSnapshot& macro, const Density& chi) {
  const double eps = ctx.params.epsilon;
  Density out(chi.size());
  for (std::size_t i = 0; i < chi.size(); ++i) {
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    const double rho = ctx.rho0.values[ii], V = macro.V[ii];
    const double pre = prefactor(rho, eps);
    const Eigen::ArrayXd gauss = -rho * (ctx.grid.v_centers().array() - V).square() / (2.0 * eps);
    out[i] = (pre * (chi[i].array().colwise() + gauss).exp()).matrix();
  }
  return out;
}

namespace {

bool ordered(const Density& lo, const Density& hi) {
  for (std::size_t i = 0; i < lo.size(); ++i)
    if ((lo[i].array() > hi[i].array()).any()) return false;
  return true;
}

}  // namespace

Envelopes build_envelopes(const HJContext& ctx, const KineticState& state, const MomentSnapshot& macro,
                          CorrectorParams cp) {
  const double eps = ctx.params.epsilon;
  const CorrectorBundle b0 = corrector_bundle(ctx, macro, {cp.alpha0, 0.0, 0.0});
  double need = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < state.f.size(); ++i) {
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    const double rho = ctx.rho0.values[ii], V = macro.V[ii];
    const double pre = prefactor(rho, eps);
    for (int k = 0; k < ctx.grid.n_w(); ++k) {
      for (int j = 0; j < ctx.grid.n_v(); ++j) {
        const double f = state.f[i](j, k);
        if (!(f > 0.0)) continue;
        const double d = ctx.grid.v(j) - V;
        const double p1 = std::log(f / pre) + rho * d * d / (2.0 * eps);
        const double bar = b0.phi1_bar[i](j, k), psi = b0.psi[i](j, k);
        need = std::max({need, p1 - bar - psi, bar - psi - p1});
      }
    }
  }
  const double m_needed = need + 1.0;  // one unit of head-room in log space
  const double m_now = m_at(cp, ctx.params.a, ctx.params.b, macro.t);
  if (m_now < m_needed) cp.m0 += m_needed - m_now;

  const ChiPair chi = chi_bounds(corrector_bundle(ctx, macro, cp));
  Envelopes out{envelope(ctx, macro, chi.plus), envelope(ctx, macro, chi.minus), cp};
  for (std::size_t i = 0; i < out.minus.size(); ++i)
    out.minus[i] = (state.f[i].array() > 0.0).select(out.minus[i], 0.0).matrix();
  if (!ordered(out.minus, state.f) || !ordered(state.f, out.plus))
    throw InitialOrderingViolated("envelopes do not bracket the initial density");
  return out;
}

SandwichReport comparison_sandwich(const KineticSolver& solver, KineticState& state, Density fplus, Density fminus,
                                   const Schedule& schedule, double alpha0, double tolerance,
                                   const std::vector<Observer>& extra, std::vector<MomentSnapshot>* snapshots) {
  if (!ordered(fminus, state.f) || !ordered(state.f, fplus))
    throw InitialOrderingViolated("f_- <= f <= f_+ fails at the initial time");

  const HJContext ctx{solver.params(), solver.grid(), solver.rho0(), solver.psi()};
  SandwichReport report;
  report.tolerance = tolerance;
  auto observe = [&](const KineticState& s) {
    double gp = std::numeric_limits<double>::infinity(), gm = gp, fmax = 0.0;
    for (std::size_t i = 0; i < s.f.size(); ++i) {
      gp = std::min(gp, (fplus[i] - s.f[i]).minCoeff());
      gm = std::min(gm, (s.f[i] - fminus[i]).minCoeff());
      fmax = std::max(fmax, s.f[i].maxCoeff());
    }
    report.t.push_back(s.t);
    report.min_gap_plus.push_back(gp);
    report.min_gap_minus.push_back(gm);
    report.max_f.push_back(fmax);
    if (gp < -tolerance * fmax || gm < -tolerance * fmax) report.ordered = false;

    if (alpha0 > 0.0) {
      const MomentSnapshot macro = solver.diagnose(s);
      const CorrectorBundle b = corrector_bundle(ctx, macro, {alpha0, 0.0, 0.0});
      const HopfColeField hc = hopf_cole(s.f, s.rho0, ctx.params.epsilon);
      const Density p1 = phi1(hc, ctx.grid, s.rho0, macro.V);
      double cp = std::numeric_limits<double>::infinity(), cm = cp;
      for (std::size_t i = 0; i < p1.size(); ++i) {
        for (Eigen::Index idx = 0; idx < p1[i].size(); ++idx) {
          if (!hc.mask[i].data()[idx]) continue;
          const double bar = b.phi1_bar[i].data()[idx], psi = b.psi[i].data()[idx], x = p1[i].data()[idx];
          cp = std::min(cp, bar + psi - x);
          cm = std::min(cm, x - bar + psi);
        }
      }
      report.core_gap_plus.push_back(cp);
      report.core_gap_minus.push_back(cm);
    }
  };
  std::vector<Observer> observers{observe};
  observers.insert(observers.end(), extra.begin(), extra.end());
  std::array<Density*, 2> companions{&fplus, &fminus};
  auto snaps = solver.run(state, schedule, observers, companions);
  if (snapshots) *snapshots = std::move(snaps);
  return report;
}

}  // namespace fhn
