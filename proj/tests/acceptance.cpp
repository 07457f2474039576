#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fhn/harness.hpp"

namespace fs = std::filesystem;
using namespace fhn;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(double x) { return format_double(x); }

// Mean and covariance of (v, w) per node for N(v) = -v, A = -b w, Psi = 0.
struct LinearMoments {
  double V, W, Svv, Svw, Sww;
};

LinearMoments linear_rhs(const LinearMoments& m, double rho, double eps, double b) {
  const double k = 1.0 + rho / eps;
  return {-m.V - m.W, -b * m.W, -2.0 * k * m.Svv - 2.0 * m.Svw + 2.0, -(k + b) * m.Svw - m.Sww, -2.0 * b * m.Sww};
}

LinearMoments linear_rk4(LinearMoments m, double rho, double eps, double b, double t, int steps) {
  const double h = t / steps;
  auto axpy = [](const LinearMoments& x, double a, const LinearMoments& y) {
    return LinearMoments{x.V + a * y.V, x.W + a * y.W, x.Svv + a * y.Svv, x.Svw + a * y.Svw, x.Sww + a * y.Sww};
  };
  for (int s = 0; s < steps; ++s) {
    const LinearMoments k1 = linear_rhs(m, rho, eps, b);
    const LinearMoments k2 = linear_rhs(axpy(m, 0.5 * h, k1), rho, eps, b);
    const LinearMoments k3 = linear_rhs(axpy(m, 0.5 * h, k2), rho, eps, b);
    const LinearMoments k4 = linear_rhs(axpy(m, h, k3), rho, eps, b);
    m = axpy(m, h / 6.0, {k1.V + 2 * k2.V + 2 * k3.V + k4.V, k1.W + 2 * k2.W + 2 * k3.W + k4.W,
                          k1.Svv + 2 * k2.Svv + 2 * k3.Svv + k4.Svv, k1.Svw + 2 * k2.Svw + 2 * k3.Svw + k4.Svw,
                          k1.Sww + 2 * k2.Sww + 2 * k3.Sww + k4.Sww});
  }
  return m;
}

double linear_oracle(const RunConfig& base, double& worst_mass, double& min_f) {
  RunConfig c = base;
  c.model.drift = Drift::linear();
  c.model.a = 0.0;
  c.model.c = 0.0;
  c.model.epsilon = 0.05;
  c.kernel = Kernel::zero();
  c.validate();
  const SpatialField rho0 = c.rho0();
  const KineticSolver solver(c.model, c.grid.build(), c.kernel, rho0, c.solver);
  KineticState state = solver.initialize_well_prepared(c.V0(), c.W0());
  const std::vector<MomentSnapshot> snaps = solver.run(state, c.schedule);

  const MomentSnapshot& s0 = snaps.front();
  double worst = 0.0;
  for (const MomentSnapshot& s : snaps) {
    for (Eigen::Index i = 0; i < rho0.size(); ++i) {
      worst_mass = std::max(worst_mass, std::abs(s.mass[i] - state.initial_mass[i]) / state.initial_mass[i]);
      min_f = std::min(min_f, s.min_f[i]);
      if (s.t == 0.0) continue;
      const LinearMoments m0{s0.V[i], s0.W[i], s0.D2[i], 0.0, c.initial.sigma_w * c.initial.sigma_w};
      const LinearMoments m = linear_rk4(m0, rho0.values[i], c.model.epsilon, c.model.b, s.t, 20000);
      worst = std::max({worst, std::abs(s.V[i] - m.V) / std::abs(m.V), std::abs(s.W[i] - m.W) / std::abs(m.W),
                        std::abs(s.D2[i] - m.Svv) / m.Svv});
    }
  }
  return worst;
}

bool monotone_pairs(int pairs, double& worst) {
  const ModelParams params;
  const PhaseGrid grid(0.0, 3.0, 48, 0.0, 3.0, 48);
  const SpatialField rho0 = bump_density(3, 0.3, params.m_star);
  const KineticSolver solver(params, grid, Kernel::exponential(1.0, 0.5), rho0);
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  bool ok = true;
  worst = 0.0;
  for (int p = 0; p < pairs; ++p) {
    Density lo(3), hi(3);
    for (int i = 0; i < 3; ++i) {
      lo[i] = grid.zeros();
      hi[i] = grid.zeros();
      for (Eigen::Index k = 0; k < lo[i].size(); ++k) {
        lo[i].data()[k] = unif(gen);
        hi[i].data()[k] = lo[i].data()[k] + (unif(gen) < 0.5 ? 0.0 : unif(gen));
      }
    }
    const CouplingFields c = solver.coupling(lo);
    const double dt = solver.default_dt();
    for (int s = 0; s < 10; ++s) {
      solver.step_frozen(lo, c, dt);
      solver.step_frozen(hi, c, dt);
    }
    for (int i = 0; i < 3; ++i) {
      const double gap = (hi[i] - lo[i]).minCoeff() / hi[i].maxCoeff();
      worst = std::min(worst, gap);
      if (gap < -1e-14) ok = false;
    }
  }
  return ok;
}

std::vector<std::pair<std::string, std::string>> csv_hashes(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out.emplace_back(fs::relative(e.path(), root).string(), git_blob_hash_file(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

const RateFit* find_fit(const SweepResult& r, const std::string& name) {
  for (const auto& [n, f] : r.fits)
    if (n == name) return &f;
  return nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string out = "acceptance_runs";
  std::string config_path;
  app.add_option("--out", out, "scratch directory");
  app.add_option("--config", config_path, "base configuration");
  CLI11_PARSE(app, argc, argv);

  const fs::path root(out);
  fs::remove_all(root);
  fs::create_directories(root);
  RunConfig base = config_path.empty() ? RunConfig{} : load_config(config_path);
  base.validate();

  double worst_mass = 0.0, min_f = std::numeric_limits<double>::infinity();

  const double lin = linear_oracle(base, worst_mass, min_f);
  report("linear-drift oracle", lin <= 1e-3, "max relative error " + fmt(lin));

  RunConfig sweep_cfg = base;
  sweep_cfg.output_dir = (root / "sweep").string();
  const SweepResult sweep = run_sweep(sweep_cfg);
  bool all_ok = true;
  bool d2_ok = true;
  for (const RunSummary& s : sweep.runs) {
    all_ok = all_ok && s.status == "ok";
    d2_ok = d2_ok && s.status == "ok" && s.d2_bound_ok;
    worst_mass = std::max(worst_mass, s.max_mass_drift);
    min_f = std::min(min_f, s.min_f);
    if (s.status != "ok") std::printf("  run eps=%s failed: %s\n", fmt(s.epsilon).c_str(), s.error.c_str());
  }
  const RateFit* th = find_fit(sweep, "theorem_bound");
  const RateFit* ue = find_fit(sweep, "u_error");
  const RateFit* d2 = find_fit(sweep, "d2_plateau");
  report("concentration rate", all_ok && th && th->slope >= 0.8 && th->r2 >= 0.95,
         th ? "slope " + fmt(th->slope) + ", r2 " + fmt(th->r2) : "no fit");
  report("macroscopic rate", all_ok && ue && ue->slope >= 0.8, ue ? "slope " + fmt(ue->slope) : "no fit");
  report("variance bound", d2_ok && d2 && d2->slope >= 0.8, d2 ? "plateau slope " + fmt(d2->slope) : "no fit");

  RunConfig diag = base;
  diag.diagnostics.lemma = true;
  diag.diagnostics.sandwich = true;
  std::vector<MomentSnapshot> snaps;
  RunSummary ds;
  try {
    ds = run_single(diag, 0.05, root / "diagnostics", &snaps);
    worst_mass = std::max(worst_mass, ds.max_mass_drift);
    min_f = std::min(min_f, ds.min_f);
  } catch (const std::exception& e) {
    ds.status = "failed";
    ds.error = e.what();
  }
  report("sub/super-solution certificate", ds.lemma_certified,
         ds.status == "ok" ? "C = " + fmt(ds.lemma_C) : ds.error);
  report("comparison sandwich", ds.sandwich_ordered,
         ds.status == "ok" ? "worst gaps " + fmt(ds.sandwich_worst_plus) + ", " + fmt(ds.sandwich_worst_minus)
                           : ds.error);

  double mono_worst = 0.0;
  const bool mono = monotone_pairs(20, mono_worst);
  report("conservation and positivity", worst_mass <= 1e-8 && min_f >= 0.0 && mono,
         "mass drift " + fmt(worst_mass) + ", min f " + fmt(min_f) + ", worst ordered gap " + fmt(mono_worst));

  bool particles_ok = false;
  std::string pdetail;
  try {
    const ParticleCheck pc = particle_cross_validation(base, 0.05, root / "particles", snaps.empty() ? nullptr : &snaps);
    particles_ok = pc.passes.minCoeff() >= 9;
    pdetail = "min passes per cell " + std::to_string(pc.passes.minCoeff()) + "/" + std::to_string(pc.checkpoints);
  } catch (const std::exception& e) {
    pdetail = e.what();
  }
  report("particle cross-validation", particles_ok, pdetail);

  RunConfig repeat = sweep_cfg;
  repeat.output_dir = (root / "sweep_repeat").string();
  run_sweep(repeat);
  const auto h1 = csv_hashes(root / "sweep"), h2 = csv_hashes(root / "sweep_repeat");
  report("determinism", !h1.empty() && h1 == h2, std::to_string(h1.size()) + " CSV files compared");

  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
