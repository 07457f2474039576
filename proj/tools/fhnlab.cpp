#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fhn/harness.hpp"

namespace {

using namespace fhn;

struct Overrides {
  std::string config;
  std::optional<double> eps, t_end, snapshot_dt, dt;
  std::optional<int> n_v, n_w, nodes;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON config file");
    app->add_option("--eps", eps, "epsilon");
    app->add_option("--t-end", t_end, "final time");
    app->add_option("--snapshot-dt", snapshot_dt, "snapshot stride");
    app->add_option("--dt", dt, "time step (0 = automatic)");
    app->add_option("--n-v", n_v, "phase grid cells in v");
    app->add_option("--n-w", n_w, "phase grid cells in w");
    app->add_option("--nodes", nodes, "spatial nodes");
    app->add_option("--seed", seed, "random seed");
    app->add_option("-o,--out", out, "output directory");
  }

  RunConfig build() const {
    RunConfig c = config.empty() ? RunConfig{} : load_config(config);
    if (eps) c.model.epsilon = *eps;
    if (t_end) c.schedule.t_end = *t_end;
    if (snapshot_dt) c.schedule.snapshot_dt = *snapshot_dt;
    if (dt) c.schedule.dt = *dt;
    if (n_v) c.grid.n_v = *n_v;
    if (n_w) c.grid.n_w = *n_w;
    if (nodes) c.space.nodes = *nodes;
    if (seed) c.seed = *seed;
    if (out) c.output_dir = *out;
    c.validate();
    return c;
  }
};

void print_check(const std::string& name, bool pass, const std::string& detail = {}) {
  std::printf("%s %s%s%s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.empty() ? "" : ": ", detail.c_str());
}

bool run_checks(const RunSummary& s) {
  bool ok = s.status == "ok";
  print_check("mass drift", s.max_mass_drift <= 1e-8, format_double(s.max_mass_drift));
  ok = ok && s.max_mass_drift <= 1e-8;
  print_check("positivity", s.min_f >= 0.0, format_double(s.min_f));
  ok = ok && s.min_f >= 0.0;
  print_check("D2 bound", s.d2_bound_ok, "worst ratio " + format_double(s.d2_bound_worst_ratio));
  ok = ok && s.d2_bound_ok;
  if (s.lemma_run) {
    print_check("lemma", s.lemma_certified, "C = " + format_double(s.lemma_C));
    ok = ok && s.lemma_certified;
  }
  if (s.sandwich_run) {
    print_check("sandwich", s.sandwich_ordered,
                format_double(s.sandwich_worst_plus) + " / " + format_double(s.sandwich_worst_minus));
    ok = ok && s.sandwich_ordered;
  }
  return ok;
}

std::vector<std::pair<double, double>> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<std::pair<double, double>> pairs;
  std::string line;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double e, s;
    if (ss >> e >> s) pairs.emplace_back(e, s);
  }
  return pairs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FitzHugh-Nagumo mean-field numerical lab"};
  app.require_subcommand(1);
  int status = 0;

  Overrides validate_o;
  auto* validate = app.add_subcommand("validate", "check the standing assumptions of a config");
  validate_o.attach(validate);
  validate->callback([&] {
    const RunConfig c = validate_o.build();
    bool ok = true;
    for (const AssumptionCheck& a : assumption_report(c.model, c.kernel, c.rho0())) {
      print_check(a.name, a.passed, a.detail);
      ok = ok && a.passed;
    }
    status = ok ? 0 : 1;
  });

  Overrides kinetic_o;
  bool lemma = false, sandwich = false;
  int dump_every = -1;
  auto* kinetic = app.add_subcommand("kinetic-run", "one kinetic run with all diagnostics");
  kinetic_o.attach(kinetic);
  kinetic->add_flag("--lemma", lemma, "certify the sub/super-solutions");
  kinetic->add_flag("--sandwich", sandwich, "evolve the comparison envelopes");
  kinetic->add_option("--dump-every", dump_every, "field dump stride in snapshots (0 = off)");
  kinetic->callback([&] {
    RunConfig c = kinetic_o.build();
    c.diagnostics.lemma = c.diagnostics.lemma || lemma;
    c.diagnostics.sandwich = c.diagnostics.sandwich || sandwich;
    if (dump_every >= 0) c.diagnostics.dump_fields_every = dump_every;
    const RunSummary s = run_single(c, c.model.epsilon, c.output_dir);
    std::printf("theorem statistic %s, u error %s, wall %.1f s\n", format_double(s.theorem_statistic).c_str(),
                format_double(s.u_error).c_str(), s.wall_seconds);
    status = run_checks(s) ? 0 : 1;
  });

  Overrides macro_o;
  double macro_stride = -1.0;
  auto* macro_cmd = app.add_subcommand("macro-run", "integrate the limit system");
  macro_o.attach(macro_cmd);
  macro_cmd->add_option("--stride", macro_stride, "output stride (default: snapshot_dt)");
  macro_cmd->callback([&] {
    const RunConfig c = macro_o.build();
    const MacroSystem sys(c.model, c.kernel, c.rho0());
    const double stride = macro_stride >= 0.0 ? macro_stride : c.schedule.snapshot_dt;
    const auto traj = sys.integrate({0.0, c.V0(), c.W0()}, c.schedule.t_end, c.macro_dt, stride);
    std::filesystem::create_directories(c.output_dir);
    CsvWriter out(std::filesystem::path(c.output_dir) / "macro_limit.csv", {"t", "x_index", "V", "W"});
    for (const MacroState& m : traj)
      for (Eigen::Index i = 0; i < m.V.size(); ++i) {
        out << m.t << i << m.V[i] << m.W[i];
        out.end_row();
      }
  });

  Overrides particle_o;
  std::optional<Eigen::Index> n_particles;
  std::optional<double> particle_dt;
  bool cross = false;
  auto* particle = app.add_subcommand("particle-run", "particle network run");
  particle_o.attach(particle);
  particle->add_option("-n,--particles", n_particles, "number of neurons");
  particle->add_option("--particle-dt", particle_dt, "Euler-Maruyama step");
  particle->add_flag("--cross-validate", cross, "replicas against the kinetic solver");
  particle->callback([&] {
    RunConfig c = particle_o.build();
    if (n_particles) c.particles.n = *n_particles;
    if (particle_dt) c.particles.dt = *particle_dt;
    const std::filesystem::path dir(c.output_dir);
    std::filesystem::create_directories(dir);
    if (cross) {
      const ParticleCheck pc = particle_cross_validation(c, c.model.epsilon, dir);
      bool ok = true;
      for (Eigen::Index i = 0; i < pc.passes.size(); ++i) {
        const bool pass = pc.passes[i] >= pc.checkpoints - pc.checkpoints / 10;
        print_check("cell " + std::to_string(i), pass,
                    std::to_string(pc.passes[i]) + "/" + std::to_string(pc.checkpoints));
        ok = ok && pass;
      }
      status = ok ? 0 : 1;
      return;
    }
    const ParticleSystem ps(c.model, c.kernel, c.rho0());
    Ensemble ens = ps.init(c.particles.n, c.V0(), c.W0(), c.initial.sigma_w, c.seed);
    const long long steps = std::llround(c.schedule.t_end / c.particles.dt);
    const long long every = std::max(1LL, std::llround(c.schedule.snapshot_dt / c.particles.dt));
    const double q = 2.0 * (c.model.p + c.model.p_prime);
    CsvWriter out(dir / "particle_moments.csv", {"t", "x_index", "count", "mean_v", "mean_w", "D2", "Mq"});
    auto record = [&] {
      const CellMoments m2 = empirical_moments(ens, c.space.nodes, 2.0);
      const CellMoments mq = empirical_moments(ens, c.space.nodes, q);
      for (Eigen::Index i = 0; i < m2.count.size(); ++i) {
        out << ens.t << i << m2.count[i] << m2.mean_v[i] << m2.mean_w[i] << m2.Dq[i] << mq.Mq[i];
        out.end_row();
      }
    };
    record();
    for (long long s = 1; s <= steps; ++s) {
      ps.em_step(ens, c.particles.dt);
      if (s % every == 0) record();
    }
  });

  Overrides sweep_o;
  std::vector<double> sweep_eps;
  double min_slope = 0.8, min_r2 = 0.95;
  auto* sweep = app.add_subcommand("sweep-eps", "epsilon sweep with rate fits");
  sweep_o.attach(sweep);
  sweep->add_option("--sweep", sweep_eps, "epsilon values, strictly decreasing");
  sweep->add_option("--min-slope", min_slope, "required fitted slope");
  sweep->add_option("--min-r2", min_r2, "required r^2 for the theorem fit");
  sweep->callback([&] {
    RunConfig c = sweep_o.build();
    if (!sweep_eps.empty()) c.sweep = sweep_eps;
    c.validate();
    const SweepResult r = run_sweep(c);
    bool ok = true;
    for (const RunSummary& s : r.runs) {
      std::printf("eps %s: %s\n", format_double(s.epsilon).c_str(), s.status.c_str());
      ok = ok && (s.status == "ok" ? run_checks(s) : (print_check("run", false, s.error), false));
    }
    for (const auto& [name, fit] : r.fits) {
      const bool pass = fit.slope >= min_slope && (name != "theorem_bound" || fit.r2 >= min_r2);
      print_check(name + " rate", pass, "slope " + format_double(fit.slope) + ", r2 " + format_double(fit.r2));
      ok = ok && pass;
    }
    if (r.fits.size() < 3) ok = false;
    status = ok ? 0 : 1;
  });

  std::string verify_dir;
  auto* verify = app.add_subcommand("verify", "re-run a run directory and check it");
  verify->add_option("run_dir", verify_dir, "directory with manifest.json")->required();
  verify->callback([&] {
    const VerifyResult v = verify_run(verify_dir);
    print_check("reproduced", v.reproduced);
    for (const std::string& m : v.mismatched) std::printf("  mismatch %s\n", m.c_str());
    for (const auto& [name, pass] : v.checks) print_check(name, pass);
    status = v.ok() ? 0 : 1;
  });

  std::string pairs_file;
  double fit_min_slope = 0.0;
  auto* fit = app.add_subcommand("fit-rate", "log-log fit of (epsilon, statistic) pairs");
  fit->add_option("pairs", pairs_file, "file with two columns: epsilon statistic")->required();
  fit->add_option("--min-slope", fit_min_slope, "required slope");
  fit->callback([&] {
    const RateFit f = fit_rate(read_pairs(pairs_file));
    std::printf("slope %s intercept %s r2 %s\n", format_double(f.slope).c_str(), format_double(f.intercept).c_str(),
                format_double(f.r2).c_str());
    status = f.slope >= fit_min_slope ? 0 : 1;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const fhn::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return status;
}
