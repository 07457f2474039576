#include "fhn/harness.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace fhn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Drift drift_from_json(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "cubic") return Drift::cubic();
    if (s == "linear") return Drift::linear();
    if (s == "zero") return Drift::zero();
    throw ConfigError("unknown drift '" + s + "'");
  }
  if (j.is_object() && j.contains("polynomial"))
    return Drift::polynomial(j.at("polynomial").get<std::vector<double>>());
  throw ConfigError("drift must be a name or {\"polynomial\": [...]}");
}

json drift_to_json(const Drift& d) {
  if (d.name() == "polynomial") return json{{"polynomial", d.coefficients()}};
  return d.name();
}

Kernel kernel_from_json(const json& j) {
  const std::string kind = j.value("kind", std::string("exponential"));
  Kernel k;
  if (kind == "zero") k = Kernel::zero();
  else if (kind == "exponential") k = Kernel::exponential(j.value("kappa", 1.0), j.value("strength", 0.5));
  else if (kind == "power_law") k = Kernel::power_law(j.value("beta", 0.5), j.value("strength", 0.5));
  else throw ConfigError("unknown kernel kind '" + kind + "'");
  read(j, "dimension", k.dimension);
  return k;
}

json kernel_to_json(const Kernel& k) {
  const char* kind = k.kind == KernelKind::Zero ? "zero" : k.kind == KernelKind::Exponential ? "exponential" : "power_law";
  return json{{"kind", kind}, {"strength", k.strength}, {"kappa", k.kappa}, {"beta", k.beta}, {"dimension", k.dimension}};
}

DriftSplit split_from(const std::string& s) {
  if (s == "linearized") return DriftSplit::Linearized;
  if (s == "full") return DriftSplit::Full;
  throw ConfigError("unknown drift_split '" + s + "'");
}

TimeIntegrator integrator_from(const std::string& s) {
  if (s == "euler") return TimeIntegrator::Euler;
  if (s == "heun") return TimeIntegrator::Heun;
  throw ConfigError("unknown integrator '" + s + "'");
}

Reconstruction reconstruction_from(const std::string& s) {
  if (s == "upwind") return Reconstruction::Upwind;
  if (s == "muscl") return Reconstruction::Muscl;
  throw ConfigError("unknown reconstruction '" + s + "'");
}

std::string eps_dir_name(double eps) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, eps);
  return "eps_" + std::string(buf, r.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string hex(const unsigned char* d, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back(digits[d[i] >> 4]);
    s.push_back(digits[d[i] & 15]);
  }
  return s;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (space.nodes < 1 || space.nodes > 16) throw ConfigError("space.nodes must lie in [1, 16]");
  if (space.rho0 != "bump" && space.rho0 != "uniform") throw ConfigError("space.rho0 must be 'bump' or 'uniform'");
  check_density(rho0(), model.m_star);
  if (kernel.kind != KernelKind::Zero) (void)kernel_matrix(kernel, rho0());
  (void)grid.build();
  if (!(initial.sigma_w > 0.0)) throw ConfigError("initial.sigma_w must be positive");
  if (!(schedule.t_end > 0.0)) throw ConfigError("schedule.t_end must be positive");
  if (schedule.dt < 0.0 || schedule.snapshot_dt < 0.0) throw ConfigError("schedule steps must be non-negative");
  if (!(macro_dt > 0.0)) throw ConfigError("macro_dt must be positive");
  if (!(solver.cfl > 0.0 && solver.cfl <= 1.0)) throw ConfigError("solver.cfl must lie in (0, 1]");
  if (!(diagnostics.alpha0 > 0.0)) throw NonPositiveAlpha0("diagnostics.alpha0 must be strictly positive");
  if (!(diagnostics.half_width > 0.0)) throw ConfigError("diagnostics.half_width must be positive");
  if (diagnostics.dump_fields_every < 0) throw ConfigError("diagnostics.dump_fields_every must be non-negative");
  if (particles.n < 1 || particles.replicas < 2 || particles.checkpoints < 1 || !(particles.dt > 0.0))
    throw ConfigError("particle settings out of range");
  if (sweep.empty()) throw ConfigError("sweep must not be empty");
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    if (!(sweep[i] > 0.0)) throw ConfigError("sweep entries must be positive");
    if (i > 0 && !(sweep[i] < sweep[i - 1])) throw ConfigError("sweep must be strictly decreasing");
  }
}

SpatialField RunConfig::rho0() const {
  return space.rho0 == "uniform" ? uniform_density(space.nodes)
                                 : bump_density(space.nodes, space.bump_amplitude, model.m_star);
}

Eigen::VectorXd RunConfig::V0() const {
  const SpatialField f = uniform_field(space.nodes);
  return (initial.V0_mean + initial.V0_amplitude * (2.0 * std::numbers::pi * f.nodes.array()).cos()).matrix();
}

Eigen::VectorXd RunConfig::W0() const { return Eigen::VectorXd::Constant(space.nodes, initial.W0); }

RunConfig config_from_json(const json& j) {
  RunConfig c;
  if (j.contains("model")) {
    const json& m = j.at("model");
    read(m, "a", c.model.a);
    read(m, "b", c.model.b);
    read(m, "c", c.model.c);
    read(m, "epsilon", c.model.epsilon);
    read(m, "p", c.model.p);
    read(m, "p_prime", c.model.p_prime);
    read(m, "m_star", c.model.m_star);
    if (m.contains("drift")) c.model.drift = drift_from_json(m.at("drift"));
  }
  if (j.contains("space")) {
    const json& s = j.at("space");
    read(s, "nodes", c.space.nodes);
    read(s, "rho0", c.space.rho0);
    read(s, "bump_amplitude", c.space.bump_amplitude);
  }
  if (j.contains("kernel")) c.kernel = kernel_from_json(j.at("kernel"));
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    read(g, "v_center", c.grid.v_center);
    read(g, "v_half_width", c.grid.v_half_width);
    read(g, "n_v", c.grid.n_v);
    read(g, "w_center", c.grid.w_center);
    read(g, "w_half_width", c.grid.w_half_width);
    read(g, "n_w", c.grid.n_w);
  }
  if (j.contains("initial")) {
    const json& i = j.at("initial");
    read(i, "V0_mean", c.initial.V0_mean);
    read(i, "V0_amplitude", c.initial.V0_amplitude);
    read(i, "W0", c.initial.W0);
    read(i, "sigma_w", c.initial.sigma_w);
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    read(s, "t_end", c.schedule.t_end);
    read(s, "dt", c.schedule.dt);
    read(s, "snapshot_dt", c.schedule.snapshot_dt);
  }
  read(j, "macro_dt", c.macro_dt);
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    read(s, "cfl", c.solver.cfl);
    if (s.contains("drift_split")) c.solver.drift_split = split_from(s.at("drift_split").get<std::string>());
    if (s.contains("integrator")) c.solver.integrator = integrator_from(s.at("integrator").get<std::string>());
    if (s.contains("reconstruction"))
      c.solver.reconstruction = reconstruction_from(s.at("reconstruction").get<std::string>());
    read(s, "mass_drift_abort", c.solver.mass_drift_abort);
    read(s, "truncation_tolerance", c.solver.truncation_tolerance);
  }
  c.solver.sigma_w = c.initial.sigma_w;
  if (j.contains("diagnostics")) {
    const json& d = j.at("diagnostics");
    read(d, "alpha0", c.diagnostics.alpha0);
    read(d, "half_width", c.diagnostics.half_width);
    read(d, "lemma_tol", c.diagnostics.lemma_tol);
    read(d, "c_start", c.diagnostics.c_start);
    read(d, "c_cap", c.diagnostics.c_cap);
    read(d, "lemma", c.diagnostics.lemma);
    read(d, "sandwich", c.diagnostics.sandwich);
    read(d, "dump_fields_every", c.diagnostics.dump_fields_every);
  }
  if (j.contains("particles")) {
    const json& p = j.at("particles");
    read(p, "n", c.particles.n);
    read(p, "dt", c.particles.dt);
    read(p, "replicas", c.particles.replicas);
    read(p, "checkpoints", c.particles.checkpoints);
  }
  read(j, "sweep", c.sweep);
  read(j, "seed", c.seed);
  read(j, "output_dir", c.output_dir);
  return c;
}

json config_to_json(const RunConfig& c) {
  const auto& s = c.solver;
  return json{
      {"model",
       {{"a", c.model.a},
        {"b", c.model.b},
        {"c", c.model.c},
        {"epsilon", c.model.epsilon},
        {"p", c.model.p},
        {"p_prime", c.model.p_prime},
        {"m_star", c.model.m_star},
        {"drift", drift_to_json(c.model.drift)}}},
      {"space", {{"nodes", c.space.nodes}, {"rho0", c.space.rho0}, {"bump_amplitude", c.space.bump_amplitude}}},
      {"kernel", kernel_to_json(c.kernel)},
      {"grid",
       {{"v_center", c.grid.v_center},
        {"v_half_width", c.grid.v_half_width},
        {"n_v", c.grid.n_v},
        {"w_center", c.grid.w_center},
        {"w_half_width", c.grid.w_half_width},
        {"n_w", c.grid.n_w}}},
      {"initial",
       {{"V0_mean", c.initial.V0_mean},
        {"V0_amplitude", c.initial.V0_amplitude},
        {"W0", c.initial.W0},
        {"sigma_w", c.initial.sigma_w}}},
      {"schedule", {{"t_end", c.schedule.t_end}, {"dt", c.schedule.dt}, {"snapshot_dt", c.schedule.snapshot_dt}}},
      {"macro_dt", c.macro_dt},
      {"solver",
       {{"cfl", s.cfl},
        {"drift_split", s.drift_split == DriftSplit::Linearized ? "linearized" : "full"},
        {"integrator", s.integrator == TimeIntegrator::Heun ? "heun" : "euler"},
        {"reconstruction", s.reconstruction == Reconstruction::Upwind ? "upwind" : "muscl"},
        {"mass_drift_abort", s.mass_drift_abort},
        {"truncation_tolerance", s.truncation_tolerance}}},
      {"diagnostics",
       {{"alpha0", c.diagnostics.alpha0},
        {"half_width", c.diagnostics.half_width},
        {"lemma_tol", c.diagnostics.lemma_tol},
        {"c_start", c.diagnostics.c_start},
        {"c_cap", c.diagnostics.c_cap},
        {"lemma", c.diagnostics.lemma},
        {"sandwich", c.diagnostics.sandwich},
        {"dump_fields_every", c.diagnostics.dump_fields_every}}},
      {"particles",
       {{"n", c.particles.n},
        {"dt", c.particles.dt},
        {"replicas", c.particles.replicas},
        {"checkpoints", c.particles.checkpoints}}},
      {"sweep", c.sweep},
      {"seed", c.seed},
      {"output_dir", c.output_dir}};
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  RunConfig c = config_from_json(j);
  c.validate();
  return c;
}

RateFit fit_rate(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 3) throw DegeneratePairs("rate fit needs at least three pairs");
  Eigen::VectorXd x(static_cast<Eigen::Index>(pairs.size())), y(x.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [eps, s] = pairs[i];
    if (!(eps > 0.0) || !(s > 0.0) || !std::isfinite(s)) throw DegeneratePairs("rate fit needs positive finite pairs");
    x[static_cast<Eigen::Index>(i)] = std::log(eps);
    y[static_cast<Eigen::Index>(i)] = std::log(s);
  }
  const double xm = x.mean(), ym = y.mean();
  const double sxx = (x.array() - xm).square().sum();
  if (!(sxx > 0.0)) throw DegeneratePairs("rate fit needs distinct epsilons");
  RateFit fit;
  fit.pairs = pairs;
  fit.slope = ((x.array() - xm) * (y.array() - ym)).sum() / sxx;
  fit.intercept = ym - fit.slope * xm;
  const double ss_res = (y.array() - fit.intercept - fit.slope * x.array()).square().sum();
  const double ss_tot = (y.array() - ym).square().sum();
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return fit;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

CsvWriter::CsvWriter(fs::path path, const std::vector<std::string>& header) : path_(std::move(path)) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += header[i];
  }
  buf_ += '\n';
}

CsvWriter::~CsvWriter() {
  std::ofstream out(path_, std::ios::binary);
  out << buf_;
}

void CsvWriter::sep() {
  if (row_started_) buf_ += ',';
  row_started_ = true;
}

CsvWriter& CsvWriter::operator<<(double x) {
  sep();
  buf_ += format_double(x);
  return *this;
}

CsvWriter& CsvWriter::operator<<(long long x) {
  sep();
  buf_ += std::to_string(x);
  return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& x) {
  sep();
  buf_ += x;
  return *this;
}

void CsvWriter::end_row() {
  buf_ += '\n';
  row_started_ = false;
}

std::string git_blob_hash(const std::string& content) {
  const std::string data = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  return hex(digest, SHA_DIGEST_LENGTH);
}

std::string git_blob_hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return git_blob_hash(ss.str());
}

json summary_to_json(const RunSummary& s) {
  return json{{"epsilon", s.epsilon},
              {"status", s.status},
              {"error", s.error},
              {"t_end", s.t_end},
              {"theorem_statistic", s.theorem_statistic},
              {"theorem_unnormalized", s.theorem_unnormalized},
              {"theorem_statistic_max", s.theorem_statistic_max},
              {"u_error", s.u_error},
              {"d2_plateau", s.d2_plateau},
              {"d2_bound_ok", s.d2_bound_ok},
              {"d2_bound_worst_ratio", s.d2_bound_worst_ratio},
              {"max_mass_drift", s.max_mass_drift},
              {"min_f", s.min_f},
              {"max_eps_macro_residual", s.max_eps_macro_residual},
              {"max_abs_E", s.max_abs_E},
              {"max_Mq", s.max_Mq},
              {"lemma_run", s.lemma_run},
              {"lemma_certified", s.lemma_certified},
              {"lemma_C", s.lemma_C},
              {"sandwich_run", s.sandwich_run},
              {"sandwich_ordered", s.sandwich_ordered},
              {"sandwich_worst_plus", s.sandwich_worst_plus},
              {"sandwich_worst_minus", s.sandwich_worst_minus},
              {"wall_seconds", s.wall_seconds}};
}

RunSummary run_single(const RunConfig& config, double epsilon, const fs::path& dir,
                      std::vector<MomentSnapshot>* snapshots_out) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig c = config;
  c.model.epsilon = epsilon;
  c.solver.sigma_w = c.initial.sigma_w;
  c.validate();
  fs::create_directories(dir);

  const SpatialField rho0 = c.rho0();
  const PhaseGrid grid = c.grid.build();
  const KineticSolver solver(c.model, grid, c.kernel, rho0, c.solver);
  const MacroSystem macro(c.model, c.kernel, rho0);
  const HJContext ctx{c.model, grid, rho0, solver.psi()};
  const Eigen::VectorXd V0 = c.V0(), W0 = c.W0();
  const Eigen::Index nodes = rho0.size();
  const double hw = c.diagnostics.half_width;

  KineticState state = solver.initialize_well_prepared(V0, W0);
  const std::vector<MacroState> limit =
      macro.integrate({0.0, V0, W0}, c.schedule.t_end, c.macro_dt, c.schedule.snapshot_dt);

  RunSummary sum;
  sum.epsilon = epsilon;
  sum.t_end = c.schedule.t_end;

  std::vector<TheoremBound> bounds;
  std::vector<std::string> outputs;
  int snap_index = 0;
  auto theorem_observer = [&](const KineticState& s) {
    const MacroState& lim = limit.at(static_cast<std::size_t>(snap_index));
    const HopfColeField hc = hopf_cole(s.f, s.rho0, epsilon);
    bounds.push_back(theorem_bound_check(hc, grid, s.rho0, c.model, lim.V, lim.W, s.t, hw));
    const int every = c.diagnostics.dump_fields_every;
    if (every > 0 && snap_index % every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "fields_%04d.csv", snap_index);
      outputs.emplace_back(name);
      CsvWriter out(dir / name, {"x_index", "v", "w", "f", "phi"});
      for (Eigen::Index i = 0; i < nodes; ++i) {
        const std::size_t ii = static_cast<std::size_t>(i);
        for (int k = 0; k < grid.n_w(); ++k)
          for (int j = 0; j < grid.n_v(); ++j) {
            out << i << grid.v(j) << grid.w(k) << s.f[ii](j, k) << hc.phi[ii](j, k);
            out.end_row();
          }
      }
    }
    ++snap_index;
  };

  std::vector<MomentSnapshot> snaps;
  SandwichReport sandwich;
  Envelopes env;
  if (c.diagnostics.sandwich) {
    env = build_envelopes(ctx, state, solver.diagnose(state),
                          {c.diagnostics.alpha0, 0.0, c.diagnostics.c_start});
    sandwich = comparison_sandwich(solver, state, env.plus, env.minus, c.schedule, c.diagnostics.alpha0, 1e-10,
                                   {theorem_observer}, &snaps);
  } else {
    snaps = solver.run(state, c.schedule, {theorem_observer});
  }
  if (limit.size() != snaps.size()) throw MissingSnapshots("limit trajectory and kinetic snapshots are misaligned");

  {
    CsvWriter out(dir / "moments.csv", {"t", "x_index", "V", "W", "mass", "D2", "Mq", "E", "min_f", "mass_drift"});
    sum.min_f = std::numeric_limits<double>::infinity();
    for (const MomentSnapshot& s : snaps)
      for (Eigen::Index i = 0; i < nodes; ++i) {
        const double drift = std::abs(s.mass[i] - state.initial_mass[i]) / state.initial_mass[i];
        sum.max_mass_drift = std::max(sum.max_mass_drift, drift);
        sum.min_f = std::min(sum.min_f, s.min_f[i]);
        sum.max_abs_E = std::max(sum.max_abs_E, std::abs(s.E[i]));
        sum.max_Mq = std::max(sum.max_Mq, s.Mq[i]);
        out << s.t << i << s.V[i] << s.W[i] << s.mass[i] << s.D2[i] << s.Mq[i] << s.E[i] << s.min_f[i] << drift;
        out.end_row();
      }
  }
  {
    CsvWriter out(dir / "macro_limit.csv", {"t", "x_index", "V", "W"});
    for (const MacroState& m : limit)
      for (Eigen::Index i = 0; i < nodes; ++i) {
        out << m.t << i << m.V[i] << m.W[i];
        out.end_row();
      }
  }
  {
    CsvWriter out(dir / "u_error.csv", {"t", "sup_err", "sup_V", "sup_W"});
    for (std::size_t n = 0; n < snaps.size(); ++n) {
      const Eigen::ArrayXd dV = (snaps[n].V - limit[n].V).array(), dW = (snaps[n].W - limit[n].W).array();
      const double err = (dV.square() + dW.square()).sqrt().maxCoeff();
      out << snaps[n].t << err << dV.abs().maxCoeff() << dW.abs().maxCoeff();
      out.end_row();
      if (n + 1 == snaps.size()) sum.u_error = err;
    }
  }
  {
    CsvWriter out(dir / "theorem_bound.csv", {"t", "statistic", "unnormalized"});
    for (const TheoremBound& b : bounds) {
      out << b.t << b.statistic << b.unnormalized;
      out.end_row();
      sum.theorem_statistic_max = std::max(sum.theorem_statistic_max, b.statistic);
    }
    sum.theorem_statistic = bounds.back().statistic;
    sum.theorem_unnormalized = bounds.back().unnormalized;
  }
  {
    CsvWriter out(dir / "d2_bound.csv", {"t", "x_index", "D2", "bound", "ok"});
    const Eigen::VectorXd& d20 = snaps.front().D2;
    for (const MomentSnapshot& s : snaps)
      for (Eigen::Index i = 0; i < nodes; ++i) {
        const double bound = 3.0 * (d20[i] * std::exp(-2.0 * c.model.m_star * s.t / epsilon) + epsilon);
        const bool ok = s.D2[i] <= bound;
        sum.d2_bound_ok = sum.d2_bound_ok && ok;
        sum.d2_bound_worst_ratio = std::max(sum.d2_bound_worst_ratio, s.D2[i] / bound);
        out << s.t << i << s.D2[i] << bound << (ok ? 1 : 0);
        out.end_row();
      }
    sum.d2_plateau = snaps.back().D2.maxCoeff();
  }
  outputs.insert(outputs.begin(), {"moments.csv", "macro_limit.csv", "u_error.csv", "theorem_bound.csv", "d2_bound.csv"});

  if (snaps.size() >= 3) {
    const EpsMacroReconstruction rec = eps_macro_reconstruction(snaps, macro);
    sum.max_eps_macro_residual = rec.max_abs_residual;
    CsvWriter out(dir / "eps_macro_residual.csv", {"t", "x_index", "dV", "dW"});
    for (const MacroResidual& r : rec.residuals)
      for (Eigen::Index i = 0; i < nodes; ++i) {
        out << r.t << i << r.dV[i] << r.dW[i];
        out.end_row();
      }
    outputs.emplace_back("eps_macro_residual.csv");
  }

  double lemma_C = c.diagnostics.c_start;
  if (c.diagnostics.lemma) {
    const LemmaReport lr = certify_lemma(ctx, snaps, c.diagnostics.alpha0, c.diagnostics.lemma_tol, hw,
                                         c.diagnostics.c_start, c.diagnostics.c_cap);
    sum.lemma_run = true;
    sum.lemma_certified = lr.certified;
    sum.lemma_C = lr.C;
    lemma_C = lr.C;
    CsvWriter out(dir / "lemma.csv", {"t", "C", "min_residual_plus", "max_residual_minus"});
    for (std::size_t n = 0; n < lr.times.size(); ++n) {
      out << lr.times[n] << lr.C << lr.min_plus[n] << lr.max_minus[n];
      out.end_row();
    }
    outputs.emplace_back("lemma.csv");
  }

  if (c.diagnostics.sandwich) {
    sum.sandwich_run = true;
    sum.sandwich_ordered = sandwich.ordered;
    sum.sandwich_worst_plus = std::numeric_limits<double>::infinity();
    sum.sandwich_worst_minus = std::numeric_limits<double>::infinity();
    const double m_initial = env.params.m0 + env.params.C;
    const double k = 6.0 * (std::abs(c.model.a) + c.model.b);
    CsvWriter out(dir / "sandwich.csv",
                  {"t", "min_gap_plus", "min_gap_minus", "max_f", "analytic_gap_plus", "analytic_gap_minus"});
    for (std::size_t n = 0; n < sandwich.t.size(); ++n) {
      const double m_t = m_initial + lemma_C * std::expm1(k * sandwich.t[n]);
      sum.sandwich_worst_plus = std::min(sum.sandwich_worst_plus, sandwich.min_gap_plus[n] / sandwich.max_f[n]);
      sum.sandwich_worst_minus = std::min(sum.sandwich_worst_minus, sandwich.min_gap_minus[n] / sandwich.max_f[n]);
      out << sandwich.t[n] << sandwich.min_gap_plus[n] << sandwich.min_gap_minus[n] << sandwich.max_f[n]
          << sandwich.core_gap_plus[n] + m_t << sandwich.core_gap_minus[n] + m_t;
      out.end_row();
    }
    outputs.emplace_back("sandwich.csv");
  }

  sum.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json hashes = json::object();
  for (const std::string& name : outputs) hashes[name] = git_blob_hash_file(dir / name);
  json manifest{{"epsilon", epsilon},
                {"config", config_to_json(c)},
                {"grid", grid.describe()},
                {"outputs", hashes},
                {"snapshots", snaps.size()},
                {"summary", summary_to_json(sum)}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  if (snapshots_out) *snapshots_out = std::move(snaps);
  return sum;
}

SweepResult run_sweep(const RunConfig& config) {
  config.validate();
  const fs::path root(config.output_dir);
  fs::create_directories(root);
  SweepResult result;
  for (double eps : config.sweep) {
    const fs::path dir = root / eps_dir_name(eps);
    try {
      result.runs.push_back(run_single(config, eps, dir));
    } catch (const std::exception& e) {
      RunSummary s;
      s.epsilon = eps;
      s.status = "failed";
      s.error = e.what();
      fs::create_directories(dir);
      write_text(dir / "manifest.json", json{{"epsilon", eps}, {"summary", summary_to_json(s)}}.dump(2) + "\n");
      result.runs.push_back(s);
    }
  }

  std::vector<std::pair<double, double>> theorem, u_err, d2;
  for (const RunSummary& s : result.runs) {
    if (s.status != "ok") continue;
    theorem.emplace_back(s.epsilon, s.theorem_unnormalized);
    u_err.emplace_back(s.epsilon, s.u_error);
    d2.emplace_back(s.epsilon, s.d2_plateau);
  }
  for (auto& [name, pairs] : {std::pair{"theorem_bound", theorem}, {"u_error", u_err}, {"d2_plateau", d2}}) {
    try {
      result.fits.emplace_back(name, fit_rate(pairs));
    } catch (const DegeneratePairs&) {
    }
  }

  {
    CsvWriter out(root / "rates.csv", {"quantity", "slope", "intercept", "r2", "pairs"});
    json fits = json::object();
    for (std::size_t q = 0; q < result.fits.size(); ++q) {
      const RateFit& f = result.fits[q].second;
      out << result.fits[q].first << f.slope << f.intercept << f.r2 << static_cast<long long>(f.pairs.size());
      out.end_row();
      fits[result.fits[q].first] = {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"pairs", f.pairs}};
    }
    json runs = json::array();
    for (const RunSummary& s : result.runs) {
      json r = summary_to_json(s);
      r.erase("wall_seconds");
      runs.push_back(r);
    }
    write_text(root / "sweep.json", json{{"runs", runs}, {"fits", fits}}.dump(2) + "\n");
  }
  return result;
}

ParticleCheck particle_cross_validation(const RunConfig& config, double epsilon, const fs::path& dir,
                                        const std::vector<MomentSnapshot>* kinetic) {
  RunConfig c = config;
  c.model.epsilon = epsilon;
  c.solver.sigma_w = c.initial.sigma_w;
  c.validate();
  fs::create_directories(dir);
  const SpatialField rho0 = c.rho0();
  const Eigen::Index cells = rho0.size();
  const int K = c.particles.checkpoints;
  const double t_end = c.schedule.t_end;
  const long long total_steps = std::llround(t_end / c.particles.dt);
  if (total_steps % K != 0 || std::abs(total_steps * c.particles.dt - t_end) > 1e-9)
    throw ConfigError("t_end must be a whole number of particle steps per checkpoint");
  const long long per_checkpoint = total_steps / K;
  const double dt = t_end / static_cast<double>(total_steps);

  std::vector<MomentSnapshot> own;
  if (!kinetic) {
    const KineticSolver solver(c.model, c.grid.build(), c.kernel, rho0, c.solver);
    KineticState state = solver.initialize_well_prepared(c.V0(), c.W0());
    Schedule sched = c.schedule;
    sched.snapshot_dt = t_end / K;
    own = solver.run(state, sched);
    kinetic = &own;
  }

  ParticleCheck out;
  out.checkpoints = K;
  out.mean_v = Eigen::MatrixXd::Zero(K, cells);
  out.replica_mean = out.mean_v;
  out.se = out.mean_v;
  out.kinetic_V = out.mean_v;
  out.D2 = out.mean_v;
  out.passes = Eigen::VectorXi::Zero(cells);
  for (int k = 0; k < K; ++k) {
    const double t = t_end * (k + 1) / K;
    out.t.push_back(t);
    auto it = std::find_if(kinetic->begin(), kinetic->end(),
                           [&](const MomentSnapshot& s) { return std::abs(s.t - t) < 1e-9; });
    if (it == kinetic->end()) throw MissingSnapshots("no kinetic snapshot at a particle checkpoint");
    out.kinetic_V.row(k) = it->V.transpose();
  }

  const ParticleSystem ps(c.model, c.kernel, rho0);
  const int R = c.particles.replicas;
  std::vector<Eigen::MatrixXd> means(static_cast<std::size_t>(R), Eigen::MatrixXd(K, cells));
  for (int r = 0; r < R; ++r) {
    Ensemble ens = ps.init(c.particles.n, c.V0(), c.W0(), c.initial.sigma_w, c.seed + static_cast<std::uint64_t>(r));
    for (int k = 0; k < K; ++k) {
      for (long long s = 0; s < per_checkpoint; ++s) ps.em_step(ens, dt);
      const CellMoments m = empirical_moments(ens, cells, 2.0);
      means[static_cast<std::size_t>(r)].row(k) = m.mean_v.transpose();
      if (r == 0) out.D2.row(k) = m.Dq.transpose();
    }
  }
  for (int r = 0; r < R; ++r) out.replica_mean += means[static_cast<std::size_t>(r)] / R;
  for (int r = 0; r < R; ++r)
    out.se += (means[static_cast<std::size_t>(r)] - out.replica_mean).array().square().matrix() / (R - 1);
  out.se = out.se.array().sqrt().matrix();
  out.mean_v = means.front();

  CsvWriter csv(dir / "particles.csv",
                {"t", "x_index", "mean_v", "replica_mean", "se", "kinetic_V", "within", "D2"});
  for (int k = 0; k < K; ++k)
    for (Eigen::Index i = 0; i < cells; ++i) {
      const bool within = std::abs(out.mean_v(k, i) - out.kinetic_V(k, i)) <= 3.0 * out.se(k, i);
      if (within) ++out.passes[i];
      csv << out.t[static_cast<std::size_t>(k)] << i << out.mean_v(k, i) << out.replica_mean(k, i) << out.se(k, i)
          << out.kinetic_V(k, i) << (within ? 1 : 0) << out.D2(k, i);
      csv.end_row();
    }
  return out;
}

bool VerifyResult::ok() const {
  if (!reproduced) return false;
  for (const auto& [name, pass] : checks)
    if (!pass) return false;
  return true;
}

VerifyResult verify_run(const fs::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  if (!in) throw ConfigError("no manifest.json in " + run_dir.string());
  json manifest;
  in >> manifest;
  if (!manifest.contains("config")) throw ConfigError("manifest has no config echo");
  const RunConfig config = config_from_json(manifest.at("config"));
  const double eps = manifest.at("epsilon").get<double>();

  const fs::path scratch = run_dir / "verify_scratch";
  fs::remove_all(scratch);
  const RunSummary s = run_single(config, eps, scratch);

  VerifyResult out;
  for (const auto& [name, hash] : manifest.at("outputs").items()) {
    const fs::path p = scratch / name;
    if (!fs::exists(p) || git_blob_hash_file(p) != hash.get<std::string>()) {
      out.reproduced = false;
      out.mismatched.push_back(name);
    }
  }
  out.checks.emplace_back("mass_drift", s.max_mass_drift <= 1e-8);
  out.checks.emplace_back("positivity", s.min_f >= 0.0);
  out.checks.emplace_back("d2_bound", s.d2_bound_ok);
  if (s.lemma_run) out.checks.emplace_back("lemma", s.lemma_certified);
  if (s.sandwich_run) out.checks.emplace_back("sandwich", s.sandwich_ordered);
  fs::remove_all(scratch);
  return out;
}

}  // namespace fhn
