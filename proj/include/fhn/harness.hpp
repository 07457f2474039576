#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fhn/hopfcole.hpp"
#include "fhn/kinetic.hpp"
#include "fhn/macro_limit.hpp"
#include "fhn/model.hpp"
#include "fhn/particles.hpp"

namespace fhn {

struct GridSpec {
  double v_center = 0.0, v_half_width = 4.0;
  int n_v = 192;
  double w_center = 0.0, w_half_width = 4.0;
  int n_w = 192;

  PhaseGrid build() const { return PhaseGrid(v_center, v_half_width, n_v, w_center, w_half_width, n_w); }
};

struct InitialSpec {
  double V0_mean = 0.8;
  double V0_amplitude = 0.2;  // V0(x) = mean + amplitude cos(2 pi x)
  double W0 = 0.2;
  double sigma_w = 0.5;
};

struct SpaceSpec {
  int nodes = 8;
  std::string rho0 = "bump";  // "bump" or "uniform"
  double bump_amplitude = 0.3;
};

struct DiagnosticsSpec {
  double alpha0 = 1.0;
  double half_width = 2.0;
  double lemma_tol = 1e-2;
  double c_start = 1.0;
  double c_cap = 1024.0;
  bool lemma = false;
  bool sandwich = false;
  int dump_fields_every = 0;  // snapshot stride for field dumps, 0 = off
};

struct ParticleSpec {
  Eigen::Index n = 5000;
  double dt = 1e-3;
  int replicas = 16;
  int checkpoints = 10;
};

struct RunConfig {
  ModelParams model;
  SpaceSpec space;
  Kernel kernel = Kernel::exponential(1.0, 0.5);
  GridSpec grid;
  InitialSpec initial;
  Schedule schedule{1.0, 0.0, 0.05};
  double macro_dt = 1e-3;
  SolverOptions solver;
  DiagnosticsSpec diagnostics;
  ParticleSpec particles;
  std::vector<double> sweep{0.1, 0.05, 0.025, 0.0125};
  std::uint64_t seed = 20240601;
  std::string output_dir = "runs";

  /// Throws ConfigError (or the module error) on invalid fields.
  void validate() const;
  SpatialField rho0() const;
  Eigen::VectorXd V0() const;
  Eigen::VectorXd W0() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

struct RateFit {
  std::vector<std::pair<double, double>> pairs;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least squares in (ln eps, ln statistic). Throws DegeneratePairs.
RateFit fit_rate(const std::vector<std::pair<double, double>>& pairs);

/// Fixed-column CSV with 17 significant digits, written on destruction.
class CsvWriter {
 public:
  CsvWriter(std::filesystem::path path, const std::vector<std::string>& header);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  CsvWriter& operator<<(double x);
  CsvWriter& operator<<(long long x);
  CsvWriter& operator<<(int x) { return *this << static_cast<long long>(x); }
  CsvWriter& operator<<(long x) { return *this << static_cast<long long>(x); }
  CsvWriter& operator<<(const std::string& x);
  void end_row();

 private:
  void sep();

  std::filesystem::path path_;
  std::string buf_;
  bool row_started_ = false;
};

std::string format_double(double x);

/// Hex SHA-1 of "blob <size>\0" + content, as git computes it.
std::string git_blob_hash(const std::string& content);
std::string git_blob_hash_file(const std::filesystem::path& path);

struct RunSummary {
  double epsilon = 0.0;
  std::string status = "ok";
  std::string error;
  double t_end = 0.0;
  double theorem_statistic = 0.0;    // at t_end
  double theorem_unnormalized = 0.0;
  double theorem_statistic_max = 0.0;  // over all snapshots
  double u_error = 0.0;              // sup_x |U - U^eps| at t_end
  double d2_plateau = 0.0;           // max_x D2 at t_end
  bool d2_bound_ok = true;
  double d2_bound_worst_ratio = 0.0;
  double max_mass_drift = 0.0;
  double min_f = 0.0;
  double max_eps_macro_residual = 0.0;
  double max_abs_E = 0.0;
  double max_Mq = 0.0;
  bool lemma_run = false, lemma_certified = false;
  double lemma_C = 0.0;
  bool sandwich_run = false, sandwich_ordered = false;
  double sandwich_worst_plus = 0.0, sandwich_worst_minus = 0.0;
  double wall_seconds = 0.0;
};

nlohmann::json summary_to_json(const RunSummary& s);

/// Kinetic run for one epsilon plus the limit system and all diagnostics.
/// Writes CSVs and manifest.json into dir.
RunSummary run_single(const RunConfig& config, double epsilon, const std::filesystem::path& dir,
                      std::vector<MomentSnapshot>* snapshots = nullptr);

struct SweepResult {
  std::vector<RunSummary> runs;
  std::vector<std::pair<std::string, RateFit>> fits;
};

/// One run directory per epsilon under config.output_dir, plus sweep.json
/// and rates.csv. A failing run is recorded and the sweep continues.
SweepResult run_sweep(const RunConfig& config);

struct ParticleCheck {
  std::vector<double> t;
  Eigen::MatrixXd mean_v, replica_mean, se, kinetic_V, D2;  // checkpoints x cells
  Eigen::VectorXi passes;                                   // per cell
  int checkpoints = 0;
};

/// Particle replicas against the kinetic run of the same configuration at
/// config.particles.checkpoints equally spaced times in (0, t_end]. Kinetic
/// snapshots are reused when given and computed otherwise.
ParticleCheck particle_cross_validation(const RunConfig& config, double epsilon, const std::filesystem::path& dir,
                                        const std::vector<MomentSnapshot>* kinetic = nullptr);

struct VerifyResult {
  bool reproduced = true;
  std::vector<std::string> mismatched;
  std::vector<std::pair<std::string, bool>> checks;
  bool ok() const;
};

/// Re-runs the configuration echoed in run_dir/manifest.json in a scratch
/// directory, compares CSV hashes and re-evaluates the run checks.
VerifyResult verify_run(const std::filesystem::path& run_dir);

}  // namespace fhn
