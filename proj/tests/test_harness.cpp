#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "fhn/harness.hpp"

namespace {

using namespace fhn;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fhnlab_test_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny_config() {
  RunConfig c;
  c.space.nodes = 2;
  c.grid.n_v = 48;
  c.grid.n_w = 48;
  c.schedule = {0.1, 0.0, 0.05};
  c.sweep = {0.2, 0.1};
  return c;
}

TEST(FitRate, MatchesLeastSquaresOracle) {
  const RateFit f = fit_rate({{0.1, 0.2}, {0.05, 0.1}, {0.025, 0.06}});
  EXPECT_NEAR(f.slope, 0.8684827970831025, 1e-13);
  EXPECT_NEAR(f.intercept, 0.35993070351889761, 1e-13);
  EXPECT_NEAR(f.r2, 0.99241397441292689, 1e-13);
}

TEST(FitRate, ExactPowerLaw) {
  const RateFit f = fit_rate({{0.1, 0.3}, {0.05, 0.15}, {0.025, 0.075}, {0.0125, 0.0375}});
  EXPECT_NEAR(f.slope, 1.0, 1e-13);
  EXPECT_NEAR(f.r2, 1.0, 1e-13);
}

TEST(FitRate, DegeneratePairs) {
  EXPECT_THROW(fit_rate({{0.1, 0.2}, {0.05, 0.1}}), DegeneratePairs);
  EXPECT_THROW(fit_rate({{0.1, 0.2}, {0.05, 0.0}, {0.025, 0.1}}), DegeneratePairs);
  EXPECT_THROW(fit_rate({{0.1, 0.2}, {0.1, 0.1}, {0.1, 0.3}}), DegeneratePairs);
}

TEST(Persistence, GitBlobHash) {
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(Persistence, FormatDoubleRoundTrips) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678901234567}) {
    const std::string s = format_double(x);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(back, x) << s;
  }
  EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST(Config, JsonRoundTrip) {
  RunConfig c = tiny_config();
  c.model.drift = Drift::polynomial({0.0, 1.0, 0.0, -1.0});
  c.kernel = Kernel::power_law(0.5, 0.2);
  c.solver.reconstruction = Reconstruction::Muscl;
  const nlohmann::json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
}

TEST(Config, ValidationErrors) {
  RunConfig c = tiny_config();
  c.sweep = {0.1, 0.1};
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.diagnostics.alpha0 = 0.0;
  EXPECT_THROW(c.validate(), NonPositiveAlpha0);
  c = tiny_config();
  c.kernel = Kernel::power_law(1.0, 1.0);
  EXPECT_THROW(c.validate(), NonIntegrableKernel);
  EXPECT_THROW(config_from_json(nlohmann::json{{"model", {{"drift", "quartic"}}}}), ConfigError);
}

TEST(Config, LoadFromFile) {
  const fs::path dir = scratch("load");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << R"({"model": {"epsilon": 0.2}, "space": {"nodes": 4}})";
  const RunConfig c = load_config(dir / "c.json");
  EXPECT_DOUBLE_EQ(c.model.epsilon, 0.2);
  EXPECT_EQ(c.space.nodes, 4);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
}

TEST(RunSingle, DeterministicOutputsAndVerify) {
  const RunConfig c = tiny_config();
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const RunSummary sa = run_single(c, 0.1, a);
  run_single(c, 0.1, b);
  EXPECT_EQ(sa.status, "ok");
  EXPECT_LE(sa.max_mass_drift, 1e-8);
  EXPECT_GE(sa.min_f, 0.0);
  for (const char* name : {"moments.csv", "macro_limit.csv", "u_error.csv", "theorem_bound.csv", "d2_bound.csv",
                           "eps_macro_residual.csv"})
    EXPECT_EQ(git_blob_hash_file(a / name), git_blob_hash_file(b / name)) << name;
  const VerifyResult v = verify_run(a);
  EXPECT_TRUE(v.reproduced);
  EXPECT_TRUE(v.ok());
}

TEST(RunSweep, FailingMemberIsRecorded) {
  RunConfig c = tiny_config();
  c.sweep = {4.0, 0.2, 0.1};
  c.output_dir = scratch("sweep").string();
  const SweepResult r = run_sweep(c);
  ASSERT_EQ(r.runs.size(), 3u);
  EXPECT_EQ(r.runs[0].status, "failed");
  EXPECT_EQ(r.runs[1].status, "ok");
  EXPECT_TRUE(r.fits.empty());
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "sweep.json"));
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "rates.csv"));
}

}  // namespace
