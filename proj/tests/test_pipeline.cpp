// End-to-end checks of the command-line tool on a small desk-sized setup.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "osse/field_io.hpp"
#include "osse/truth.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kConfig = R"({
  "truth": {"grid": {"preset": "desk", "nt": 21}, "n_eddies": 3, "seed": 5},
  "obs": {"tracks": {"n_satellites": 3}, "ssh": {"sigma_noise": 0.019}},
  "reconstruct": {"engine": "oi", "window": {"length": 11, "stride": 5},
                  "var": {"max_iters": 15}},
  "evaluate": {"eddy_day_stride": 2}
})";

int run(const std::string& args) {
  const std::string cmd = std::string(OSSE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

/// Shared scratch area with a truth and an observation set built once.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = osse::testing::scratch_dir("pipeline");
    std::ofstream(root_ / "cfg.json") << kConfig;
    ASSERT_EQ(run(cfg() + " generate-truth -o " + (root_ / "truth").string()), 0);
    ASSERT_EQ(run(cfg() + " simulate-obs --truth " + (root_ / "truth").string() + " -o " + (root_ / "obs").string() +
                  " --hold-out-sat 2"),
              0);
  }
  static std::string cfg() { return "-c " + (root_ / "cfg.json").string(); }
  static fs::path root_;
};
fs::path Pipeline::root_;

}  // namespace

TEST_F(Pipeline, GenerateTruthWritesContainersAndIsRepeatable) {
  for (const char* f : {"ssh.bin", "sst.bin", "u.bin", "v.bin", "eddy_params.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(root_ / "truth" / f)) << f;
  ASSERT_EQ(run(cfg() + " generate-truth -o " + (root_ / "truth2").string()), 0);
  for (const char* f : {"ssh.bin", "sst.bin", "u.bin", "v.bin", "eddy_params.json"})
    EXPECT_EQ(slurp(root_ / "truth" / f), slurp(root_ / "truth2" / f)) << f;
  const json m = read_json(root_ / "truth" / "manifest.json");
  EXPECT_EQ(m["command"], "generate-truth");
  EXPECT_TRUE(m.contains("config_hash"));
}

TEST_F(Pipeline, ConfigAndInputErrorsExitWithUsageCode) {
  std::ofstream(root_ / "bad.json") << "{ not json";
  EXPECT_EQ(run("-c " + (root_ / "bad.json").string() + " generate-truth -o " + (root_ / "x").string()), 2);
  EXPECT_EQ(run("-c " + (root_ / "missing.json").string() + " generate-truth -o " + (root_ / "x").string()), 2);
  EXPECT_EQ(run(cfg() + " simulate-obs --truth " + (root_ / "nowhere").string() + " -o " + (root_ / "x").string()), 2);
  EXPECT_EQ(run("no-such-command"), 2);
}

TEST_F(Pipeline, HoldOutSplitPartitionsTheTracks) {
  const auto all = osse::io::read_tracks_csv(root_ / "obs" / "tracks.csv");
  const auto in = osse::io::read_tracks_csv(root_ / "obs" / "tracks_input.csv");
  const auto out = osse::io::read_tracks_csv(root_ / "obs" / "tracks_held_out.csv");
  EXPECT_EQ(in.size() + out.size(), all.size());
  for (std::size_t n = 0; n < out.size(); ++n) EXPECT_EQ(out[n].sat_id, 2);
  for (std::size_t n = 0; n < in.size(); ++n) EXPECT_NE(in[n].sat_id, 2);
  EXPECT_GT(out.size(), 0u);
}

TEST_F(Pipeline, NoiseFreeObservationsSampleTheTruth) {
  const fs::path c = root_ / "cfg0.json";
  json j = json::parse(kConfig);
  j["obs"]["ssh"]["sigma_noise"] = 0.0;
  std::ofstream(c) << j.dump();
  ASSERT_EQ(run("-c " + c.string() + " simulate-obs --truth " + (root_ / "truth").string() + " -o " +
                (root_ / "obs0").string()),
            0);
  const auto obs = osse::io::read_tracks_csv(root_ / "obs0" / "tracks.csv");
  const auto truth = osse::read_truth(root_ / "truth");
  const auto expect = osse::sample_trilinear(truth.ssh, obs);
  ASSERT_GT(obs.size(), 0u);
  double worst = 0.0;
  for (std::size_t n = 0; n < obs.size(); ++n) worst = std::max(worst, std::abs(obs[n].value - expect[n]));
  EXPECT_LT(worst, 1e-12);
}

TEST_F(Pipeline, ReconstructOiAndVarEnsemble) {
  ASSERT_EQ(run(cfg() + " reconstruct --obs " + (root_ / "obs").string() + " -o " + (root_ / "oi").string()), 0);
  EXPECT_TRUE(fs::exists(root_ / "oi" / "estimate.bin"));
  EXPECT_EQ(read_json(root_ / "oi" / "manifest.json")["effective"]["engine"], "oi");

  ASSERT_EQ(run(cfg() + " reconstruct --engine var --n-ensemble 3 --lambda1 0.2 --lambda2 0.3 --obs " +
                (root_ / "obs").string() + " -o " + (root_ / "var").string()),
            0);
  for (const char* f : {"estimate.bin", "member_0.bin", "member_1.bin", "member_2.bin"})
    EXPECT_TRUE(fs::exists(root_ / "var" / f)) << f;
  EXPECT_TRUE(fs::exists(root_ / "var" / "traces" / "m0_w0.csv"));
  const json eff = read_json(root_ / "var" / "manifest.json")["effective"];
  EXPECT_EQ(eff["engine"], "var");
  EXPECT_EQ(eff["n_ensemble"], 3);
  EXPECT_DOUBLE_EQ(eff["var"]["lambda1"].get<double>(), 0.2);
  EXPECT_DOUBLE_EQ(eff["var"]["lambda2"].get<double>(), 0.3);

  // Negative weights are a usage error.
  EXPECT_EQ(run(cfg() + " reconstruct --engine var --lambda1 -1 --obs " + (root_ / "obs").string() + " -o " +
                (root_ / "bad").string()),
            2);
}

TEST_F(Pipeline, EvaluateTruthAgainstItself) {
  const fs::path out = root_ / "eval_self";
  ASSERT_EQ(run(cfg() + " evaluate --truth " + (root_ / "truth").string() + " --est truth=" +
                (root_ / "truth").string() + " --held-out " + (root_ / "obs" / "tracks_held_out.csv").string() +
                " -o " + out.string()),
            0);
  const json r = read_json(out / "report.json");
  EXPECT_EQ(r["mu"].get<double>(), 0.0);
  EXPECT_EQ(r["sigma_t"].get<double>(), 0.0);
  EXPECT_TRUE(r["lambda_x_deg"]["at_grid_bound"].get<bool>());
  EXPECT_EQ(r["eddy_f1"].get<double>(), 1.0);
  EXPECT_NEAR(r["along_track_rmse"].get<double>(), 0.019, 0.004);
  for (const char* f : {"daily_rmse.csv", "spectrum_x.csv", "spectrum_t.csv", "eddies_truth.jsonl", "eddies_est.jsonl"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
}

TEST_F(Pipeline, EvaluateTracksOnlyAndComparison) {
  const fs::path est = root_ / "oi_cmp";
  ASSERT_EQ(run(cfg() + " reconstruct --obs " + (root_ / "obs").string() + " -o " + est.string()), 0);
  ASSERT_EQ(run(cfg() + " reconstruct --engine nearest --obs " + (root_ / "obs").string() + " -o " +
                (root_ / "near_cmp").string()),
            0);
  const std::string held = " --held-out " + (root_ / "obs" / "tracks_held_out.csv").string();

  ASSERT_EQ(run(cfg() + " evaluate --tracks-only --est " + est.string() + held + " -o " + (root_ / "ev_t").string()), 0);
  const json t = read_json(root_ / "ev_t" / "report.json");
  EXPECT_TRUE(t.contains("along_track_rmse"));
  EXPECT_FALSE(t.contains("mu"));
  EXPECT_EQ(run(cfg() + " evaluate --tracks-only --est " + est.string() + " -o " + (root_ / "ev_x").string()), 2);

  ASSERT_EQ(run(cfg() + " evaluate --truth " + (root_ / "truth").string() + " --est oi=" + est.string() +
                " --est nearest=" + (root_ / "near_cmp").string() + held + " -o " + (root_ / "ev_c").string()),
            0);
  std::istringstream csv(slurp(root_ / "ev_c" / "comparison.csv"));
  std::string line;
  std::size_t rows = 0;
  std::getline(csv, line);
  EXPECT_EQ(line, "engine,mu,sigma_t,lambda_x_deg,lambda_t_days,mu_u,mu_v,along_track_rmse,precision,recall,f1");
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 2u);
  EXPECT_TRUE(fs::exists(root_ / "ev_c" / "oi" / "report.json"));
  EXPECT_TRUE(fs::exists(root_ / "ev_c" / "nearest" / "report.json"));
}

TEST_F(Pipeline, ProfileAndDetectCommands) {
  ASSERT_EQ(run(cfg() + " profile-window --truth " + (root_ / "truth").string() + " --obs " +
                (root_ / "obs").string() + " -o " + (root_ / "prof").string()),
            0);
  const std::string p = slurp(root_ / "prof" / "profile.csv");
  EXPECT_EQ(p.substr(0, p.find('\n')), "offset,delay_days,rmse");
  EXPECT_EQ(std::count(p.begin(), p.end(), '\n'), 12);
  ASSERT_EQ(run(cfg() + " detect-eddies --ssh " + (root_ / "truth").string() + " -o " + (root_ / "det").string()), 0);
  EXPECT_TRUE(fs::exists(root_ / "det" / "eddies.jsonl"));
  EXPECT_TRUE(fs::exists(root_ / "det" / "eddy_counts.csv"));
}
