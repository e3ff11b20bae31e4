#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nmq/cli.hpp"

using namespace nmq;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = NMQ_CONFIG_DIR;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result nmq_run(std::vector<std::string> args) {
  args.insert(args.begin(), "nmq");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const fs::path& p) { return Json::parse(slurp(p)); }

std::map<std::string, std::string> directory(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = slurp(e.path());
  return files;
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / (std::string("nmq_cli_") + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path dir(const std::string& name) const { return root_ / name; }

  fs::path write_config(const std::string& name, const Json& doc) const {
    const fs::path p = root_ / name;
    std::ofstream(p) << doc.dump(2);
    return p;
  }

  fs::path root_;
};

}  // namespace

TEST_F(Cli, SimulateDistanceMeasureChain) {
  const auto sim = dir("sim"), td = dir("td"), me = dir("me");
  ASSERT_EQ(nmq_run({"--config", (kConfigs / "transmon.json").string(), "--out", sim.string(), "simulate"}).code, 0);
  ASSERT_TRUE(fs::exists(sim / "traj_1.csv") && fs::exists(sim / "traj_2.csv") && fs::exists(sim / "manifest.json"));
  ASSERT_EQ(nmq_run({"--out", td.string(), "distance", (sim / "traj_1.csv").string(), (sim / "traj_2.csv").string()}).code, 0);
  ASSERT_TRUE(fs::exists(td / "td_1-2.csv"));
  const auto r = nmq_run({"--out", me.string(), "measure", (td / "td_1-2.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(me / "measure.json");
  const ModelParams transmon(kTwoPi * 59.0, -kTwoPi * 37.0, kTwoPi * 219.0);
  EXPECT_NEAR(j["results"][0]["chi"].get<double>(), analytic_chi(transmon), 1e-3);
  EXPECT_EQ(j["results"][0]["rises"].get<int>(), 3);
}

TEST_F(Cli, SinglePointGridIsInputError) {
  Json doc = read_json(kConfigs / "transmon.json");
  doc["time_grid"]["n_points"] = 1;
  const auto r = nmq_run({"--config", write_config("bad.json", doc).string(), "--out", dir("o").string(), "simulate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("n_points"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir("o")));
}

TEST_F(Cli, MalformedCsvIsInputError) {
  const auto bad = root_ / "td_x.csv";
  std::ofstream(bad) << "t,D\n0,0.5\n1,0.4\n2,oops\n";
  const auto r = nmq_run({"--out", dir("o").string(), "measure", bad.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(bad.string() + ":4:3"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownFlagIsInputError) {
  EXPECT_EQ(nmq_run({"simulate", "--bogus"}).code, 2);
  EXPECT_EQ(nmq_run({}).code, 2);
}

TEST_F(Cli, TransmonPipelineRegularized) {
  const auto out = dir("reg");
  const auto r = nmq_run({"--config", (kConfigs / "transmon.json").string(), "--out", out.string(), "regularize"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(out / "regularize_summary.json");
  EXPECT_NEAR(j["results"][0]["chi_regularized"].get<double>(), 0.839, 0.01);
  EXPECT_TRUE(j["seed"].is_null());
  EXPECT_TRUE(j.contains("analysis") && j["analysis"].contains("s_grid"));
}

TEST_F(Cli, NoisyPipelineNearNoiseless) {
  const auto out = dir("pair");
  const auto r = nmq_run({"--config", (kConfigs / "ion_pair_noise.json").string(), "--out", out.string(), "regularize"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(out / "regularize_summary.json");
  EXPECT_EQ(j["seed"].get<int>(), 1);
  const auto& res = j["results"][0];
  ASSERT_FALSE(res["chi_regularized"].is_null());
  ASSERT_FALSE(res["noiseless"]["chi_regularized"].is_null());
  EXPECT_NEAR(res["chi_regularized"].get<double>() / res["noiseless"]["chi_regularized"].get<double>(), 1.0, 0.05);
  EXPECT_GT(res["chi_raw"].get<double>(), res["noiseless"]["chi_raw"].get<double>());
  EXPECT_TRUE(res["plateau"].contains("s_start"));
}

TEST_F(Cli, RerunsAreByteIdentical) {
  const auto cfg = (kConfigs / "ion_pair_noise.json").string();
  ASSERT_EQ(nmq_run({"--config", cfg, "--out", dir("a").string(), "--svg", "regularize"}).code, 0);
  ASSERT_EQ(nmq_run({"--config", cfg, "--out", dir("b").string(), "--svg", "regularize"}).code, 0);
  EXPECT_EQ(directory(dir("a")), directory(dir("b")));
  const auto other = nmq_run({"--config", cfg, "--seed", "2", "--out", dir("c").string(), "regularize"});
  ASSERT_EQ(other.code, 0);
  EXPECT_NE(slurp(dir("a") / "td_1-3.csv"), slurp(dir("c") / "td_1-3.csv"));
}

TEST_F(Cli, ManifestReproducesRun) {
  const auto cfg = (kConfigs / "ion_pair_noise.json").string();
  ASSERT_EQ(nmq_run({"--config", cfg, "--out", dir("a").string(), "regularize"}).code, 0);
  ASSERT_EQ(nmq_run({"--config", (dir("a") / "manifest.json").string(), "--out", dir("b").string(), "regularize"}).code, 0);
  EXPECT_EQ(directory(dir("a")), directory(dir("b")));

  ASSERT_EQ(nmq_run({"--config", (kConfigs / "transmon.json").string(), "--out", dir("s1").string(), "simulate"}).code, 0);
  ASSERT_EQ(nmq_run({"--config", (dir("s1") / "manifest.json").string(), "--out", dir("s2").string(), "simulate"}).code, 0);
  EXPECT_EQ(directory(dir("s1")), directory(dir("s2")));
}

TEST_F(Cli, ThreadCountDoesNotChangeArtifacts) {
  const auto cfg = (kConfigs / "ion_pair_noise.json").string();
  ASSERT_EQ(nmq_run({"--config", cfg, "--threads", "1", "--out", dir("t1").string(), "regularize"}).code, 0);
  ASSERT_EQ(nmq_run({"--config", cfg, "--threads", "8", "--out", dir("t8").string(), "regularize"}).code, 0);
  EXPECT_EQ(directory(dir("t1")), directory(dir("t8")));

  const auto traj = dir("sim");
  ASSERT_EQ(nmq_run({"--config", (kConfigs / "transmon.json").string(), "--out", traj.string(), "simulate"}).code, 0);
  const auto f = (traj / "traj_1.csv").string();
  ASSERT_EQ(nmq_run({"--threads", "1", "--seed", "9", "--out", dir("n1").string(), "noise", "--shots", "50", f}).code, 0);
  ASSERT_EQ(nmq_run({"--threads", "8", "--seed", "9", "--out", dir("n8").string(), "noise", "--shots", "50", f}).code, 0);
  EXPECT_EQ(directory(dir("n1")), directory(dir("n8")));
}

TEST_F(Cli, FockCheckAtColdTrapSetting) {
  Json doc = read_json(kConfigs / "ion.json");
  doc["fock_check"]["mean_phonons"] = Json::array({0.0, 0.02});
  const auto r = nmq_run({"--config", write_config("ion.json", doc).string(), "--out", dir("f").string(), "fock-check"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("qubit approximation valid"), std::string::npos);
  const auto j = read_json(dir("f") / "fock_check.json");
  EXPECT_TRUE(j["qubit_approximation_valid"].get<bool>());
  EXPECT_LT(j["max_excited"].get<double>(), 0.02);
}

TEST_F(Cli, TruncationOverflowIsNumericalError) {
  Json doc = read_json(kConfigs / "ion.json");
  doc["model"]["lamb_dicke"] = 0.6;
  doc["model"]["fock_cutoff"] = 2;
  doc["model"]["mean_phonons"] = 0.0;
  doc["time_grid"] = {{"t_end_us", 20}, {"n_points", 41}};
  const auto r = nmq_run({"--config", write_config("ion.json", doc).string(), "--out", dir("o").string(), "ion-simulate"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("TruncationOverflow"), std::string::npos) << r.err;
}

TEST_F(Cli, AllPairsFailingIsAnalysisError) {
  const auto flat = root_ / "td_flat.csv";
  std::ofstream(flat) << "t,D\n0,0.5\n1,0.5\n2,0.5\n3,0.5\n";
  const auto r = nmq_run({"--out", dir("o").string(), "sweep", flat.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("warning: flat"), std::string::npos) << r.err;
}

TEST_F(Cli, OutputDirectoryPrecedence) {
  Json doc = read_json(kConfigs / "transmon.json");
  doc["output_dir"] = dir("from_config").string();
  const auto cfg = write_config("t.json", doc).string();
  ASSERT_EQ(nmq_run({"--config", cfg, "simulate"}).code, 0);
  EXPECT_TRUE(fs::exists(dir("from_config") / "manifest.json"));
  ASSERT_EQ(nmq_run({"--config", cfg, "--out", dir("flag").string(), "simulate"}).code, 0);
  EXPECT_TRUE(fs::exists(dir("flag") / "manifest.json"));
}
