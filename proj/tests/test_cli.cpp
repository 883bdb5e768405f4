#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "cresp/cli.hpp"

namespace fs = std::filesystem;
using cresp::cli::read_file;

namespace {

int run(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "cresp_lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream log;
  const int code = cresp::cli::run(static_cast<int>(argv.size()), argv.data(), log);
  if (out) *out = log.str();
  return code;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cresp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

std::vector<std::string> quick_train(const std::string& out) {
  return {"train", "--steps", "30", "--kappa", "8", "--batch", "16", "--initial-steps", "100", "-o", out};
}

}  // namespace

TEST_F(Cli, GenGridworldReportsInjectivity) {
  std::string log;
  EXPECT_EQ(run({"gen", "--gridworld", "3x3", "--envs", "2", "--seed", "7", "-o", path("inst.json")}, &log), 0);
  EXPECT_NE(log.find("injectivity: ok"), std::string::npos);
  const auto inst = cresp::instance_from_json(nlohmann::json::parse(read_file(path("inst.json"))));
  EXPECT_EQ(inst.core.num_states, 9);
  EXPECT_EQ(inst.num_envs(), 2);
}

TEST_F(Cli, GenIsByteIdentical) {
  ASSERT_EQ(run({"gen", "--gridworld", "3x3", "--seed", "7", "-o", path("a.json")}), 0);
  ASSERT_EQ(run({"gen", "--gridworld", "3x3", "--seed", "7", "-o", path("b.json")}), 0);
  EXPECT_EQ(read_file(path("a.json")), read_file(path("b.json")));
  ASSERT_EQ(run({"gen", "--states", "5", "--seed", "3", "-o", path("c.json")}), 0);
  ASSERT_EQ(run({"gen", "--states", "5", "--seed", "3", "-o", path("d.json")}), 0);
  EXPECT_EQ(read_file(path("c.json")), read_file(path("d.json")));
}

TEST_F(Cli, GenInvalidSizeIsUsageError) {
  EXPECT_EQ(run({"gen", "--gridworld", "0x3", "-o", path("x.json")}), 2);
  EXPECT_EQ(run({"gen", "--gridworld", "three", "-o", path("x.json")}), 2);
  EXPECT_EQ(run({"gen", "--states", "0", "-o", path("x.json")}), 2);
  EXPECT_EQ(run({"gen"}), 2);  // -o is required
}

TEST_F(Cli, TrainWritesOneRowPerStep) {
  ASSERT_EQ(run(quick_train(path("run"))), 0);
  const std::string csv = read_file(path("run/metrics.csv"));
  EXPECT_EQ(csv.rfind("step,objective,loss,wall_ms\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 31);
  const auto ck = nlohmann::json::parse(read_file(path("run/checkpoint_final.json")));
  EXPECT_EQ(ck.at("format"), "cresp-checkpoint/1");
  EXPECT_EQ(ck.at("step"), 30);
  EXPECT_EQ(ck.at("config").at("train_envs"), nlohmann::json({0, 1}));
}

TEST_F(Cli, TrainIsByteIdentical) {
  ASSERT_EQ(run(quick_train(path("a"))), 0);
  ASSERT_EQ(run(quick_train(path("b"))), 0);
  EXPECT_EQ(read_file(path("a/metrics.csv")), read_file(path("b/metrics.csv")));
  EXPECT_EQ(read_file(path("a/checkpoint_final.json")), read_file(path("b/checkpoint_final.json")));
}

TEST_F(Cli, TrainErrors) {
  EXPECT_EQ(run({"train", "--objective", "bogus", "-o", path("r")}), 2);
  EXPECT_EQ(run({"train", "--instance", path("missing.json"), "-o", path("r")}), 2);
  EXPECT_EQ(run({"train", "--steps", "many"}), 2);
}

TEST_F(Cli, ConfigOverridesFlags) {
  cresp::cli::write_file(path("cfg.json"), R"({"steps": 12, "objective": "rp"})");
  auto args = quick_train(path("run"));
  args.push_back("--config");
  args.push_back(path("cfg.json"));
  ASSERT_EQ(run(args), 0);
  const std::string csv = read_file(path("run/metrics.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
  EXPECT_NE(csv.find(",rp,"), std::string::npos);
  cresp::cli::write_file(path("bad.json"), R"({"stepz": 12})");
  args.back() = path("bad.json");
  EXPECT_EQ(run(args), 2);
}

TEST_F(Cli, CheckpointPeriod) {
  auto args = quick_train(path("run"));
  args.insert(args.end(), {"--checkpoint-every", "10"});
  ASSERT_EQ(run(args), 0);
  for (int s : {10, 20, 30}) EXPECT_TRUE(fs::exists(path("run/checkpoint_" + std::to_string(s) + ".json")));
}

TEST_F(Cli, VerifyFaultExitsOneAndNamesCheck) {
  testing::internal::CaptureStderr();
  const int code = run({"verify", "--bound-sweep", "3", "--inject-fault", "cf-sign", "-o", path("v.json")});
  const std::string err = testing::internal::GetCapturedStderr();
  EXPECT_EQ(code, 1);
  EXPECT_NE(err.find("\"conjugate symmetry\""), std::string::npos);
  const auto rep = nlohmann::json::parse(read_file(path("v.json")));
  EXPECT_FALSE(rep.at("passed").get<bool>());
  EXPECT_EQ(run({"verify", "--inject-fault", "nonsense"}), 2);
}

TEST_F(Cli, VerifyPassesAndIsByteIdentical) {
  ASSERT_EQ(run({"verify", "--bound-sweep", "5", "-o", path("a.json")}), 0);
  ASSERT_EQ(run({"verify", "--bound-sweep", "5", "-o", path("b.json")}), 0);
  EXPECT_EQ(read_file(path("a.json")), read_file(path("b.json")));
}

TEST_F(Cli, ProbeReportAndComparison) {
  ASSERT_EQ(run(quick_train(path("c"))), 0);
  auto rdp = quick_train(path("r"));
  rdp.insert(rdp.end(), {"--objective", "rdp"});
  ASSERT_EQ(run(rdp), 0);
  ASSERT_EQ(run({"probe", "--checkpoint", path("c/checkpoint_final.json"), "--compare",
                 path("r/checkpoint_final.json"), "--samples", "300", "--epochs", "3", "--seeds", "3", "-o",
                 path("p")}),
            0);
  const auto rep = nlohmann::json::parse(read_file(path("p/probe.json")));
  EXPECT_TRUE(rep.contains("env_ce"));
  EXPECT_TRUE(rep.contains("state_ce"));
  EXPECT_EQ(rep.at("envs"), nlohmann::json({2, 3, 4}));
  EXPECT_EQ(rep.at("runs").size(), 2u);
  EXPECT_EQ(rep.at("runs")[0].at("seeds").size(), 3u);
  EXPECT_EQ(rep.at("ordering").at("seeds"), 3);
  const std::string csv = read_file(path("p/probe_curves.csv"));
  EXPECT_EQ(csv.rfind("checkpoint,seed,probe,epoch,ce\n", 0), 0u);
}

TEST_F(Cli, ProbeErrors) {
  EXPECT_EQ(run({"probe", "--checkpoint", path("missing.json")}), 2);
  ASSERT_EQ(run(quick_train(path("c"))), 0);
  ASSERT_EQ(run({"gen", "--states", "4", "-o", path("other.json")}), 0);
  EXPECT_EQ(run({"probe", "--instance", path("other.json"), "--checkpoint", path("c/checkpoint_final.json")}), 2);
}

TEST_F(Cli, HelpExitsZero) { EXPECT_EQ(run({"--help"}), 0); }

TEST(CliBinary, ExitCodes) {
  const std::string bin = CRESP_LAB_PATH;
  EXPECT_EQ(std::system((bin + " --help > /dev/null").c_str()), 0);
  const int code = std::system((bin + " train --objective bogus > /dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(code));
  EXPECT_EQ(WEXITSTATUS(code), 2);
}
