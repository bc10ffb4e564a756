#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "prime/cli.hpp"

namespace fs = std::filesystem;
using prime::cli::run;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("prime_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int call(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run(args, out_, err_);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string slurp(const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
  }
  static nlohmann::json first_record(const std::string& p) {
    std::ifstream is(p);
    std::string line;
    std::getline(is, line);
    return nlohmann::json::parse(line);
  }
  std::string small_video() {
    const std::string p = path("in.prmv");
    EXPECT_EQ(call({"gen-synthetic", "--output", p, "--frames", "2", "--width", "16", "--height", "16"}), 0);
    return p;
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(Cli, GenSyntheticDefaultSize) {
  const std::string p = path("syn.prmv");
  ASSERT_EQ(call({"gen-synthetic", "--seed", "1", "--output", p}), 0);
  EXPECT_EQ(fs::file_size(p), 32u + 4u * 64 * 64 * 3);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(call({}), 2);
  EXPECT_EQ(call({"frobnicate"}), 2);
  EXPECT_EQ(call({"protect", "--input", path("missing.prmv"), "--output", path("o")}), 2);
  EXPECT_NE(err_.str().find("missing.prmv"), std::string::npos);
  EXPECT_EQ(call({"gen-synthetic", "--output", path("x.prmv"), "--width", "10"}), 2);
  const std::string v = small_video();
  EXPECT_EQ(call({"protect", "--input", v, "--output", path("o"), "--epsilon", "5"}), 2);
  EXPECT_EQ(call({"protect", "--input", v, "--output", path("o"), "--mode", "glaze"}), 2);
  EXPECT_EQ(call({"protect", "--input", v, "--output", path("o"), "--target-dir", path("nodir")}), 2);
  EXPECT_EQ(call({"protect", "--input", v, "--output", path("o"), "--epsilon", "abc"}), 2);
}

TEST_F(Cli, HelpExitsZero) { EXPECT_EQ(call({"--help"}), 0); }

TEST_F(Cli, ProtectWritesVideoAndLog) {
  const std::string v = small_video();
  ASSERT_EQ(call({"protect", "--input", v, "--output", path("out"), "--steps", "10"}), 0) << err_.str();
  const auto prot = prime::read_frames(path("out/protected.prmv"));
  EXPECT_EQ(prot.size(), 2u);
  std::ifstream log(path("out/protect_log.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("target_index"));
    EXPECT_TRUE(j.contains("c_trace"));
    EXPECT_LE(j["steps_used"].get<int>(), 10);
    EXPECT_LE(j["max_abs_delta"].get<int>(), 8);
    ++lines;
  }
  EXPECT_EQ(lines, 2);
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
  const std::string v = small_video();
  std::ofstream(path("c.ini")) << "epsilon = 4\nsteps = 6\n";
  ASSERT_EQ(call({"protect", "--config", path("c.ini"), "--input", v, "--output", path("a")}), 0) << err_.str();
  ASSERT_EQ(call({"protect", "--config", path("c.ini"), "--input", v, "--output", path("b"), "--epsilon", "2"}), 0);
  const auto first = first_record(path("a/protect_log.jsonl"));
  const auto second = first_record(path("b/protect_log.jsonl"));
  EXPECT_EQ(first["max_abs_delta"].get<int>(), 4);
  EXPECT_EQ(second["max_abs_delta"].get<int>(), 2);
  EXPECT_LE(first["steps_used"].get<int>(), 6);
}

TEST_F(Cli, SeedFromEnvironment) {
  ::setenv("PRIME_SEED", "77", 1);
  ASSERT_EQ(call({"gen-synthetic", "--output", path("e.prmv")}), 0);
  ::unsetenv("PRIME_SEED");
  ASSERT_EQ(call({"gen-synthetic", "--output", path("f.prmv"), "--seed", "77"}), 0);
  EXPECT_EQ(slurp(path("e.prmv")), slurp(path("f.prmv")));
}

TEST_F(Cli, EvaluateReports) {
  const std::string v = small_video();
  ASSERT_EQ(call({"evaluate", "--input", v, "--reference", v, "--output", path("ev")}), 0) << err_.str();
  const std::string text = slurp(path("ev/report.txt"));
  EXPECT_NE(text.find("mean_psnr=100"), std::string::npos);
  EXPECT_NE(slurp(path("ev/report.tsv")).find("frame\tpsnr\tssim\tembed_sim"), std::string::npos);
  ASSERT_EQ(call({"gen-synthetic", "--output", path("three.prmv"), "--frames", "3", "--width", "16", "--height", "16"}), 0);
  EXPECT_EQ(call({"evaluate", "--input", v, "--reference", path("three.prmv"), "--output", path("ev2")}), 2);
}

TEST_F(Cli, CompareIsDeterministic) {
  const std::string v = small_video();
  const std::vector<std::string> base{"compare", "--input", v, "--steps", "5", "--queue-size", "4"};
  auto a = base, b = base;
  a.insert(a.end(), {"--output", path("c1")});
  b.insert(b.end(), {"--output", path("c2")});
  ASSERT_EQ(call(a), 0) << err_.str();
  const std::string out1 = out_.str();
  ASSERT_EQ(call(b), 0);
  EXPECT_EQ(out1, out_.str());
  for (const char* f : {"compare.tsv", "log_prime.jsonl", "log_photoguard_diffusion.jsonl",
                        "log_photoguard_encoder.jsonl"}) {
    EXPECT_EQ(slurp(path(std::string("c1/") + f)), slurp(path(std::string("c2/") + f))) << f;
  }
  std::istringstream table(slurp(path("c1/compare.tsv")));
  std::string line;
  int rows = 0;
  while (std::getline(table, line)) ++rows;
  EXPECT_EQ(rows, 4);  // header + one row per mode
}

TEST_F(Cli, TargetDirectoryQueue) {
  const std::string v = small_video();
  fs::create_directories(dir_ / "targets");
  ASSERT_EQ(call({"gen-synthetic", "--output", path("targets/t.prmv"), "--seed", "5", "--frames", "3", "--width",
                  "16", "--height", "16"}),
            0);
  ASSERT_EQ(call({"protect", "--input", v, "--output", path("o"), "--steps", "3", "--target-dir", path("targets")}), 0)
      << err_.str();
  ASSERT_EQ(call({"gen-synthetic", "--output", path("targets/big.prmv"), "--frames", "1"}), 0);
  EXPECT_EQ(call({"protect", "--input", v, "--output", path("o"), "--target-dir", path("targets")}), 2);
}

}  // namespace
