#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;  // stdout
  std::string err;  // stderr
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("twfe_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) const {
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string(TWFE_CLI_PATH) + " " + args + " 2>" + err.string();
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    char buf[4096];
    std::size_t got = 0;
    while ((got = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

const std::string kProbit = "--data " + twfe::testing::fixture("probit_dynamic.csv") +
                            " --family probit --index-form additive_fe --identification sum_equal --lag 1 --x x";

}  // namespace

TEST_F(Cli, TestCommandReportsSixStatistics) {
  const auto r = run("test " + kProbit + " --constraint rho=0 --objective both --kinds lr,lm,wald --out " +
                     (dir_ / "t").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(slurp(dir_ / "t" / "test.json"));
  ASSERT_EQ(j["tests"].size(), 6u);
  int corrected_lr = 0;
  for (const auto& t : j["tests"]) {
    EXPECT_TRUE(t["p_value"].is_number());
    EXPECT_EQ(t["df"], 1);
    if (t["objective"] == "corrected" && t["kind"] == "LR") {
      ++corrected_lr;
      EXPECT_GE(t["statistic"].get<double>(), 0.0);
    }
  }
  EXPECT_EQ(corrected_lr, 1);
  EXPECT_EQ(j["sanitize"]["dropped_units"].get<int>(), 11);
}

TEST_F(Cli, EstimateWritesEstimatesAndStandardErrors) {
  const auto r = run("estimate " + kProbit + " --out " + (dir_ / "e").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(slurp(dir_ / "e" / "estimate.json"));
  ASSERT_EQ(j["estimates"].size(), 2u);
  for (const auto& e : j["estimates"]) {
    EXPECT_TRUE(e["converged"].get<bool>());
    EXPECT_EQ(e["theta"].size(), 2u);
    EXPECT_GT(e["se"][0].get<double>(), 0.0);
  }
  EXPECT_TRUE(fs::exists(dir_ / "e" / "estimate_se.csv"));
}

TEST_F(Cli, SimulateIsByteIdenticalAcrossRunsAndThreads) {
  const std::string base = "simulate --design logit-ae-dynamic --n 20 --t 8 --reps 6 --tau 1 --seed 7 --out ";
  ASSERT_EQ(run(base + (dir_ / "a").string() + " --threads 1").code, 0);
  ASSERT_EQ(run(base + (dir_ / "b").string() + " --threads 8").code, 0);
  ASSERT_EQ(run(base + (dir_ / "c").string() + " --threads 1").code, 0);
  for (const char* f : {"rejections.csv", "estimators.csv", "replications.csv", "manifest.json"}) {
    const auto a = slurp(dir_ / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir_ / "b" / f)) << f;
    EXPECT_EQ(a, slurp(dir_ / "c" / f)) << f;
  }
  // 31 offsets for each of three objectives, plus the header.
  std::istringstream rows(slurp(dir_ / "a" / "rejections.csv"));
  int lines = 0;
  for (std::string l; std::getline(rows, l);) ++lines;
  EXPECT_EQ(lines, 1 + 31 * 3);
}

TEST_F(Cli, WritePanelRoundTrips) {
  const auto path = (dir_ / "panel.csv").string();
  ASSERT_EQ(run("simulate --design probit-ae-dynamic --n 12 --t 6 --seed 3 --write-panel " + path).code, 0);
  twfe::ColumnRoles roles;
  roles.x = {"x"};
  const auto d = twfe::ingest(path, roles, 1);
  EXPECT_EQ(d.n_units(), 12);
  EXPECT_EQ(d.n_periods(), 6);
  const auto [ref, truth] = twfe::generate(twfe::design_from_name("probit-ae-dynamic", 12, 6), 3);
  EXPECT_EQ(d.y, ref.y);
}

TEST_F(Cli, TauSweepAndDiagnoseWriteTables) {
  ASSERT_EQ(run("tau-sweep " + kProbit + " --tau 0,1,2 --constraint rho=0 --out " + (dir_ / "w").string()).code, 0);
  const auto j = json::parse(slurp(dir_ / "w" / "tau_sweep.json"));
  EXPECT_FALSE(j.empty());
  EXPECT_TRUE(fs::exists(dir_ / "w" / "tau_sweep_tests.csv"));
  ASSERT_EQ(run("diagnose --design probit-ae-dynamic --grid 10,20,30 --fixed-dim 20 --deltas 0 --out " +
                (dir_ / "d").string())
                .code,
            0);
  const auto summary = slurp(dir_ / "d" / "schur_summary.csv");
  EXPECT_EQ(summary.rfind("design,series,delta,est,sig", 0), 0u);
}

TEST_F(Cli, ConfigErrorsExitTwoWithJson) {
  auto r = run("estimate --data /nonexistent.csv --family probit");
  EXPECT_EQ(r.code, 2);
  auto e = json::parse(r.err);
  EXPECT_EQ(e["error"], "ConfigError");
  EXPECT_EQ(e["exit_code"], 2);

  r = run("estimate " + kProbit + " --tau 50");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["error"], "TauTooLarge");

  r = run("test " + kProbit + " --constraint beta=0");
  EXPECT_EQ(r.code, 2);

  r = run("estimate --bogus-flag");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["error"], "ConfigError");
}

TEST_F(Cli, NumericalFailureExitsThree) {
  // A unit whose effect loading is zero everywhere leaves its effect unidentified.
  const auto path = dir_ / "flat.csv";
  {
    std::ofstream out(path);
    out << "unit,time,y,u,v\n";
    for (int i = 1; i <= 4; ++i)
      for (int t = 1; t <= 4; ++t)
        out << i << ',' << t << ',' << (i * 7 + t * 3) % 5 * 0.3 << ',' << (i == 2 ? 0.0 : 1.0 + 0.1 * t) << ','
            << 1.0 + 0.2 * i << '\n';
  }
  const auto r = run("estimate --data " + path.string() +
                     " --family gaussian --index-form covariate_loaded_fe --identification none_needed --lag 1"
                     " --u u --v v");
  EXPECT_EQ(r.code, 3) << r.err;
  const auto e = json::parse(r.err);
  EXPECT_EQ(e["error"], "SingularHessian");
  EXPECT_EQ(e["exit_code"], 3);
}
