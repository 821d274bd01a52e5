#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "manifold_track/cli.hpp"

using namespace mtrack;
namespace fs = std::filesystem;

namespace {

const std::string kScenarioDir = MANIFOLD_TRACK_SCENARIO_DIR;

class TempDir {
public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("mtrack_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

ExperimentPlan plan_for(const std::string& scenario, const fs::path& out, std::size_t trials) {
  ExperimentPlan plan;
  plan.scenario_path = kScenarioDir + "/" + scenario + ".ini";
  plan.out_dir = out;
  plan.trials = trials;
  plan.threads = 1;
  return plan;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MANIFOLD_TRACK_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST(Cli, SigmaTokens) {
  EXPECT_DOUBLE_EQ(parse_sigma_token("0.25"), 0.25);
  EXPECT_NEAR(parse_sigma_token("20dB"), 0.1, 1e-15);
  EXPECT_NEAR(parse_sigma_token(" 40 dB "), 0.01, 1e-15);
  EXPECT_NEAR(sigma_to_db(0.1), 20.0, 1e-12);
  EXPECT_NEAR(db_to_sigma(sigma_to_db(0.37)), 0.37, 1e-14);
  EXPECT_THROW(parse_sigma_token("-1"), InvalidArgument);
  EXPECT_THROW(parse_sigma_token("abc"), InvalidArgument);
  EXPECT_THROW(parse_sigma_token("0.1m"), InvalidArgument);
}

TEST(Cli, PlanValidation) {
  ExperimentPlan plan;
  plan.sweep_values = {0.1};
  EXPECT_THROW(plan.validate(), InvalidArgument);
  plan.sweep_axis = SweepAxis::SigmaR;
  plan.sweep_values = {};
  EXPECT_THROW(plan.validate(), InvalidArgument);
  plan.sweep_values = {0.0};
  EXPECT_THROW(plan.validate(), InvalidArgument);
  plan.sweep_values = {0.1};
  plan.filters.clear();
  EXPECT_THROW(plan.validate(), InvalidArgument);
}

TEST(Cli, SimulateStaticWritesConstantTruth) {
  TempDir tmp;
  cmd_simulate(plan_for("static", tmp.path(), 1));
  const auto truth = lines(tmp.path() / "truth.csv");
  ASSERT_EQ(truth.size(), 102u);  // header + 101 samples
  EXPECT_EQ(truth[0], kTruthHeader);
  // Every row past the step and time columns is identical.
  const auto tail = [](const std::string& l) { return l.substr(l.find(',', l.find(',') + 1)); };
  for (std::size_t i = 2; i < truth.size(); ++i) EXPECT_EQ(tail(truth[i]), tail(truth[1]));
  EXPECT_TRUE(fs::exists(tmp.path() / "trial_0000" / "imu.csv"));
  EXPECT_TRUE(fs::exists(tmp.path() / "trial_0000" / "ranges.csv"));
}

TEST(Cli, SimulateUPath) {
  TempDir a, b;
  cmd_simulate(plan_for("upath", a.path(), 2));
  cmd_simulate(plan_for("upath", b.path(), 2));
  EXPECT_EQ(lines(a.path() / "truth.csv").size(), 102u);
  const auto imu = lines(a.path() / "trial_0001" / "imu.csv");
  EXPECT_EQ(imu.size(), 101u);
  EXPECT_EQ(imu[0], kImuHeader);
  // Ten fixes, eight beacons each.
  EXPECT_EQ(lines(a.path() / "trial_0000" / "ranges.csv").size(), 81u);
  for (const char* f : {"truth.csv", "trial_0000/imu.csv", "trial_0001/ranges.csv"}) {
    EXPECT_EQ(slurp(a.path() / f), slurp(b.path() / f)) << f;
  }
  EXPECT_NE(slurp(a.path() / "trial_0000" / "imu.csv"), slurp(a.path() / "trial_0001" / "imu.csv"));
}

TEST(Cli, RunIsReproducible) {
  TempDir a, b;
  ExperimentPlan pa = plan_for("zigzag", a.path(), 3);
  ExperimentPlan pb = plan_for("zigzag", b.path(), 3);
  pb.threads = 2;
  cmd_run(pa);
  cmd_run(pb);
  for (const char* f : {"summary.csv", "errors.csv", "cdf.csv", "estimates.csv"}) {
    EXPECT_EQ(slurp(a.path() / f), slurp(b.path() / f)) << f;
  }
  const auto summary = read_summary(a.path() / "summary.csv");
  ASSERT_EQ(summary.size(), 4u);
  for (const auto& r : summary) {
    EXPECT_EQ(r.trials, 3u);
    EXPECT_EQ(r.axis, SweepAxis::None);
    EXPECT_DOUBLE_EQ(r.sweep_value, 0.1);
    EXPECT_GT(r.rmse_pos_mean, 0.0);
  }
  EXPECT_EQ(lines(a.path() / "errors.csv").size(), 1u + 4u * 3u);
}

TEST(Cli, SigmaSweepRows) {
  TempDir tmp;
  ExperimentPlan plan = plan_for("zigzag", tmp.path(), 1);
  plan.filters = {FilterKind::EKF, FilterKind::EKFRie};
  plan.sweep_axis = SweepAxis::SigmaR;
  for (const char* t : {"0dB", "10dB", "20dB", "30dB"}) plan.sweep_values.push_back(parse_sigma_token(t));
  cmd_run(plan);
  const auto summary = read_summary(tmp.path() / "summary.csv");
  ASSERT_EQ(summary.size(), 8u);
  std::map<std::string, int> per_filter;
  for (const auto& r : summary) ++per_filter[r.filter];
  EXPECT_EQ(per_filter["EKF"], 4);
  EXPECT_EQ(per_filter["EKFRie"], 4);

  const fs::path plot = cmd_plotdata({tmp.path() / "summary.csv"}, tmp.path());
  const auto rows = lines(plot);
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_EQ(rows[0], kPlotHeader);
  // Sorted by series, then ascending dB.
  EXPECT_EQ(rows[1].rfind("EKF,inv_sigma_db,0,", 0), 0u) << rows[1];
  EXPECT_EQ(rows[4].rfind("EKF,inv_sigma_db,30,", 0), 0u) << rows[4];
  EXPECT_EQ(rows[5].rfind("EKFRie,inv_sigma_db,0,", 0), 0u) << rows[5];
}

TEST(Cli, PlotdataSingleRow) {
  TempDir tmp;
  write_file(tmp.path() / "s.csv", std::string(kSummaryHeader) +
                                       "\nUKF,imu_rate,100,5,0.1,0.01,1.5,0.2,0.12\n");
  const auto rows = lines(cmd_plotdata({tmp.path() / "s.csv"}, tmp.path()));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1], "UKF,imu_rate_hz,100,0.1,0.01,1.5,0.2");
}

TEST(Cli, PlotdataRejectsMalformedSummary) {
  TempDir tmp;
  write_file(tmp.path() / "bad.csv", std::string(kSummaryHeader) +
                                         "\nEKF,none,0.1,5,0.1,0.01,1.5,0.2,0.12\nEKF,none,0.1,5,x,0,0,0,0\n");
  try {
    cmd_plotdata({tmp.path() / "bad.csv"}, tmp.path());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  write_file(tmp.path() / "hdr.csv", "filter,value\n");
  EXPECT_THROW(read_summary(tmp.path() / "hdr.csv"), ParseError);
  write_file(tmp.path() / "short.csv", std::string(kSummaryHeader) + "\nEKF,none,0.1\n");
  EXPECT_THROW(read_summary(tmp.path() / "short.csv"), ParseError);
  EXPECT_THROW(read_summary(tmp.path() / "missing.csv"), IoError);
}

TEST(Cli, UnwritableOutputRaisesIoError) {
  TempDir tmp;
  write_file(tmp.path() / "blocker", "x");
  EXPECT_THROW(cmd_simulate(plan_for("static", tmp.path() / "blocker" / "sub", 1)), IoError);
}

TEST(Cli, BinaryExitCodes) {
  TempDir tmp;
  const std::string out = " --out " + tmp.path().string();
  EXPECT_EQ(run_cli("simulate --scenario " + kScenarioDir + "/static.ini" + out), 0);
  EXPECT_EQ(run_cli("run --scenario " + kScenarioDir + "/zigzag.ini --filters EKF,UKFRie --sweep-sigma 20dB,0.05" + out), 0);
  EXPECT_EQ(run_cli("plotdata " + (tmp.path() / "summary.csv").string() + out), 0);
  EXPECT_TRUE(fs::exists(tmp.path() / "plot.csv"));

  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("run"), 2);
  EXPECT_EQ(run_cli("run --scenario x.ini --sweep-sigma 0.1 --sweep-imu-rate 10"), 2);
  EXPECT_EQ(run_cli("run --scenario x.ini --filters KF"), 2);
  EXPECT_EQ(run_cli("run --scenario x.ini --sweep-sigma -3"), 2);
  EXPECT_EQ(run_cli("run --scenario /nonexistent.ini" + out), 1);
  write_file(tmp.path() / "bad.ini", "[path]\nkind = upath\nspeed = 3\n");
  EXPECT_EQ(run_cli("simulate --scenario " + (tmp.path() / "bad.ini").string() + out), 1);
}
