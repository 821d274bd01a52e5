// Command-line front end: simulate | run | plotdata.
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "manifold_track/cli.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

std::vector<mtrack::FilterKind> parse_filters(const std::vector<std::string>& names) {
  std::vector<mtrack::FilterKind> out;
  for (const auto& n : names) out.push_back(mtrack::parse_filter_kind(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte-Carlo tracking experiments with EKF, UKF, EKFRie and UKFRie"};
  app.require_subcommand(1);

  std::string scenario;
  std::string out_dir = "out";
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> filter_names;
  std::vector<std::string> sweep_sigma;
  std::vector<double> sweep_rate;
  std::vector<std::string> summaries;

  auto* sim = app.add_subcommand("simulate", "write truth, IMU and range CSVs");
  sim->add_option("--scenario", scenario, "scenario file")->required();
  sim->add_option("--trials", trials, "number of noise realizations")->check(CLI::PositiveNumber);
  auto* sim_seed = sim->add_option("--seed", seed, "seed of trial 0 (default: scenario seed)");
  sim->add_option("--out", out_dir, "output directory");

  auto* run = app.add_subcommand("run", "Monte-Carlo filter comparison");
  run->add_option("--scenario", scenario, "scenario file")->required();
  run->add_option("--filters", filter_names, "EKF,UKF,EKFRie,UKFRie (default: all)")
      ->delimiter(',');
  run->add_option("--trials", trials, "Monte-Carlo trials per sweep point")
      ->check(CLI::PositiveNumber);
  auto* run_seed = run->add_option("--seed", seed, "seed of trial 0 (default: scenario seed)");
  auto* by_sigma = run->add_option("--sweep-sigma", sweep_sigma,
                                   "sigma_r values in m, or 1/sigma_r with a dB suffix")
                       ->delimiter(',');
  auto* by_rate = run->add_option("--sweep-imu-rate", sweep_rate, "IMU rates in Hz")
                      ->delimiter(',');
  by_sigma->excludes(by_rate);
  run->add_option("--out", out_dir, "output directory");

  auto* plot = app.add_subcommand("plotdata", "long-format plot tables from summary.csv files");
  plot->add_option("summaries", summaries, "summary.csv files")->required();
  plot->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  mtrack::ExperimentPlan plan;
  try {
    plan.scenario_path = scenario;
    plan.out_dir = out_dir;
    plan.trials = trials;
    if (!filter_names.empty()) plan.filters = parse_filters(filter_names);
    if (!sweep_sigma.empty()) {
      plan.sweep_axis = mtrack::SweepAxis::SigmaR;
      for (const auto& s : sweep_sigma) plan.sweep_values.push_back(mtrack::parse_sigma_token(s));
    } else if (!sweep_rate.empty()) {
      plan.sweep_axis = mtrack::SweepAxis::ImuRate;
      plan.sweep_values = sweep_rate;
    }
    if ((*sim && sim_seed->count()) || (*run && run_seed->count())) plan.seed_base = seed;
    plan.validate();
  } catch (const mtrack::InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsageError;
  }

  try {
    std::vector<std::filesystem::path> written;
    if (*sim) {
      written = mtrack::cmd_simulate(plan);
    } else if (*run) {
      written = mtrack::cmd_run(plan);
    } else {
      std::vector<std::filesystem::path> paths(summaries.begin(), summaries.end());
      written.push_back(mtrack::cmd_plotdata(paths, plan.out_dir));
    }
    for (const auto& p : written) std::printf("%s\n", p.string().c_str());
  } catch (const mtrack::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return 0;
}
