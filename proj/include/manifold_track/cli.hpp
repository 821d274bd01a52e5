#pragma once

// Experiment commands behind the command-line tool: simulate sensor data,
// run Monte-Carlo filter comparisons with optional sweeps, and turn summary
// tables into long-format plot data. All outputs are CSV.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "manifold_track/experiment.hpp"

namespace mtrack {

enum class SweepAxis { None, SigmaR, ImuRate };

inline std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::None: return "none";
    case SweepAxis::SigmaR: return "sigma_r";
    case SweepAxis::ImuRate: return "imu_rate";
  }
  return "?";
}

inline SweepAxis parse_sweep_axis(std::string_view name) {
  for (SweepAxis a : {SweepAxis::None, SweepAxis::SigmaR, SweepAxis::ImuRate}) {
    if (name == to_string(a)) return a;
  }
  throw InvalidArgument("unknown sweep axis '" + std::string(name) + "'");
}

struct ExperimentPlan {
  std::filesystem::path scenario_path;
  std::vector<FilterKind> filters{kAllFilterKinds.begin(), kAllFilterKinds.end()};
  SweepAxis sweep_axis = SweepAxis::None;
  std::vector<double> sweep_values;
  std::size_t trials = 1;
  std::optional<std::uint64_t> seed_base;  ///< defaults to the scenario seed
  std::filesystem::path out_dir = "out";
  unsigned threads = 0;  ///< 0: thread_count()

  void validate() const {
    if (trials < 1) throw InvalidArgument("trials must be >= 1");
    if (filters.empty()) throw InvalidArgument("at least one filter is required");
    if (sweep_axis == SweepAxis::None && !sweep_values.empty()) {
      throw InvalidArgument("sweep values given without a sweep axis");
    }
    if (sweep_axis != SweepAxis::None && sweep_values.empty()) {
      throw InvalidArgument("sweep axis given without values");
    }
    for (double v : sweep_values) {
      if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("sweep values must be positive");
    }
  }
};

/// 20 log10(1 / sigma).
inline double sigma_to_db(double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive for a dB value");
  return 20.0 * std::log10(1.0 / sigma);
}

inline double db_to_sigma(double db) { return std::pow(10.0, -db / 20.0); }

/// "0.1" is a standard deviation in metres; "20dB" is 1/sigma in dB.
inline double parse_sigma_token(const std::string& token) {
  std::string t = detail::trim(token);
  bool db = false;
  if (t.size() > 2) {
    std::string tail = t.substr(t.size() - 2);
    std::transform(tail.begin(), tail.end(), tail.begin(), [](unsigned char c) { return std::tolower(c); });
    if (tail == "db") {
      db = true;
      t = detail::trim(t.substr(0, t.size() - 2));
    }
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw InvalidArgument("invalid sigma value '" + token + "'");
  }
  if (used != t.size() || !std::isfinite(v)) throw InvalidArgument("invalid sigma value '" + token + "'");
  const double sigma = db ? db_to_sigma(v) : v;
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive: '" + token + "'");
  return sigma;
}

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Line-oriented CSV writer that reports the path on any I/O failure.
class CsvFile {
public:
  CsvFile(std::filesystem::path path, const std::string& header) : path_(std::move(path)) {
    out_.open(path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError(path_.string(), "cannot open for writing");
    out_ << header << '\n';
  }

  template <typename... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ",") << field(fields), first = false), ...);
    out_ << '\n';
  }

  void close() {
    out_.close();
    if (out_.fail()) throw IoError(path_.string(), "write failed");
  }

  const std::filesystem::path& path() const { return path_; }

private:
  static std::string field(double v) { return num(v); }
  static std::string field(const std::string& s) { return s; }
  static std::string field(std::string_view s) { return std::string(s); }
  static std::string field(const char* s) { return s; }
  template <typename Int, typename = std::enable_if_t<std::is_integral_v<Int>>>
  static std::string field(Int v) {
    return std::to_string(v);
  }

  std::filesystem::path path_;
  std::ofstream out_;
};

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError(dir.string(), "cannot create output directory");
  }
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Per-sweep-point scenario variants: (axis value, spec).
inline std::vector<std::pair<double, ScenarioSpec>> sweep_points(const ExperimentPlan& plan,
                                                                 const ScenarioSpec& base) {
  std::vector<std::pair<double, ScenarioSpec>> out;
  switch (plan.sweep_axis) {
    case SweepAxis::None:
      out.emplace_back(base.sigma_r, base);
      break;
    case SweepAxis::SigmaR:
      for (double v : plan.sweep_values) {
        ScenarioSpec s = base;
        s.sigma_r = v;
        out.emplace_back(v, s);
      }
      break;
    case SweepAxis::ImuRate:
      for (double v : plan.sweep_values) {
        ScenarioSpec s = base;
        s.imu_rate = v;
        s.validate();
        out.emplace_back(v, s);
      }
      break;
  }
  return out;
}

}  // namespace detail

inline constexpr const char* kSummaryHeader =
    "filter,sweep_axis,sweep_value,trials,rmse_pos_mean,rmse_pos_std,rmse_ori_mean,rmse_ori_std,"
    "p90_rmse_pos";
inline constexpr const char* kErrorsHeader =
    "filter,sweep_axis,sweep_value,trial,seed,rmse_pos,rmse_ori_deg";
inline constexpr const char* kEstimatesHeader =
    "filter,sweep_axis,sweep_value,trial,seed,step,t,px,py,pz,vx,vy,vz,"
    "r11,r12,r13,r21,r22,r23,r31,r32,r33,err_pos,err_ori_deg";
inline constexpr const char* kCdfHeader = "filter,sweep_axis,sweep_value,error_m,fraction";
inline constexpr const char* kPlotHeader =
    "series,x_axis,x,rmse_pos_mean,rmse_pos_std,rmse_ori_mean,rmse_ori_std";
inline constexpr const char* kTruthHeader =
    "step,t,px,py,pz,vx,vy,vz,ax,ay,az,r11,r12,r13,r21,r22,r23,r31,r32,r33,wx,wy,wz";
inline constexpr const char* kImuHeader = "step,t,wx,wy,wz,ax,ay,az";
inline constexpr const char* kRangesHeader = "step,t,beacon,bx,by,bz,s1,s2,s3";

/// Writes truth.csv once and imu.csv / ranges.csv under trial_NNNN/ per trial.
inline std::vector<std::filesystem::path> cmd_simulate(const ExperimentPlan& plan) {
  plan.validate();
  const ScenarioSpec spec = load_scenario(plan.scenario_path.string());
  const PreparedScenario sc = prepare_scenario(spec);
  const std::uint64_t seed_base = plan.seed_base.value_or(spec.seed);
  detail::ensure_dir(plan.out_dir);
  std::vector<std::filesystem::path> written;

  detail::CsvFile truth(plan.out_dir / "truth.csv", kTruthHeader);
  for (std::size_t k = 0; k < sc.truth.size(); ++k) {
    const TruthSample& s = sc.truth[k];
    const Mat3& r = s.r.matrix();
    truth.row(k, s.t, s.p.x(), s.p.y(), s.p.z(), s.v.x(), s.v.y(), s.v.z(), s.a_world.x(),
              s.a_world.y(), s.a_world.z(), r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2),
              r(2, 0), r(2, 1), r(2, 2), s.omega.x(), s.omega.y(), s.omega.z());
  }
  truth.close();
  written.push_back(truth.path());

  const double period = 1.0 / spec.imu_rate;
  for (std::size_t t = 0; t < plan.trials; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "trial_%04zu", t);
    const auto dir = plan.out_dir / name;
    detail::ensure_dir(dir);
    const TrialInputs in = simulate_trial(sc, seed_base + t);

    detail::CsvFile imu(dir / "imu.csv", kImuHeader);
    for (std::size_t k = 1; k <= in.stream.size(); ++k) {
      const InputVector& u = in.stream[k - 1].u;
      imu.row(k, (k - 1) * period, u.omega.x(), u.omega.y(), u.omega.z(), u.accel.x(),
              u.accel.y(), u.accel.z());
    }
    imu.close();
    written.push_back(imu.path());

    detail::CsvFile ranges(dir / "ranges.csv", kRangesHeader);
    for (std::size_t m = 0; m < in.ranges.size(); ++m) {
      const long step = in.range_steps[m];
      for (std::size_t j = 0; j < sc.beacons.size(); ++j) {
        const Vec3& b = sc.beacons[j];
        const auto row = static_cast<Eigen::Index>(j);
        ranges.row(step, step * period, j, b.x(), b.y(), b.z(), in.ranges[m].s(row, 0),
                   in.ranges[m].s(row, 1), in.ranges[m].s(row, 2));
      }
    }
    ranges.close();
    written.push_back(ranges.path());
  }
  return written;
}

/// Monte-Carlo comparison over the plan's filters and sweep points. Writes
/// summary.csv, errors.csv, cdf.csv and estimates.csv (first trial only).
inline std::vector<std::filesystem::path> cmd_run(const ExperimentPlan& plan) {
  plan.validate();
  const ScenarioSpec base = load_scenario(plan.scenario_path.string());
  const std::uint64_t seed_base = plan.seed_base.value_or(base.seed);
  const unsigned threads = plan.threads ? plan.threads : thread_count();
  detail::ensure_dir(plan.out_dir);

  detail::CsvFile summary(plan.out_dir / "summary.csv", kSummaryHeader);
  detail::CsvFile errors(plan.out_dir / "errors.csv", kErrorsHeader);
  detail::CsvFile cdf(plan.out_dir / "cdf.csv", kCdfHeader);
  detail::CsvFile estimates(plan.out_dir / "estimates.csv", kEstimatesHeader);
  const std::string axis(to_string(plan.sweep_axis));
  const std::size_t nf = plan.filters.size();

  for (const auto& [value, spec] : detail::sweep_points(plan, base)) {
    const PreparedScenario sc = prepare_scenario(spec);
    std::vector<std::vector<RunResult>> results(plan.trials, std::vector<RunResult>(nf));
    std::vector<std::vector<FilterState>> first_states(nf);
    parallel_for(plan.trials, threads, [&](std::size_t t) {
      const TrialInputs in = simulate_trial(sc, seed_base + t);
      for (std::size_t f = 0; f < nf; ++f) {
        TrialRun run = run_trial(sc, in, plan.filters[f]);
        results[t][f] = std::move(run.result);
        if (t == 0) first_states[f] = std::move(run.states);
      }
    });

    for (std::size_t f = 0; f < nf; ++f) {
      const std::string name(to_string(plan.filters[f]));
      std::vector<RunResult> mine;
      for (std::size_t t = 0; t < plan.trials; ++t) {
        const RunResult& r = results[t][f];
        errors.row(name, axis, value, t, r.seed, r.rmse_position(), r.rmse_orientation());
        mine.push_back(r);
      }
      const KindSummary s = aggregate_trials(mine).at(plan.filters[f]);
      summary.row(name, axis, value, s.trials, s.rmse_pos_mean, s.rmse_pos_std, s.rmse_ori_mean,
                  s.rmse_ori_std, s.p90_rmse_pos);
      for (std::size_t i = 0; i < s.cdf_grid.size(); ++i) {
        cdf.row(name, axis, value, s.cdf_grid[i], s.cdf[i]);
      }
      const RunResult& r0 = results[0][f];
      for (std::size_t k = 0; k < first_states[f].size(); ++k) {
        const StateVector& x = first_states[f][k].x;
        const Mat3 r = x.rotation_matrix();
        estimates.row(name, axis, value, 0, r0.seed, k, sc.truth[k].t, x.position().x(),
                      x.position().y(), x.position().z(), x.velocity().x(), x.velocity().y(),
                      x.velocity().z(), r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2),
                      r(2, 0), r(2, 1), r(2, 2), r0.position_error[k],
                      r0.orientation_error_deg[k]);
      }
    }
  }
  summary.close();
  errors.close();
  cdf.close();
  estimates.close();
  return {summary.path(), errors.path(), cdf.path(), estimates.path()};
}

struct SummaryRow {
  std::string filter;
  SweepAxis axis = SweepAxis::None;
  double sweep_value = 0.0;
  std::size_t trials = 0;
  double rmse_pos_mean = 0.0, rmse_pos_std = 0.0;
  double rmse_ori_mean = 0.0, rmse_ori_std = 0.0;
  double p90_rmse_pos = 0.0;
};

inline std::vector<SummaryRow> read_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open summary");
  const std::string src = path.string();
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(src, 1, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSummaryHeader) throw ParseError(src, 1, "unexpected header");
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 9) {
      throw ParseError(src, line_no, "expected 9 fields, got " + std::to_string(cells.size()));
    }
    SummaryRow r;
    try {
      r.filter = std::string(to_string(parse_filter_kind(cells[0])));
      r.axis = parse_sweep_axis(cells[1]);
    } catch (const InvalidArgument& e) {
      throw ParseError(src, line_no, e.what());
    }
    r.sweep_value = detail::parse_number(cells[2], src, line_no);
    const double trials = detail::parse_number(cells[3], src, line_no);
    if (trials < 1.0 || trials != std::floor(trials)) throw ParseError(src, line_no, "bad trial count");
    r.trials = static_cast<std::size_t>(trials);
    r.rmse_pos_mean = detail::parse_number(cells[4], src, line_no);
    r.rmse_pos_std = detail::parse_number(cells[5], src, line_no);
    r.rmse_ori_mean = detail::parse_number(cells[6], src, line_no);
    r.rmse_ori_std = detail::parse_number(cells[7], src, line_no);
    r.p90_rmse_pos = detail::parse_number(cells[8], src, line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Long-format plot table: x is 1/sigma_r in dB (sigma_r sweeps and unswept
/// runs) or the IMU rate in Hz. Rows are sorted by series, then x.
inline std::filesystem::path cmd_plotdata(const std::vector<std::filesystem::path>& summaries,
                                          const std::filesystem::path& out_dir) {
  if (summaries.empty()) throw InvalidArgument("plotdata: no summary files");
  struct PlotRow {
    std::string series, x_axis;
    double x;
    SummaryRow s;
  };
  std::vector<PlotRow> rows;
  for (const auto& path : summaries) {
    for (SummaryRow& s : read_summary(path)) {
      PlotRow p;
      p.series = s.filter;
      if (s.axis == SweepAxis::ImuRate) {
        p.x_axis = "imu_rate_hz";
        p.x = s.sweep_value;
      } else {
        p.x_axis = "inv_sigma_db";
        if (!(s.sweep_value > 0.0)) {
          throw ParseError(path.string(), 0, "sigma_r must be positive to express in dB");
        }
        p.x = sigma_to_db(s.sweep_value);
      }
      p.s = std::move(s);
      rows.push_back(std::move(p));
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const PlotRow& a, const PlotRow& b) {
    return std::tie(a.series, a.x_axis, a.x) < std::tie(b.series, b.x_axis, b.x);
  });
  detail::ensure_dir(out_dir);
  detail::CsvFile out(out_dir / "plot.csv", kPlotHeader);
  for (const auto& r : rows) {
    out.row(r.series, r.x_axis, r.x, r.s.rmse_pos_mean, r.s.rmse_pos_std, r.s.rmse_ori_mean,
            r.s.rmse_ori_std);
  }
  out.close();
  return out.path();
}

}  // namespace mtrack
