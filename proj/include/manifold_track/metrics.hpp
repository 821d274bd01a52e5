#pragma once

// Tracking error metrics: position RMSE, geodesic orientation RMSE, empirical
// error CDFs and Monte-Carlo aggregation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "manifold_track/filters.hpp"

namespace mtrack {

/// Geodesic distance on SO(3) in degrees: arccos((tr(A^T B) - 1) / 2).
inline double geodesic_angle_deg(const Rotation& a, const Rotation& b) {
  const double c = ((a.matrix().transpose() * b.matrix()).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

inline double rmse_position(const std::vector<Vec3>& estimate, const std::vector<Vec3>& truth) {
  if (estimate.size() != truth.size()) throw InvalidArgument("rmse_position: length mismatch");
  if (estimate.empty()) throw InvalidArgument("rmse_position: empty sequence");
  double acc = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) acc += (estimate[k] - truth[k]).squaredNorm();
  return std::sqrt(acc / static_cast<double>(truth.size()));
}

/// Orientation RMSE in degrees; every matrix must be a rotation.
inline double rmse_orientation(const std::vector<Mat3>& estimate, const std::vector<Mat3>& truth,
                               double tol = 1e-6) {
  if (estimate.size() != truth.size()) throw InvalidArgument("rmse_orientation: length mismatch");
  if (estimate.empty()) throw InvalidArgument("rmse_orientation: empty sequence");
  double acc = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double e = geodesic_angle_deg(Rotation(estimate[k], tol), Rotation(truth[k], tol));
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(truth.size()));
}

/// Empirical CDF of `errors` evaluated on a non-decreasing grid.
inline std::vector<double> error_cdf(const std::vector<double>& errors,
                                     const std::vector<double>& grid) {
  if (errors.empty()) throw InvalidArgument("error_cdf: no samples");
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw InvalidArgument("error_cdf: grid must be non-decreasing");
  }
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(grid.size());
  for (double g : grid) {
    const auto n = std::upper_bound(sorted.begin(), sorted.end(), g) - sorted.begin();
    out.push_back(static_cast<double>(n) / static_cast<double>(sorted.size()));
  }
  return out;
}

/// Smallest sample x with empirical CDF(x) >= q.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile: no samples");
  if (!(q > 0.0 && q <= 1.0)) throw InvalidArgument("percentile: q must be in (0, 1]");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-12));
  idx = std::clamp<std::size_t>(idx, 1, n);
  return values[idx - 1];
}

/// Per-step errors of one filter on one trial.
struct RunResult {
  FilterKind kind = FilterKind::EKF;
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::vector<double> position_error;         ///< m
  std::vector<double> orientation_error_deg;  ///< deg

  double rmse_position() const { return rms(position_error); }
  double rmse_orientation() const { return rms(orientation_error_deg); }

  static double rms(const std::vector<double>& e) {
    if (e.empty()) throw InvalidArgument("RunResult: no samples");
    double acc = 0.0;
    for (double x : e) acc += x * x;
    return std::sqrt(acc / static_cast<double>(e.size()));
  }
};

/// Scores a filter run against truth. Conventional filters may leave SO(3);
/// their orientation is scored at the nearest rotation.
inline RunResult score_run(FilterKind kind, const std::vector<FilterState>& states,
                           const std::vector<Vec3>& true_p, const std::vector<Rotation>& true_r) {
  if (states.size() != true_p.size() || states.size() != true_r.size()) {
    throw InvalidArgument("score_run: estimate and truth lengths differ");
  }
  RunResult out;
  out.kind = kind;
  out.position_error.reserve(states.size());
  out.orientation_error_deg.reserve(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    const Vec3 p = states[k].x.position();
    out.position_error.push_back((p - true_p[k]).norm());
    out.orientation_error_deg.push_back(
        geodesic_angle_deg(nearest_rotation(states[k].x.rotation_matrix()), true_r[k]));
  }
  return out;
}

struct KindSummary {
  FilterKind kind = FilterKind::EKF;
  std::size_t trials = 0;
  double rmse_pos_mean = 0.0;
  double rmse_pos_std = 0.0;  ///< population standard deviation over trials
  double rmse_ori_mean = 0.0;
  double rmse_ori_std = 0.0;
  double p90_rmse_pos = 0.0;  ///< 90th percentile of per-trial position RMSE
  std::vector<double> cdf_grid;
  std::vector<double> cdf;  ///< pooled per-step position errors
};

namespace detail {

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  sd = std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace detail

/// Groups results by filter kind. The CDF grid spans [0, max pooled error]
/// in `grid_points` steps.
inline std::map<FilterKind, KindSummary> aggregate_trials(const std::vector<RunResult>& results,
                                                          std::size_t grid_points = 101) {
  if (results.empty()) throw InvalidArgument("aggregate_trials: no results");
  if (grid_points < 2) throw InvalidArgument("aggregate_trials: grid needs two points");
  std::map<FilterKind, std::vector<const RunResult*>> groups;
  for (const auto& r : results) groups[r.kind].push_back(&r);

  std::map<FilterKind, KindSummary> out;
  for (const auto& [kind, runs] : groups) {
    KindSummary s;
    s.kind = kind;
    s.trials = runs.size();
    std::vector<double> pos, ori, pooled;
    for (const RunResult* r : runs) {
      pos.push_back(r->rmse_position());
      ori.push_back(r->rmse_orientation());
      pooled.insert(pooled.end(), r->position_error.begin(), r->position_error.end());
    }
    detail::mean_std(pos, s.rmse_pos_mean, s.rmse_pos_std);
    detail::mean_std(ori, s.rmse_ori_mean, s.rmse_ori_std);
    s.p90_rmse_pos = percentile(pos, 0.9);
    const double top = *std::max_element(pooled.begin(), pooled.end());
    for (std::size_t i = 0; i < grid_points; ++i) {
      s.cdf_grid.push_back(top * static_cast<double>(i) / static_cast<double>(grid_points - 1));
    }
    s.cdf = error_cdf(pooled, s.cdf_grid);
    out[kind] = std::move(s);
  }
  return out;
}

}  // namespace mtrack
