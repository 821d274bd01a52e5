#pragma once

// Ground-truth trajectories: a static case and four dynamic paths built from
// piecewise quintic Hermite segments (C2), with heading-aligned orientation.
// Also the key-value scenario file format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "manifold_track/kinematics.hpp"
#include "manifold_track/sensors.hpp"

namespace mtrack {

enum class PathKind { Static, UPath, Zigzag, Bridge, Stair };

inline std::string_view to_string(PathKind kind) {
  switch (kind) {
    case PathKind::Static: return "static";
    case PathKind::UPath: return "upath";
    case PathKind::Zigzag: return "zigzag";
    case PathKind::Bridge: return "bridge";
    case PathKind::Stair: return "stair";
  }
  return "?";
}

inline PathKind parse_path_kind(std::string_view name) {
  for (PathKind k : {PathKind::Static, PathKind::UPath, PathKind::Zigzag, PathKind::Bridge,
                     PathKind::Stair}) {
    if (name == to_string(k)) return k;
  }
  throw InvalidArgument("unknown path kind '" + std::string(name) + "'");
}

/// Nominal path durations (s): 10, 5, 5 and 85 for the dynamic paths.
inline double default_duration(PathKind kind) {
  switch (kind) {
    case PathKind::Static: return 10.0;
    case PathKind::UPath: return 10.0;
    case PathKind::Zigzag: return 5.0;
    case PathKind::Bridge: return 5.0;
    case PathKind::Stair: return 85.0;
  }
  return 10.0;
}

inline constexpr double kSpeedCap = 2.0;  // m/s

/// Built-in waypoint sets approximating the published path shapes. Exact
/// coordinates were never published; these match the durations and the
/// speed bound.
inline std::vector<Vec3> default_waypoints(PathKind kind) {
  std::vector<Vec3> w;
  switch (kind) {
    case PathKind::Static:
      w.emplace_back(1.0, 1.0, 1.0);
      break;
    case PathKind::UPath: {
      for (int i = 0; i <= 4; ++i) w.emplace_back(i, 0.0, 1.0);
      const double pi = std::numbers::pi;
      for (int i = 1; i <= 5; ++i) {
        const double a = -pi / 2.0 + i * pi / 6.0;
        w.emplace_back(4.0 + std::cos(a), 1.0 + std::sin(a), 1.0);
      }
      for (int i = 4; i >= 0; --i) w.emplace_back(i, 2.0, 1.0);
      break;
    }
    case PathKind::Zigzag:
      for (int i = 0; i <= 4; ++i) w.emplace_back(i, (i % 2) ? 1.0 : 0.0, 1.0);
      break;
    case PathKind::Bridge: {
      // Ramp up, cross the deck, ramp down: a raised arch in plan view.
      const double x[] = {0.0, 0.0, 0.4, 1.2, 2.2, 3.0, 3.4, 3.4};
      const double y[] = {0.0, 0.8, 1.5, 1.8, 1.8, 1.5, 0.8, 0.0};
      const double z[] = {1.0, 1.1, 1.3, 1.5, 1.5, 1.3, 1.1, 1.0};
      for (int i = 0; i < 8; ++i) w.emplace_back(x[i], y[i], z[i]);
      break;
    }
    case PathKind::Stair: {
      // Six switchback flights (4 m run, 1.5 m rise) joined by flat
      // half-turn landings of radius 0.75 m.
      const double run = 4.0, rise = 1.5, radius = 0.75;
      const double pi = std::numbers::pi;
      double z = 0.5;
      for (int flight = 0; flight < 6; ++flight) {
        const bool forward = flight % 2 == 0;
        const double y = forward ? 0.0 : 2.0 * radius;
        for (int s = 0; s <= 4; ++s) {
          if (flight > 0 && s == 0) continue;
          const double f = s / 4.0;
          w.emplace_back(forward ? f * run : run - f * run, y, z + f * rise);
        }
        z += rise;
        if (flight == 5) break;
        const double cx = forward ? run : 0.0;
        const double sgn = forward ? 1.0 : -1.0;
        for (int s = 1; s <= 5; ++s) {
          const double a = -pi / 2.0 + s * pi / 6.0;
          w.emplace_back(cx + sgn * radius * std::cos(a), radius + sgn * radius * std::sin(a), z);
        }
      }
      break;
    }
  }
  return w;
}

struct TruthSample {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a_world = Vec3::Zero();
  Rotation r;
  Vec3 omega = Vec3::Zero();  ///< body-frame angular rate
};

struct ScenarioSpec {
  PathKind kind = PathKind::UPath;
  double duration = 10.0;
  double imu_rate = 10.0;
  double ms_rate = 1.0;
  double sigma_r = 0.1;
  std::uint64_t seed = 1;
  TransmitterGeometry geometry;
  std::optional<BeaconMap> beacons;  ///< empty: corners of the inflated bounding box
  double beacon_inflate = 1.0;
  std::vector<Vec3> waypoints;  ///< empty: built-in set for `kind`
  LeverArm lever_arm;
  double gyro_density = 0.01;     ///< deg/s/sqrt(Hz)
  double accel_density = 300e-6;  ///< g/sqrt(Hz)

  static ScenarioSpec for_path(PathKind kind) {
    ScenarioSpec s;
    s.kind = kind;
    s.duration = default_duration(kind);
    return s;
  }

  std::vector<Vec3> effective_waypoints() const {
    return waypoints.empty() ? default_waypoints(kind) : waypoints;
  }

  long step_count() const { return std::lround(std::floor(duration * imu_rate + 1e-9)); }

  int ms_ratio() const {
    const double ratio = imu_rate / ms_rate;
    const long r = std::lround(ratio);
    if (r < 1 || std::abs(ratio - static_cast<double>(r)) > 1e-9) {
      throw InvalidArgument("imu rate must be an integer multiple of the measurement rate");
    }
    return static_cast<int>(r);
  }

  void validate() const {
    if (!(duration > 0.0)) throw InvalidArgument("scenario: duration must be positive");
    if (!(imu_rate > 0.0) || !(ms_rate > 0.0)) {
      throw InvalidArgument("scenario: rates must be positive");
    }
    if (imu_rate < ms_rate) throw InvalidArgument("scenario: imu rate below measurement rate");
    if (!(sigma_r >= 0.0)) throw InvalidArgument("scenario: sigma_r must be >= 0");
    (void)ms_ratio();
  }
};

namespace detail {

/// One axis-wise quintic Hermite segment on [t0, t0 + h].
struct QuinticSegment {
  double t0 = 0.0;
  double h = 1.0;
  std::array<Vec3, 6> c;  ///< coefficients in the normalized parameter s

  QuinticSegment(double start, double len, const Vec3& p0, const Vec3& v0, const Vec3& a0,
                 const Vec3& p1, const Vec3& v1, const Vec3& a1)
      : t0(start), h(len) {
    const Vec3 dp = p1 - p0;
    const Vec3 hv0 = h * v0, hv1 = h * v1;
    const Vec3 ha0 = h * h * a0, ha1 = h * h * a1;
    c[0] = p0;
    c[1] = hv0;
    c[2] = 0.5 * ha0;
    c[3] = 10.0 * dp - 6.0 * hv0 - 4.0 * hv1 - 1.5 * ha0 + 0.5 * ha1;
    c[4] = -15.0 * dp + 8.0 * hv0 + 7.0 * hv1 + 1.5 * ha0 - ha1;
    c[5] = 6.0 * dp - 3.0 * hv0 - 3.0 * hv1 - 0.5 * ha0 + 0.5 * ha1;
  }

  void eval(double t, Vec3& p, Vec3& v, Vec3& a) const {
    const double s = (t - t0) / h;
    p = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))));
    const Vec3 dp = c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * (4.0 * c[4] + s * 5.0 * c[5])));
    const Vec3 ddp = 2.0 * c[2] + s * (6.0 * c[3] + s * (12.0 * c[4] + s * 20.0 * c[5]));
    v = dp / h;
    a = ddp / (h * h);
  }
};

/// C2 path through waypoints: knot times proportional to chord length,
/// Catmull-Rom knot velocities, finite-difference knot accelerations.
class QuinticPath {
public:
  QuinticPath(const std::vector<Vec3>& w, double duration) {
    const std::size_t n = w.size();
    if (n < 2) throw InvalidArgument("path needs at least two waypoints");
    std::vector<double> t(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) t[i] = t[i - 1] + (w[i] - w[i - 1]).norm();
    if (!(t.back() > 0.0)) throw InvalidArgument("path has zero length");
    for (auto& ti : t) ti *= duration / t.back();
    for (std::size_t i = 1; i < n; ++i) {
      if (!(t[i] > t[i - 1])) throw InvalidArgument("repeated consecutive waypoints");
    }

    std::vector<Vec3> vel(n), acc(n, Vec3::Zero());
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i == 0 ? 0 : i - 1;
      const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
      vel[i] = (w[hi] - w[lo]) / (t[hi] - t[lo]);
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
      acc[i] = (vel[i + 1] - vel[i - 1]) / (t[i + 1] - t[i - 1]);
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
      segments_.emplace_back(t[i], t[i + 1] - t[i], w[i], vel[i], acc[i], w[i + 1], vel[i + 1],
                             acc[i + 1]);
    }
    end_ = t.back();
  }

  void eval(double t, Vec3& p, Vec3& v, Vec3& a) const {
    t = std::clamp(t, 0.0, end_);
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double x, const QuinticSegment& s) { return x < s.t0; });
    const QuinticSegment& seg = it == segments_.begin() ? segments_.front() : *std::prev(it);
    seg.eval(t, p, v, a);
  }

  bool is_knot(double t, double tol) const {
    for (const auto& s : segments_) {
      if (std::abs(t - s.t0) <= tol) return true;
    }
    return std::abs(t - end_) <= tol;
  }

private:
  std::vector<QuinticSegment> segments_;
  double end_ = 0.0;
};

inline Mat3 rot_z(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

inline Mat3 rot_y(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
}

/// Heading-aligned attitude R = Rz(yaw) Ry(pitch) and its body rate.
inline void heading_attitude(const Vec3& v, const Vec3& a, bool follow_slope, Mat3& r,
                             Vec3& omega) {
  const double vh2 = v.x() * v.x() + v.y() * v.y();
  if (vh2 < 1e-12) throw InvalidArgument("path stalls horizontally; heading undefined");
  const double vh = std::sqrt(vh2);
  const double yaw = std::atan2(v.y(), v.x());
  const double yaw_rate = (v.x() * a.y() - v.y() * a.x()) / vh2;
  double pitch = 0.0, pitch_rate = 0.0;
  if (follow_slope) {
    pitch = -std::atan2(v.z(), vh);
    const double vh_dot = (v.x() * a.x() + v.y() * a.y()) / vh;
    pitch_rate = -(vh * a.z() - v.z() * vh_dot) / (vh2 + v.z() * v.z());
  }
  const Mat3 ry = rot_y(pitch);
  r = rot_z(yaw) * ry;
  omega = yaw_rate * ry.transpose() * Vec3::UnitZ() + pitch_rate * Vec3::UnitY();
}

}  // namespace detail

/// Samples the ground truth at the IMU rate: step_count() + 1 samples.
inline std::vector<TruthSample> generate_truth(const ScenarioSpec& spec) {
  spec.validate();
  const long n = spec.step_count();
  const double period = 1.0 / spec.imu_rate;
  const auto waypoints = spec.effective_waypoints();
  std::vector<TruthSample> out;
  out.reserve(static_cast<std::size_t>(n + 1));

  if (spec.kind == PathKind::Static) {
    for (long k = 0; k <= n; ++k) {
      TruthSample s;
      s.t = k * period;
      s.p = waypoints.front();
      out.push_back(s);
    }
    return out;
  }

  const detail::QuinticPath path(waypoints, spec.duration);
  // Dense check of the speed bound, independent of the IMU rate.
  const int dense = 4000;
  for (int i = 0; i <= dense; ++i) {
    Vec3 p, v, a;
    path.eval(spec.duration * i / dense, p, v, a);
    if (v.norm() >= kSpeedCap) {
      throw InvalidArgument("path exceeds the 2 m/s speed cap for duration " +
                            std::to_string(spec.duration) + " s");
    }
  }
  const bool follow_slope = spec.kind == PathKind::Stair;
  for (long k = 0; k <= n; ++k) {
    TruthSample s;
    s.t = k * period;
    path.eval(s.t, s.p, s.v, s.a_world);
    Mat3 r;
    detail::heading_attitude(s.v, s.a_world, follow_slope, r, s.omega);
    s.r = Rotation(r, 1e-12);
    out.push_back(s);
  }
  return out;
}

/// Gravity-free body-frame acceleration R^T a_world.
inline Vec3 body_accel(const TruthSample& s) { return s.r.matrix().transpose() * s.a_world; }

/// World positions of the three transmitters for a truth sample.
inline std::array<Vec3, 3> transmitter_positions(const TruthSample& s,
                                                 const TransmitterGeometry& geom) {
  std::array<Vec3, 3> out;
  for (int i = 0; i < 3; ++i) {
    out[static_cast<std::size_t>(i)] = s.p + s.r.matrix() * geom.body_point(i);
  }
  return out;
}

/// Noise-free IMU reading u_{k-1} for step k (ZOH at the start of the interval).
struct ImuTruth {
  Vec3 omega = Vec3::Zero();
  Vec3 accel = Vec3::Zero();  ///< at the IMU location, body frame
};

struct MsTruth {
  long step = 0;
  std::array<Vec3, 3> transmitters;
};

struct Streams {
  std::vector<ImuTruth> imu;  ///< one per step, imu[k-1] drives step k
  std::vector<MsTruth> ms;    ///< steps k with k % ratio == 0
};

inline Streams emit_streams(const ScenarioSpec& spec, const std::vector<TruthSample>& truth) {
  spec.validate();
  const int ratio = spec.ms_ratio();
  if (truth.size() < 2) throw InvalidArgument("emit_streams: need at least two truth samples");
  const double period = 1.0 / spec.imu_rate;
  Streams out;
  const std::size_t steps = truth.size() - 1;
  out.imu.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const TruthSample& s = truth[k];
    const Vec3& omega_prev = k == 0 ? s.omega : truth[k - 1].omega;
    ImuTruth u;
    u.omega = s.omega;
    u.accel = accel_at_imu(body_accel(s), s.r.matrix(), s.omega, omega_prev, period,
                           spec.lever_arm);
    out.imu.push_back(u);
  }
  for (std::size_t k = 1; k <= steps; ++k) {
    if (k % static_cast<std::size_t>(ratio) == 0) {
      out.ms.push_back(MsTruth{static_cast<long>(k), transmitter_positions(truth[k], spec.geometry)});
    }
  }
  return out;
}

/// Beacon layout for a scenario: explicit, or the inflated bounding box of the path.
inline BeaconMap scenario_beacons(const ScenarioSpec& spec, const std::vector<TruthSample>& truth) {
  if (spec.beacons) return *spec.beacons;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& s : truth) {
    lo = lo.cwiseMin(s.p);
    hi = hi.cwiseMax(s.p);
  }
  return BeaconMap::box_corners(lo, hi, spec.beacon_inflate);
}

// ---------------------------------------------------------------------------
// Scenario file: INI-style sections [path] [rates] [noise] [geometry] [beacons].
// Vectors are "x y z"; lists of vectors are separated by ';'. '#' starts a comment.

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& v, const std::string& src, std::size_t line) {
  std::istringstream is(v);
  double d = 0.0;
  std::string rest;
  if (!(is >> d) || (is >> rest) || !std::isfinite(d)) {
    throw ParseError(src, line, "expected a number, got '" + v + "'");
  }
  return d;
}

inline Vec3 parse_vec3(const std::string& v, const std::string& src, std::size_t line) {
  std::string text = v;
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream is(text);
  Vec3 out;
  std::string rest;
  if (!(is >> out.x() >> out.y() >> out.z()) || (is >> rest) || !out.allFinite()) {
    throw ParseError(src, line, "expected three numbers, got '" + v + "'");
  }
  return out;
}

inline std::vector<Vec3> parse_vec3_list(const std::string& v, const std::string& src,
                                         std::size_t line) {
  std::vector<Vec3> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ';')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_vec3(item, src, line));
  }
  return out;
}

}  // namespace detail

inline constexpr int kScenarioFormatVersion = 1;

inline ScenarioSpec parse_scenario(std::istream& in, const std::string& source = "<scenario>") {
  using detail::trim;
  const std::map<std::string, std::set<std::string>> schema = {
      {"path", {"version", "kind", "duration", "seed", "waypoints"}},
      {"rates", {"imu", "ms"}},
      {"noise", {"sigma_r", "gyro_density", "accel_density"}},
      {"geometry", {"base", "altitude", "lever_arm"}},
      {"beacons", {"inflate", "positions"}},
  };
  std::map<std::string, std::pair<std::string, std::size_t>> values;
  std::string section;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(source, line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!schema.count(section)) throw ParseError(source, line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected key = value");
    if (section.empty()) throw ParseError(source, line_no, "key outside of a section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!schema.at(section).count(key)) {
      throw ParseError(source, line_no, "unknown key '" + key + "' in [" + section + "]");
    }
    const std::string full = section + "." + key;
    if (values.count(full)) throw ParseError(source, line_no, "duplicate key '" + key + "'");
    values[full] = {value, line_no};
  }

  const auto get = [&](const std::string& k) -> const std::pair<std::string, std::size_t>* {
    auto it = values.find(k);
    return it == values.end() ? nullptr : &it->second;
  };
  const auto number = [&](const std::string& k, double fallback) {
    const auto* v = get(k);
    return v ? detail::parse_number(v->first, source, v->second) : fallback;
  };

  ScenarioSpec spec;
  if (const auto* v = get("path.version")) {
    if (detail::parse_number(v->first, source, v->second) != kScenarioFormatVersion) {
      throw ParseError(source, v->second, "unsupported scenario version '" + v->first + "'");
    }
  }
  const auto* kind = get("path.kind");
  if (!kind) throw ParseError(source, line_no, "missing required key path.kind");
  try {
    spec.kind = parse_path_kind(kind->first);
  } catch (const InvalidArgument& e) {
    throw ParseError(source, kind->second, e.what());
  }
  spec.duration = number("path.duration", default_duration(spec.kind));
  if (const auto* v = get("path.seed")) {
    const double s = detail::parse_number(v->first, source, v->second);
    if (s < 0.0 || s != std::floor(s)) throw ParseError(source, v->second, "seed must be a non-negative integer");
    spec.seed = static_cast<std::uint64_t>(s);
  }
  if (const auto* v = get("path.waypoints")) {
    spec.waypoints = detail::parse_vec3_list(v->first, source, v->second);
  }
  spec.imu_rate = number("rates.imu", spec.imu_rate);
  spec.ms_rate = number("rates.ms", spec.ms_rate);
  spec.sigma_r = number("noise.sigma_r", spec.sigma_r);
  spec.gyro_density = number("noise.gyro_density", spec.gyro_density);
  spec.accel_density = number("noise.accel_density", spec.accel_density);
  spec.geometry = TransmitterGeometry(number("geometry.base", spec.geometry.base()),
                                      number("geometry.altitude", spec.geometry.altitude()));
  if (const auto* v = get("geometry.lever_arm")) {
    spec.lever_arm.z = detail::parse_vec3(v->first, source, v->second);
  }
  spec.beacon_inflate = number("beacons.inflate", spec.beacon_inflate);
  if (const auto* v = get("beacons.positions")) {
    try {
      spec.beacons = BeaconMap(detail::parse_vec3_list(v->first, source, v->second));
    } catch (const InvalidArgument& e) {
      throw ParseError(source, v->second, e.what());
    }
  }
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(source, line_no, e.what());
  }
  return spec;
}

inline ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open scenario file");
  return parse_scenario(in, path);
}

}  // namespace mtrack
