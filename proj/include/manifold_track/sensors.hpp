#pragma once

// Synthetic IMU and range sensors, IMU lever-arm transfer to the centroid,
// and Gauss-Newton multilateration of the three transmitters.

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "manifold_track/kinematics.hpp"

namespace mtrack {

inline constexpr double kStandardGravity = 9.8;

using RangeMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// Anchor positions in the global frame. At least four, not coplanar.
class BeaconMap {
public:
  explicit BeaconMap(std::vector<Vec3> positions) : positions_(std::move(positions)) {
    if (positions_.size() < 4) throw InvalidArgument("beacon map needs at least 4 beacons");
    Vec3 mean = Vec3::Zero();
    for (const auto& b : positions_) {
      if (!b.allFinite()) throw InvalidArgument("beacon map: non-finite position");
      mean += b;
    }
    mean /= static_cast<double>(positions_.size());
    Eigen::MatrixXd centered(3, static_cast<Eigen::Index>(positions_.size()));
    for (std::size_t j = 0; j < positions_.size(); ++j) {
      centered.col(static_cast<Eigen::Index>(j)) = positions_[j] - mean;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    const auto& sv = svd.singularValues();
    if (sv(2) <= 1e-9 * std::max(sv(0), 1.0)) {
      throw InvalidArgument("beacon map: beacons are coplanar");
    }
  }

  /// Eight beacons on the corners of [lo, hi] grown by `inflate` on every side.
  static BeaconMap box_corners(const Vec3& lo, const Vec3& hi, double inflate) {
    const Vec3 a = lo - Vec3::Constant(inflate);
    const Vec3 b = hi + Vec3::Constant(inflate);
    std::vector<Vec3> corners;
    for (int i = 0; i < 8; ++i) {
      corners.emplace_back((i & 1) ? b.x() : a.x(), (i & 2) ? b.y() : a.y(),
                           (i & 4) ? b.z() : a.z());
    }
    return BeaconMap(std::move(corners));
  }

  std::size_t size() const noexcept { return positions_.size(); }
  const Vec3& operator[](std::size_t j) const { return positions_[j]; }
  const std::vector<Vec3>& positions() const noexcept { return positions_; }

private:
  std::vector<Vec3> positions_;
};

/// Noisy transmitter-to-beacon distances: row j = beacon, column i = transmitter.
struct RangeSet {
  RangeMatrix s;
  double sigma_s2 = 0.0;
};

/// IMU position minus centroid, in the body frame.
struct LeverArm {
  Vec3 z = Vec3::Zero();

  bool is_zero() const { return z.isZero(0.0); }
};

/// Gyro and accelerometer white-noise variances derived from datasheet
/// noise densities.
struct ImuNoise {
  double gyro_var_deg2 = 0.0;  ///< (deg/s)^2
  double accel_var = 0.0;      ///< (m/s^2)^2

  double gyro_var_rad2() const {
    constexpr double k = std::numbers::pi / 180.0;
    return gyro_var_deg2 * k * k;
  }

  /// Diagonal 6x6 input covariance in filter units (rad/s, m/s^2).
  Mat6 input_covariance() const {
    Vec6 d;
    d << Vec3::Constant(gyro_var_rad2()), Vec3::Constant(accel_var);
    return d.asDiagonal();
  }
};

/// sigma_w^2 = density_gyro^2 * fs/2 and sigma_a^2 = (density_accel * 9.8)^2 * fs/2.
/// Gyro density in deg/s/sqrt(Hz), accelerometer density in g/sqrt(Hz).
inline ImuNoise imu_variance_from_datasheet(double density_gyro, double density_accel,
                                            double sample_rate) {
  if (!(sample_rate > 0.0)) throw InvalidArgument("sample rate must be positive");
  const double half_band = sample_rate / 2.0;
  const double accel_density_si = density_accel * kStandardGravity;
  return ImuNoise{density_gyro * density_gyro * half_band,
                  accel_density_si * accel_density_si * half_band};
}

template <typename Rng>
InputVector simulate_imu(const Vec3& true_omega, const Vec3& true_accel_body, const Mat6& q,
                         Rng& rng) {
  if (!q.isDiagonal(0.0)) throw InvalidArgument("simulate_imu: covariance must be diagonal");
  if ((q.diagonal().array() < 0.0).any()) {
    throw InvalidArgument("simulate_imu: negative variance");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec6 u;
  u << true_omega, true_accel_body;
  for (int i = 0; i < 6; ++i) {
    const double sd = std::sqrt(q(i, i));
    if (sd > 0.0) u(i) += sd * normal(rng);
  }
  return InputVector{u.head<3>(), u.tail<3>()};
}

/// Lever-arm correction term (R Omega^2 + R alpha) z with alpha the
/// finite-difference angular acceleration (hat(w) - hat(w_prev)) / T.
inline Vec3 lever_arm_term(const Mat3& r, const Vec3& omega, const Vec3& omega_prev,
                           double period, const LeverArm& lever) {
  if (!(period > 0.0)) throw InvalidArgument("lever arm: period must be positive");
  const Mat3 w = hat_matrix(omega);
  const Mat3 alpha = (w - hat_matrix(omega_prev)) / period;
  return (r * w * w + r * alpha) * lever.z;
}

/// Acceleration at the centroid from the reading at an offset IMU.
inline Vec3 accel_to_centroid(const Vec3& a_imu, const Mat3& r, const Vec3& omega,
                              const Vec3& omega_prev, double period, const LeverArm& lever) {
  return a_imu - lever_arm_term(r, omega, omega_prev, period, lever);
}

/// Forward model: what an offset IMU reads for centroid acceleration a_c.
inline Vec3 accel_at_imu(const Vec3& a_c, const Mat3& r, const Vec3& omega,
                         const Vec3& omega_prev, double period, const LeverArm& lever) {
  return a_c + lever_arm_term(r, omega, omega_prev, period, lever);
}

namespace detail {

/// Var(xy) for independent x, y.
inline double product_variance(double mean_x, double var_x, double mean_y, double var_y) {
  return var_x * var_y + var_x * mean_y * mean_y + var_y * mean_x * mean_x;
}

/// sum_k z_k^2 sum_j Var(r_ij m_jk), per row i, for independent R and M.
inline Vec3 rotated_lever_variance(const Mat3& r_mean, const Mat3& r_var, const Mat3& m_mean,
                                   const Mat3& m_var, const Vec3& z) {
  Vec3 out = Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      double inner = 0.0;
      for (int j = 0; j < 3; ++j) {
        inner += product_variance(r_mean(i, j), r_var(i, j), m_mean(j, k), m_var(j, k));
      }
      out(i) += z(k) * z(k) * inner;
    }
  }
  return out;
}

}  // namespace detail

/// Per-axis variance of the centroid acceleration:
///   Var(a_imu) + Var(R Omega^2 z) + Var(R dOmega z / T)
/// with R entries, rate components and dOmega = Omega - Omega_prev treated as
/// independent. var_r is the column-major diagonal of the orientation
/// covariance; var_w is the per-axis gyro variance (dOmega entries get 2 var_w).
inline Vec3 accel_variance_to_centroid(const Vec3& var_a_imu, const Mat3& r, const Vec9& var_r,
                                       const Vec3& omega, const Vec3& omega_prev, double var_w,
                                       double period, const LeverArm& lever) {
  if (!(period > 0.0)) throw InvalidArgument("accel variance: period must be positive");
  if ((var_a_imu.array() < 0.0).any() || (var_r.array() < 0.0).any() || var_w < 0.0) {
    throw InvalidArgument("accel variance: variances must be non-negative");
  }
  if (lever.is_zero()) return var_a_imu;

  const Mat3 r_var = unvec(var_r);

  // Omega^2: diagonal -w_a^2 - w_b^2, off-diagonal w_j w_k.
  Vec3 sq_mean, sq_var;
  for (int i = 0; i < 3; ++i) {
    sq_mean(i) = var_w + omega(i) * omega(i);
    sq_var(i) = 2.0 * var_w * var_w + 4.0 * omega(i) * omega(i) * var_w;
  }
  Mat3 w2_mean, w2_var;
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 3; ++k) {
      if (j == k) {
        const int a = (j + 1) % 3;
        const int b = (j + 2) % 3;
        w2_mean(j, k) = -sq_mean(a) - sq_mean(b);
        w2_var(j, k) = sq_var(a) + sq_var(b);
      } else {
        w2_mean(j, k) = omega(j) * omega(k);
        w2_var(j, k) = detail::product_variance(omega(j), var_w, omega(k), var_w);
      }
    }
  }

  const Mat3 dw_mean = hat_matrix(omega - omega_prev);
  Mat3 dw_var = Mat3::Constant(2.0 * var_w);
  dw_var.diagonal().setZero();

  const Vec3 centripetal = detail::rotated_lever_variance(r, r_var, w2_mean, w2_var, lever.z);
  const Vec3 angular = detail::rotated_lever_variance(r, r_var, dw_mean, dw_var, lever.z) /
                       (period * period);
  return var_a_imu + centripetal + angular;
}

/// s_ij = ||p_i - b_j|| + n, n ~ N(0, sigma_s^2), clamped at zero.
template <typename Rng>
RangeSet simulate_ranges(const std::array<Vec3, 3>& tx_positions, const BeaconMap& beacons,
                         double sigma_s, Rng& rng) {
  if (!(sigma_s >= 0.0)) throw InvalidArgument("simulate_ranges: sigma_s must be >= 0");
  std::normal_distribution<double> normal(0.0, 1.0);
  RangeSet out;
  out.sigma_s2 = sigma_s * sigma_s;
  out.s.resize(static_cast<Eigen::Index>(beacons.size()), 3);
  for (std::size_t j = 0; j < beacons.size(); ++j) {
    for (int i = 0; i < 3; ++i) {
      double d = (tx_positions[static_cast<std::size_t>(i)] - beacons[j]).norm();
      if (sigma_s > 0.0) d += sigma_s * normal(rng);
      out.s(static_cast<Eigen::Index>(j), i) = std::max(d, 0.0);
    }
  }
  return out;
}

struct MultilaterationResult {
  Vec9 y = Vec9::Zero();
  bool converged = false;
  std::array<int, 3> iterations{};
};

/// Gauss-Newton on f_j(p) = ||p - b_j|| - s_j for one transmitter. Levenberg
/// damping is added only when the normal equations are ill-conditioned.
inline Vec3 gauss_newton_point(const std::vector<Vec3>& beacons, const Eigen::VectorXd& ranges,
                               const Vec3& init, bool& converged, int& iterations) {
  constexpr int kMaxIterations = 50;
  constexpr double kStepTolerance = 1e-10;
  const auto m = static_cast<Eigen::Index>(beacons.size());

  const auto cost = [&](const Vec3& p) {
    double c = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double f = (p - beacons[static_cast<std::size_t>(j)]).norm() - ranges(j);
      c += f * f;
    }
    return c;
  };

  Vec3 p = init;
  Vec3 best = p;
  double best_cost = cost(p);
  converged = false;
  iterations = 0;
  Eigen::MatrixXd jac(m, 3);
  Eigen::VectorXd res(m);
  for (int it = 1; it <= kMaxIterations; ++it) {
    iterations = it;
    for (Eigen::Index j = 0; j < m; ++j) {
      const Vec3 d = p - beacons[static_cast<std::size_t>(j)];
      const double n = d.norm();
      res(j) = n - ranges(j);
      if (n > 1e-12) {
        jac.row(j) = (d / n).transpose();
      } else {
        jac.row(j).setZero();
      }
    }
    Mat3 normal = jac.transpose() * jac;
    const Vec3 grad = jac.transpose() * res;
    Eigen::SelfAdjointEigenSolver<Mat3> es(normal, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().maxCoeff();
    const double lmin = es.eigenvalues().minCoeff();
    if (!(lmax > 0.0) || lmin < 1e-12 * lmax) {
      const double lambda = std::max(1e-6 * normal.trace() / 3.0, 1e-12);
      normal += lambda * Mat3::Identity();
    }
    const Vec3 step = -normal.ldlt().solve(grad);
    if (!step.allFinite()) break;
    p += step;
    const double c = cost(p);
    if (c < best_cost) {
      best_cost = c;
      best = p;
    }
    if (step.norm() < kStepTolerance) {
      converged = true;
      return p;
    }
  }
  return best;
}

/// Per-transmitter Gauss-Newton least squares; returns the stacked
/// transmitter positions y_ms.
inline MultilaterationResult multilaterate(const RangeSet& ranges, const BeaconMap& beacons,
                                           const std::array<Vec3, 3>& init) {
  if (ranges.s.rows() != static_cast<Eigen::Index>(beacons.size())) {
    throw InvalidArgument("multilaterate: range rows must match beacon count");
  }
  MultilaterationResult out;
  out.converged = true;
  for (int i = 0; i < 3; ++i) {
    bool ok = false;
    int its = 0;
    const Eigen::VectorXd col = ranges.s.col(i);
    out.y.segment<3>(3 * i) =
        gauss_newton_point(beacons.positions(), col, init[static_cast<std::size_t>(i)], ok, its);
    out.converged = out.converged && ok;
    out.iterations[static_cast<std::size_t>(i)] = its;
  }
  return out;
}

}  // namespace mtrack
