#pragma once

// Continuous/discrete state-space model of the tracked body: the 15-state
// [vec(R); p_c; v_c], the ZOH-discretized transition F and input matrix g(X),
// and the transmitter measurement function h(X) with its Jacobian.

#include <array>

#include "manifold_track/so3.hpp"

namespace mtrack {

inline constexpr int kStateDim = 15;
inline constexpr int kInputDim = 6;
inline constexpr int kMeasDim = 9;

using Vec15 = Eigen::Matrix<double, kStateDim, 1>;
using Mat15 = Eigen::Matrix<double, kStateDim, kStateDim>;
using Mat15x6 = Eigen::Matrix<double, kStateDim, kInputDim>;
using Mat9x3 = Eigen::Matrix<double, 9, 3>;
using Mat9x15 = Eigen::Matrix<double, kMeasDim, kStateDim>;

/// Filter state X = [Theta(9); p_c(3); v_c(3)], Theta = column-major R.
struct StateVector {
  Vec15 values = Vec15::Zero();

  StateVector() = default;
  explicit StateVector(const Vec15& v) : values(v) {}
  StateVector(const Mat3& r, const Vec3& p, const Vec3& v) {
    values << vec(r), p, v;
  }

  auto theta() { return values.head<9>(); }
  auto theta() const { return values.head<9>(); }
  auto position() { return values.segment<3>(9); }
  auto position() const { return values.segment<3>(9); }
  auto velocity() { return values.segment<3>(12); }
  auto velocity() const { return values.segment<3>(12); }

  /// Orientation block reshaped to 3x3; not necessarily orthogonal.
  Mat3 rotation_matrix() const { return unvec(values.head<9>()); }
};

/// IMU input u = [omega; a_b]: body rates (rad/s) and gravity-free body
/// acceleration of the centroid (m/s^2).
struct InputVector {
  Vec3 omega = Vec3::Zero();
  Vec3 accel = Vec3::Zero();

  Vec6 stacked() const {
    Vec6 u;
    u << omega, accel;
    return u;
  }
};

/// Isosceles transmitter triangle with base d and altitude a, centroid at the
/// body origin: p1 = (0,0,2a/3), p2 = (d/2,0,-a/3), p3 = (-d/2,0,-a/3).
class TransmitterGeometry {
public:
  TransmitterGeometry() : TransmitterGeometry(0.10, 0.30) {}

  TransmitterGeometry(double base, double altitude) : base_(base), altitude_(altitude) {
    if (!(base >= 0.0) || !(altitude >= 0.0)) {
      throw InvalidArgument("transmitter geometry: base and altitude must be non-negative");
    }
    points_[0] = Vec3(0.0, 0.0, 2.0 * altitude / 3.0);
    points_[1] = Vec3(base / 2.0, 0.0, -altitude / 3.0);
    points_[2] = Vec3(-base / 2.0, 0.0, -altitude / 3.0);
  }

  double base() const noexcept { return base_; }
  double altitude() const noexcept { return altitude_; }
  const std::array<Vec3, 3>& body_points() const noexcept { return points_; }
  const Vec3& body_point(int i) const { return points_.at(static_cast<std::size_t>(i)); }

private:
  double base_;
  double altitude_;
  std::array<Vec3, 3> points_;
};

/// Pi(R), the 9x3 map with dTheta/dt = Pi(R) * omega, written out entrywise
/// from r_ij. Satisfies unvec(Pi(R) w) = R * hat(w).
inline Mat9x3 build_pi(const Mat3& r) {
  const auto e = [&r](int i, int j) { return r(i - 1, j - 1); };
  Mat3 pi1, pi2, pi3;
  pi1 << 0.0, 0.0, 0.0,
         -e(1, 3), -e(2, 3), -e(3, 3),
         e(1, 2), e(2, 2), e(3, 2);
  pi2 << e(1, 3), e(2, 3), e(3, 3),
         0.0, 0.0, 0.0,
         -e(1, 1), -e(2, 1), -e(3, 1);
  pi3 << -e(1, 2), -e(2, 2), -e(3, 2),
         e(1, 1), e(2, 1), e(3, 1),
         0.0, 0.0, 0.0;
  Mat9x3 pi;
  pi << pi1.transpose(), pi2.transpose(), pi3.transpose();
  return pi;
}

/// Discrete transition F: identity with the T-coupling of velocity into position.
inline Mat15 discrete_f(double period) {
  if (!(period > 0.0)) throw InvalidArgument("discrete_f: period must be positive");
  Mat15 f = Mat15::Identity();
  f.block<3, 3>(9, 12) = period * Mat3::Identity();
  return f;
}

inline Mat15x6 discrete_g(const StateVector& x, double period) {
  if (!(period > 0.0)) throw InvalidArgument("discrete_g: period must be positive");
  // Conventional filters let Theta drift off SO(3), so only finiteness is
  // required here.
  if (!x.values.allFinite()) throw InvalidArgument("discrete_g: non-finite state");
  const Mat3 r = x.rotation_matrix();
  Mat15x6 g = Mat15x6::Zero();
  g.block<9, 3>(0, 0) = period * build_pi(r);
  g.block<3, 3>(9, 3) = 0.5 * period * period * r;
  g.block<3, 3>(12, 3) = period * r;
  return g;
}

/// Euclidean one-step propagation X_k = F X_{k-1} + g(X_{k-1}) u_{k-1}.
inline StateVector propagate(const StateVector& x, const InputVector& u, double period) {
  return StateVector(discrete_f(period) * x.values + discrete_g(x, period) * u.stacked());
}

/// Transmitter positions in the global frame, [p_c + R p_i] for i = 1..3.
inline Vec9 measure_h(const StateVector& x, const TransmitterGeometry& geom) {
  const Mat3 r = x.rotation_matrix();
  Vec9 y;
  for (int i = 0; i < 3; ++i) {
    y.segment<3>(3 * i) = x.position() + r * geom.body_point(i);
  }
  return y;
}

/// Exact Jacobian of measure_h. h is linear in Theta and p_c, so H is
/// constant: d(R p)/d vec(R) = [p_1 I, p_2 I, p_3 I] in column-major layout.
inline Mat9x15 measure_jacobian(const TransmitterGeometry& geom) {
  Mat9x15 h = Mat9x15::Zero();
  for (int i = 0; i < 3; ++i) {
    const Vec3& pb = geom.body_point(i);
    for (int c = 0; c < 3; ++c) {
      h.block<3, 3>(3 * i, 3 * c) = pb(c) * Mat3::Identity();
    }
    h.block<3, 3>(3 * i, 9) = Mat3::Identity();
  }
  return h;
}

}  // namespace mtrack
