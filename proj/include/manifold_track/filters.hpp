#pragma once

// EKF, UKF and their SO(3)-retraction variants (EKFRie, UKFRie) for the
// 15-state IMU + multilateration model. Measurement updates are gated to
// every ms_data_rate-th IMU step.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "manifold_track/kinematics.hpp"
#include "manifold_track/sensors.hpp"

namespace mtrack {

enum class FilterKind { EKF, UKF, EKFRie, UKFRie };

inline constexpr std::array<FilterKind, 4> kAllFilterKinds = {
    FilterKind::EKF, FilterKind::UKF, FilterKind::EKFRie, FilterKind::UKFRie};

inline std::string_view to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::EKF: return "EKF";
    case FilterKind::UKF: return "UKF";
    case FilterKind::EKFRie: return "EKFRie";
    case FilterKind::UKFRie: return "UKFRie";
  }
  return "?";
}

inline FilterKind parse_filter_kind(std::string_view name) {
  for (FilterKind k : kAllFilterKinds) {
    if (name == to_string(k)) return k;
  }
  throw InvalidArgument("unknown filter kind '" + std::string(name) + "'");
}

inline bool is_riemannian(FilterKind kind) {
  return kind == FilterKind::EKFRie || kind == FilterKind::UKFRie;
}

inline bool is_unscented(FilterKind kind) {
  return kind == FilterKind::UKF || kind == FilterKind::UKFRie;
}

/// diag(1e-4 for Theta, 1e-2 m^2 for position, 1e-2 (m/s)^2 for velocity).
inline Mat15 default_initial_covariance() {
  Vec15 d;
  d << Vec9::Constant(1e-4), Vec3::Constant(1e-2), Vec3::Constant(1e-2);
  return d.asDiagonal();
}

/// How the UKF time update injects input noise.
enum class UkfProcessNoise {
  Additive,       ///< g(x) Q g(x)^T at the prior mean
  SquaredWeight,  ///< sum_l w_l^2 g(chi_l) Q g(chi_l)^T over the sigma points
};

struct FilterConfig {
  double period = 0.1;  ///< IMU sample period T (s)
  int ms_data_rate = 10;  ///< IMU steps per measurement update
  Mat6 q = Mat6::Zero();
  Mat9 z = Mat9::Identity() * 1e-2;
  double ukf_alpha = 1e-3;
  double ukf_iota = 1.0;
  double ukf_beta = 2.0;
  Mat15 p0 = default_initial_covariance();
  UkfProcessNoise ukf_process_noise = UkfProcessNoise::Additive;
  LeverArm lever_arm;

  void validate() const {
    if (!(period > 0.0)) throw InvalidArgument("filter config: period must be positive");
    if (ms_data_rate < 1) throw InvalidArgument("filter config: ms_data_rate must be >= 1");
    if (!(ukf_alpha > 0.0)) throw InvalidArgument("filter config: ukf_alpha must be positive");
    const auto psd = [](const auto& m) {
      if (!m.allFinite() || (m - m.transpose()).norm() > 1e-12 * std::max(1.0, m.norm())) {
        return false;
      }
      Eigen::SelfAdjointEigenSolver<typename std::decay_t<decltype(m)>::PlainObject> es(m);
      return es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, m.norm());
    };
    if (!psd(q) || !psd(z) || !psd(p0)) {
      throw InvalidArgument("filter config: covariances must be symmetric PSD");
    }
  }
};

struct FilterState {
  StateVector x;
  Mat15 p = Mat15::Identity();
  long k = 0;   ///< completed steps
  long k1 = 0;  ///< measurement gate counter
  std::optional<Vec3> omega_prev;  ///< last gyro reading, for the lever-arm alpha

  static FilterState initial(const StateVector& x0, const FilterConfig& cfg) {
    FilterState st;
    st.x = x0;
    st.p = cfg.p0;
    return st;
  }
};

/// True when the next step carries a measurement update.
inline bool measurement_due(const FilterState& st, const FilterConfig& cfg) {
  return (st.k1 + 1) % cfg.ms_data_rate == 0;
}

namespace detail {

inline Mat15 symmetrized(const Mat15& p) { return 0.5 * (p + p.transpose()); }

/// Step 2: move the IMU acceleration and its variance to the centroid.
inline InputVector centroid_input(const FilterState& st, const InputVector& u_imu,
                                  const FilterConfig& cfg, Mat6& q) {
  q = cfg.q;
  if (cfg.lever_arm.is_zero()) return u_imu;
  const Vec3 omega_prev = st.omega_prev.value_or(u_imu.omega);
  const Mat3 r = st.x.rotation_matrix();
  InputVector u = u_imu;
  u.accel = accel_to_centroid(u_imu.accel, r, u_imu.omega, omega_prev, cfg.period, cfg.lever_arm);
  const Vec9 var_r = st.p.diagonal().head<9>().cwiseMax(0.0);
  const Vec3 var_a = accel_variance_to_centroid(cfg.q.diagonal().segment<3>(3), r, var_r,
                                                u_imu.omega, omega_prev, cfg.q(0, 0),
                                                cfg.period, cfg.lever_arm);
  q.diagonal().segment<3>(3) = var_a;
  return u;
}

/// Gate bookkeeping shared by all filters. Returns whether to update.
inline bool advance_gate(FilterState& st, const std::optional<Vec9>& y, const FilterConfig& cfg,
                         const InputVector& u_imu) {
  const bool due = measurement_due(st, cfg);
  if (y && !due) {
    throw ContractViolation("measurement supplied at step " + std::to_string(st.k + 1) +
                            " but the gate is closed");
  }
  ++st.k;
  ++st.k1;
  st.omega_prev = u_imu.omega;
  return due && y.has_value();
}

inline Rotation orientation_of(const StateVector& x) {
  return Rotation(x.rotation_matrix(), 1e-6);
}

inline void set_orientation(StateVector& x, const Rotation& r) { x.theta() = r.vec(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// EKF family

/// Time update X <- F X + g(X) u, P <- F P F^T + g Q g^T, g frozen at the prior.
inline void ekf_predict(StateVector& x, Mat15& p, const InputVector& u, const Mat6& q,
                        double period) {
  const Mat15 f = discrete_f(period);
  const Mat15x6 g = discrete_g(x, period);
  x = StateVector(f * x.values + g * u.stacked());
  p = detail::symmetrized(f * p * f.transpose() + g * q * g.transpose());
}

/// Measurement update; returns the state increment K (y - h(x)).
inline Vec15 ekf_update(StateVector& x, Mat15& p, const Vec9& y, const Mat9& z,
                        const TransmitterGeometry& geom) {
  const Mat9x15 h = measure_jacobian(geom);
  const Mat9 s = h * p * h.transpose() + z;
  Eigen::LLT<Mat9> llt(s);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("ekf update: innovation covariance is not positive definite");
  }
  const Eigen::Matrix<double, kStateDim, kMeasDim> gain =
      llt.solve(h * p).transpose();
  const Vec15 dx = gain * (y - measure_h(x, geom));
  x.values += dx;
  p = detail::symmetrized((Mat15::Identity() - gain * h) * p);
  return dx;
}

inline FilterState ekf_step(const FilterState& st, const InputVector& u_imu,
                            const std::optional<Vec9>& y, const FilterConfig& cfg,
                            const TransmitterGeometry& geom) {
  Mat6 q;
  const InputVector u = detail::centroid_input(st, u_imu, cfg, q);
  FilterState out = st;
  const bool update = detail::advance_gate(out, y, cfg, u_imu);
  ekf_predict(out.x, out.p, u, q, cfg.period);
  if (update) ekf_update(out.x, out.p, *y, cfg.z, geom);
  return out;
}

/// Replaces the orientation block of p by its transport from `from` to `to`.
inline void transport_orientation_block(Mat15& p, const Rotation& from, const Rotation& to,
                                        bool repair) {
  Mat9 block = transport_covariance(p.topLeftCorner<9, 9>(), from, to);
  if (repair) block = nearest_spd(block);
  p.topLeftCorner<9, 9>() = block;
}

inline FilterState ekfrie_step(const FilterState& st, const InputVector& u_imu,
                               const std::optional<Vec9>& y, const FilterConfig& cfg,
                               const TransmitterGeometry& geom) {
  const Rotation r_prev = detail::orientation_of(st.x);
  Mat6 q;
  const InputVector u = detail::centroid_input(st, u_imu, cfg, q);
  FilterState out = st;
  const bool update = detail::advance_gate(out, y, cfg, u_imu);

  // Euclidean prediction of Psi and P, then retraction of the Theta increment.
  ekf_predict(out.x, out.p, u, q, cfg.period);
  const Vec9 tangent = cfg.period * build_pi(r_prev.matrix()) * u.omega;
  const Rotation r_pred = retract(r_prev, unvec(tangent));
  transport_orientation_block(out.p, r_prev, r_pred, false);
  detail::set_orientation(out.x, r_pred);

  if (update) {
    const Vec15 dx = ekf_update(out.x, out.p, *y, cfg.z, geom);
    const Rotation r_post = retract(r_pred, unvec(dx.head<9>()));
    transport_orientation_block(out.p, r_pred, r_post, false);
    detail::set_orientation(out.x, r_post);
  }
  return out;
}

// ---------------------------------------------------------------------------
// UKF family

inline constexpr int kSigmaCount = 2 * kStateDim + 1;

struct SigmaPoints {
  std::array<Vec15, kSigmaCount> points;
  std::array<double, kSigmaCount> wm{};
  std::array<double, kSigmaCount> wc{};
  double spread = 0.0;  ///< sqrt(L + lambda)
};

/// Scaled unscented transform: lambda = alpha^2 (L + iota) - L, points
/// x +/- columns of chol((L + lambda) P). P is repaired with nearest_spd
/// when its Cholesky factorization fails.
inline SigmaPoints sigma_points(const StateVector& x, const Mat15& p, double alpha, double iota,
                                double beta = 2.0) {
  constexpr double dim = kStateDim;
  const double c = alpha * alpha * (dim + iota);  // L + lambda
  const double lambda = c - dim;
  if (!(c > 0.0)) throw InvalidArgument("sigma_points: L + lambda must be positive");

  // chol(c P) = sqrt(c) chol(P); factoring P itself keeps the repaired
  // matrix's Cholesky guarantee intact.
  Eigen::LLT<Mat15> llt(p);
  if (llt.info() != Eigen::Success) {
    llt.compute(nearest_spd(p));
    if (llt.info() != Eigen::Success) {
      throw NumericalError("sigma_points: Cholesky failed after SPD repair");
    }
  }
  const Mat15 root = std::sqrt(c) * Mat15(llt.matrixL());

  SigmaPoints sp;
  sp.spread = std::sqrt(c);
  sp.points[0] = x.values;
  sp.wm[0] = lambda / c;
  sp.wc[0] = lambda / c + (1.0 - alpha * alpha + beta);
  for (int i = 0; i < kStateDim; ++i) {
    sp.points[1 + i] = x.values + root.col(i);
    sp.points[1 + kStateDim + i] = x.values - root.col(i);
    sp.wm[1 + i] = sp.wm[1 + kStateDim + i] = 0.5 / c;
    sp.wc[1 + i] = sp.wc[1 + kStateDim + i] = 0.5 / c;
  }
  return sp;
}

namespace detail {

/// Weighted mean sum_l wm_l v_l evaluated as v_0 + sum_l wm_l (v_l - v_0),
/// which avoids cancellation against the large negative centre weight.
template <typename Vec>
Vec weighted_mean(const std::array<Vec, kSigmaCount>& v, const SigmaPoints& sp) {
  Vec acc = Vec::Zero(v[0].rows());
  for (int l = 1; l < kSigmaCount; ++l) acc += sp.wm[l] * (v[l] - v[0]);
  return v[0] + acc;
}

/// Propagated points and statistics of the unscented time update.
struct UnscentedPrediction {
  std::array<Vec15, kSigmaCount> points;
  Vec15 mean;
  Mat15 cov;
  Vec9 tangent_mean;  ///< sum_l wm_l T Pi(chi_l) omega
};

inline UnscentedPrediction unscented_predict(const FilterState& st, const InputVector& u,
                                             const Mat6& q, const FilterConfig& cfg) {
  const SigmaPoints sp =
      sigma_points(st.x, st.p, cfg.ukf_alpha, cfg.ukf_iota, cfg.ukf_beta);
  const Mat15 f = discrete_f(cfg.period);
  const Vec6 uv = u.stacked();

  UnscentedPrediction out;
  std::array<Mat15x6, kSigmaCount> gs;
  std::array<Vec9, kSigmaCount> tangents;
  for (int l = 0; l < kSigmaCount; ++l) {
    const StateVector chi(sp.points[l]);
    gs[l] = discrete_g(chi, cfg.period);
    out.points[l] = f * chi.values + gs[l] * uv;
    tangents[l] = gs[l].topLeftCorner<9, 3>() * u.omega;
  }
  out.mean = weighted_mean(out.points, sp);
  out.tangent_mean = weighted_mean(tangents, sp);

  Mat15 cov = Mat15::Zero();
  for (int l = 0; l < kSigmaCount; ++l) {
    const Vec15 d = out.points[l] - out.mean;
    cov += sp.wc[l] * d * d.transpose();
  }
  if (cfg.ukf_process_noise == UkfProcessNoise::Additive) {
    const Mat15x6 g = discrete_g(st.x, cfg.period);
    cov += g * q * g.transpose();
  } else {
    for (int l = 0; l < kSigmaCount; ++l) {
      cov += sp.wc[l] * sp.wc[l] * gs[l] * q * gs[l].transpose();
    }
  }
  out.cov = symmetrized(cov);
  return out;
}

}  // namespace detail

/// Innovation statistics of one unscented measurement update.
struct UnscentedInnovation {
  Vec9 predicted;  ///< y_imu
  Mat9 cov;        ///< delta_e
  Eigen::Matrix<double, kStateDim, kMeasDim> cross;  ///< delta_xe
};

inline UnscentedInnovation unscented_innovation(const StateVector& x, const Mat15& p,
                                                const FilterConfig& cfg,
                                                const TransmitterGeometry& geom) {
  const SigmaPoints sp = sigma_points(x, p, cfg.ukf_alpha, cfg.ukf_iota, cfg.ukf_beta);
  std::array<Vec9, kSigmaCount> ys;
  for (int l = 0; l < kSigmaCount; ++l) ys[l] = measure_h(StateVector(sp.points[l]), geom);
  UnscentedInnovation inn;
  inn.predicted = detail::weighted_mean(ys, sp);
  const Vec15 x_mean = detail::weighted_mean(sp.points, sp);
  inn.cov = cfg.z;
  inn.cross.setZero();
  for (int l = 0; l < kSigmaCount; ++l) {
    const Vec9 dy = ys[l] - inn.predicted;
    inn.cov += sp.wc[l] * dy * dy.transpose();
    inn.cross += sp.wc[l] * (sp.points[l] - x_mean) * dy.transpose();
  }
  inn.cov = 0.5 * (inn.cov + inn.cov.transpose()).eval();
  return inn;
}

/// Unscented measurement update; returns the state increment.
inline Vec15 ukf_update(StateVector& x, Mat15& p, const Vec9& y, const FilterConfig& cfg,
                        const TransmitterGeometry& geom) {
  const UnscentedInnovation inn = unscented_innovation(x, p, cfg, geom);
  Eigen::LLT<Mat9> llt(inn.cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("ukf update: innovation covariance is not positive definite");
  }
  const Eigen::Matrix<double, kStateDim, kMeasDim> gain =
      llt.solve(inn.cross.transpose()).transpose();
  const Vec15 dx = gain * (y - inn.predicted);
  x.values += dx;
  p = detail::symmetrized(p - gain * inn.cov * gain.transpose());
  return dx;
}

inline FilterState ukf_step(const FilterState& st, const InputVector& u_imu,
                            const std::optional<Vec9>& y, const FilterConfig& cfg,
                            const TransmitterGeometry& geom) {
  Mat6 q;
  const InputVector u = detail::centroid_input(st, u_imu, cfg, q);
  FilterState out = st;
  const bool update = detail::advance_gate(out, y, cfg, u_imu);
  const detail::UnscentedPrediction pred = detail::unscented_predict(st, u, q, cfg);
  out.x = StateVector(pred.mean);
  out.p = pred.cov;
  if (update) ukf_update(out.x, out.p, *y, cfg, geom);
  return out;
}

inline FilterState ukfrie_step(const FilterState& st, const InputVector& u_imu,
                               const std::optional<Vec9>& y, const FilterConfig& cfg,
                               const TransmitterGeometry& geom) {
  const Rotation r_prev = detail::orientation_of(st.x);
  Mat6 q;
  const InputVector u = detail::centroid_input(st, u_imu, cfg, q);
  FilterState out = st;
  const bool update = detail::advance_gate(out, y, cfg, u_imu);

  const detail::UnscentedPrediction pred = detail::unscented_predict(st, u, q, cfg);
  out.x = StateVector(pred.mean);
  out.p = pred.cov;
  const Rotation r_pred = retract(r_prev, unvec(pred.tangent_mean));
  transport_orientation_block(out.p, r_prev, r_pred, true);
  detail::set_orientation(out.x, r_pred);

  if (update) {
    const Vec15 dx = ukf_update(out.x, out.p, *y, cfg, geom);
    const Rotation r_post = retract(r_pred, unvec(dx.head<9>()));
    transport_orientation_block(out.p, r_pred, r_post, true);
    detail::set_orientation(out.x, r_post);
  }
  return out;
}

inline FilterState filter_step(FilterKind kind, const FilterState& st, const InputVector& u,
                               const std::optional<Vec9>& y, const FilterConfig& cfg,
                               const TransmitterGeometry& geom) {
  switch (kind) {
    case FilterKind::EKF: return ekf_step(st, u, y, cfg, geom);
    case FilterKind::UKF: return ukf_step(st, u, y, cfg, geom);
    case FilterKind::EKFRie: return ekfrie_step(st, u, y, cfg, geom);
    case FilterKind::UKFRie: return ukfrie_step(st, u, y, cfg, geom);
  }
  throw InvalidArgument("filter_step: unknown filter kind");
}

/// One IMU sample u_{k-1} and, on gated steps, the multilateration output y_ms,k.
struct StepInput {
  InputVector u;
  std::optional<Vec9> y;
};

/// Runs a filter over a time-aligned stream. Element 0 of the result is the
/// initial state; element k is the estimate after step k.
inline std::vector<FilterState> run_filter(FilterKind kind, const std::vector<StepInput>& stream,
                                           const StateVector& x0, const FilterConfig& cfg,
                                           const TransmitterGeometry& geom) {
  cfg.validate();
  std::vector<FilterState> out;
  out.reserve(stream.size() + 1);
  out.push_back(FilterState::initial(x0, cfg));
  for (std::size_t k = 0; k < stream.size(); ++k) {
    const bool due = measurement_due(out.back(), cfg);
    if (due != stream[k].y.has_value()) {
      throw ContractViolation("stream misaligned at step " + std::to_string(k + 1) +
                              (due ? ": measurement missing" : ": unexpected measurement"));
    }
    out.push_back(filter_step(kind, out.back(), stream[k].u, stream[k].y, cfg, geom));
  }
  return out;
}

}  // namespace mtrack
