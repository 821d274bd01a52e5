#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "manifold_track/sensors.hpp"

using namespace mtrack;

namespace {

BeaconMap cube_beacons() {
  return BeaconMap::box_corners(Vec3(0, 0, 0), Vec3(4, 3, 2), 1.0);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Asymptotic Kolmogorov-Smirnov p-value for statistic d with n samples.
double ks_p_value(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace

TEST(Sensors, ImuVarianceFromDatasheet) {
  // 300 ug/sqrt(Hz) -> (300e-6 * 9.8)^2 * fs / 2
  const ImuNoise at100 = imu_variance_from_datasheet(0.01, 300e-6, 100.0);
  EXPECT_NEAR(at100.accel_var, 4.3218e-4, 1e-8);
  EXPECT_NEAR(at100.gyro_var_deg2, 5e-3, 1e-15);
  const ImuNoise at10 = imu_variance_from_datasheet(0.01, 300e-6, 10.0);
  EXPECT_NEAR(at10.accel_var, 4.3218e-5, 1e-9);
  EXPECT_NEAR(at10.gyro_var_deg2, 5e-4, 1e-15);
  EXPECT_NEAR(at10.gyro_var_rad2(), 5e-4 * std::pow(std::numbers::pi / 180.0, 2), 1e-18);
  EXPECT_THROW(imu_variance_from_datasheet(0.01, 300e-6, 0.0), InvalidArgument);
}

TEST(Sensors, SimulateImuNoiseStatistics) {
  std::mt19937_64 rng(1);
  Vec6 d;
  d << 1e-4, 2e-4, 3e-4, 1e-2, 2e-2, 3e-2;
  const Mat6 q = d.asDiagonal();
  const int n = 100000;
  Vec6 sum = Vec6::Zero(), sq = Vec6::Zero();
  const Vec3 w(0.1, 0.2, 0.3), a(1.0, -1.0, 0.5);
  for (int i = 0; i < n; ++i) {
    const Vec6 e = simulate_imu(w, a, q, rng).stacked() - (Vec6() << w, a).finished();
    sum += e;
    sq += e.cwiseProduct(e);
  }
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(sum(i) / n, 0.0, 5.0 * std::sqrt(d(i) / n));
    EXPECT_NEAR(sq(i) / n / d(i), 1.0, 0.02);
  }
  EXPECT_EQ(simulate_imu(w, a, Mat6::Zero(), rng).omega, w);
  Mat6 bad = q;
  bad(0, 1) = 1e-5;
  EXPECT_THROW(simulate_imu(w, a, bad, rng), InvalidArgument);
}

TEST(Sensors, LeverArmCircularMotion) {
  // Centroid fixed, body spinning at w about z, IMU offset r along body x:
  // the IMU reads the centripetal -w^2 r x and the centroid sees nothing.
  const double w = 2.0, r = 0.3, t = 0.1;
  const Vec3 omega(0, 0, w);
  const LeverArm lever{Vec3(r, 0, 0)};
  const Vec3 a_imu = accel_at_imu(Vec3::Zero(), Mat3::Identity(), omega, omega, t, lever);
  EXPECT_LT((a_imu - Vec3(-w * w * r, 0, 0)).norm(), 1e-12);
  EXPECT_LT(accel_to_centroid(a_imu, Mat3::Identity(), omega, omega, t, lever).norm(), 1e-12);
}

TEST(Sensors, LeverArmRoundTrip) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Mat3 rot = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
    const Vec3 w(n(rng), n(rng), n(rng)), wp(n(rng), n(rng), n(rng)), ac(n(rng), n(rng), n(rng));
    const LeverArm lever{Vec3(n(rng), n(rng), n(rng)) * 0.1};
    const Vec3 a_imu = accel_at_imu(ac, rot, w, wp, 0.1, lever);
    EXPECT_LT((accel_to_centroid(a_imu, rot, w, wp, 0.1, lever) - ac).norm(), 1e-12);
  }
}

TEST(Sensors, LeverArmVarianceZeroLeverPassesThrough) {
  const Vec3 var_a(1e-3, 2e-3, 3e-3);
  const Vec3 out = accel_variance_to_centroid(var_a, Mat3::Identity(), Vec9::Constant(1e-4),
                                              Vec3(0, 0, 1), Vec3::Zero(), 1e-2, 0.1, LeverArm{});
  EXPECT_EQ(out, var_a);
  EXPECT_THROW(accel_variance_to_centroid(-var_a, Mat3::Identity(), Vec9::Zero(), Vec3::Zero(),
                                          Vec3::Zero(), 0.0, 0.1, LeverArm{}),
               InvalidArgument);
}

TEST(Sensors, LeverArmVarianceMatchesMonteCarlo) {
  const Vec3 var_a = Vec3::Constant(1e-3);
  const Vec9 var_r = Vec9::Constant(1e-4);
  const Vec3 w(0.0, 0.0, 1.0), wp(0.0, 0.0, 0.9);
  const double var_w = 1e-2, t = 0.1;
  const LeverArm lever{Vec3(0.1, 0.0, 0.0)};
  const Vec3 predicted =
      accel_variance_to_centroid(var_a, Mat3::Identity(), var_r, w, wp, var_w, t, lever);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  const int samples = 200000;
  Vec3 sum = Vec3::Zero(), sq = Vec3::Zero();
  for (int s = 0; s < samples; ++s) {
    Mat3 r = Mat3::Identity();
    for (int i = 0; i < 9; ++i) r.data()[i] += std::sqrt(var_r(i)) * n(rng);
    const Vec3 ws = w + std::sqrt(var_w) * Vec3(n(rng), n(rng), n(rng));
    const Vec3 wps = wp + std::sqrt(var_w) * Vec3(n(rng), n(rng), n(rng));
    const Vec3 a = std::sqrt(var_a(0)) * Vec3(n(rng), n(rng), n(rng));
    const Vec3 ac = accel_to_centroid(a, r, ws, wps, t, lever);
    sum += ac;
    sq += ac.cwiseProduct(ac);
  }
  const Vec3 mean = sum / samples;
  const Vec3 var = sq / samples - mean.cwiseProduct(mean);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(var(i) / predicted(i), 1.0, 0.1) << "axis " << i;
}

TEST(Sensors, BeaconMapValidation) {
  EXPECT_EQ(cube_beacons().size(), 8u);
  EXPECT_THROW(BeaconMap({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}), InvalidArgument);
  EXPECT_THROW(BeaconMap({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)}),
               InvalidArgument);
  const BeaconMap b = cube_beacons();
  EXPECT_EQ(b[0], Vec3(-1, -1, -1));
  EXPECT_EQ(b[7], Vec3(5, 4, 3));
}

TEST(Sensors, NoiselessRangesAreDistances) {
  std::mt19937_64 rng(4);
  const BeaconMap b = cube_beacons();
  const std::array<Vec3, 3> tx = {Vec3(1, 1, 1), Vec3(2, 1, 0.5), Vec3(0.5, 2, 1.5)};
  const RangeSet r = simulate_ranges(tx, b, 0.0, rng);
  ASSERT_EQ(r.s.rows(), 8);
  for (std::size_t j = 0; j < 8; ++j) {
    for (int i = 0; i < 3; ++i) {
      EXPECT_DOUBLE_EQ(r.s(static_cast<Eigen::Index>(j), i), (tx[static_cast<std::size_t>(i)] - b[j]).norm());
    }
  }
  EXPECT_THROW(simulate_ranges(tx, b, -1.0, rng), InvalidArgument);
}

TEST(Sensors, RangeResidualsAreGaussian) {
  std::mt19937_64 rng(5);
  const BeaconMap b = cube_beacons();
  const std::array<Vec3, 3> tx = {Vec3(1, 1, 1), Vec3(2, 1, 0.5), Vec3(0.5, 2, 1.5)};
  const double sigma = 0.05;
  std::vector<double> z;
  while (z.size() < 100000) {
    const RangeSet r = simulate_ranges(tx, b, sigma, rng);
    for (std::size_t j = 0; j < 8; ++j) {
      for (int i = 0; i < 3; ++i) {
        z.push_back((r.s(static_cast<Eigen::Index>(j), i) - (tx[static_cast<std::size_t>(i)] - b[j]).norm()) / sigma);
      }
    }
  }
  std::sort(z.begin(), z.end());
  double d = 0.0;
  const double n = static_cast<double>(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double f = normal_cdf(z[k]);
    d = std::max({d, f - k / n, (k + 1) / n - f});
  }
  EXPECT_GT(ks_p_value(d, z.size()), 0.01);
}

TEST(Sensors, RangesClampAtZero) {
  std::mt19937_64 rng(6);
  const BeaconMap b = cube_beacons();
  const std::array<Vec3, 3> tx = {b[0], b[0], b[0]};
  for (int k = 0; k < 100; ++k) {
    EXPECT_GE(simulate_ranges(tx, b, 1.0, rng).s.minCoeff(), 0.0);
  }
}

TEST(Sensors, MultilaterationNoiselessRoundTrip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  const BeaconMap b = cube_beacons();
  for (int k = 0; k < 100; ++k) {
    const std::array<Vec3, 3> tx = {Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng)),
                                    Vec3(u(rng), u(rng), u(rng))};
    const RangeSet r = simulate_ranges(tx, b, 0.0, rng);
    const Vec3 c(1.5, 1.0, 0.5);
    const MultilaterationResult m = multilaterate(r, b, {c, c, c});
    EXPECT_TRUE(m.converged);
    for (int i = 0; i < 3; ++i) {
      EXPECT_LT((m.y.segment<3>(3 * i) - tx[static_cast<std::size_t>(i)]).norm(), 1e-8);
    }
  }
}

TEST(Sensors, MultilaterationAveragesNoise) {
  std::mt19937_64 rng(8);
  const BeaconMap b = cube_beacons();
  const std::array<Vec3, 3> tx = {Vec3(2, 1.5, 1), Vec3(2.05, 1.5, 0.9), Vec3(1.95, 1.5, 0.9)};
  const double sigma = 0.01;
  double sq = 0.0;
  const int trials = 1000;
  for (int k = 0; k < trials; ++k) {
    const MultilaterationResult m = multilaterate(simulate_ranges(tx, b, sigma, rng), b, tx);
    sq += (m.y.segment<3>(0) - tx[0]).squaredNorm() / 3.0;
  }
  // Per-axis RMSE below the range noise thanks to eight beacons.
  EXPECT_LT(std::sqrt(sq / trials), sigma);
}

TEST(Sensors, MultilaterationRejectsShapeMismatch) {
  RangeSet r;
  r.s = RangeMatrix::Zero(3, 3);
  EXPECT_THROW(multilaterate(r, cube_beacons(), {}), InvalidArgument);
}
