#pragma once

// Monte-Carlo plumbing shared by the CLI and the acceptance runner: scenario
// preparation, per-trial sensor simulation, filter runs and a worker pool.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "manifold_track/filters.hpp"
#include "manifold_track/metrics.hpp"
#include "manifold_track/scenarios.hpp"
#include "manifold_track/sensors.hpp"

namespace mtrack {

using Rng = std::mt19937_64;

/// Everything about a scenario that does not depend on the trial seed.
struct PreparedScenario {
  ScenarioSpec spec;
  std::vector<TruthSample> truth;
  BeaconMap beacons;
  Streams streams;
  ImuNoise imu_noise;
  FilterConfig config;
  std::vector<Vec3> true_p;
  std::vector<Rotation> true_r;

  StateVector initial_state() const {
    const TruthSample& s = truth.front();
    return StateVector(s.r.matrix(), s.p, s.v);
  }
};

inline FilterConfig filter_config_for(const ScenarioSpec& spec, const ImuNoise& noise) {
  FilterConfig cfg;
  cfg.period = 1.0 / spec.imu_rate;
  cfg.ms_data_rate = spec.ms_ratio();
  cfg.q = noise.input_covariance();
  cfg.z = Mat9::Identity() * spec.sigma_r * spec.sigma_r;
  cfg.lever_arm = spec.lever_arm;
  return cfg;
}

inline PreparedScenario prepare_scenario(const ScenarioSpec& spec) {
  spec.validate();
  auto truth = generate_truth(spec);
  BeaconMap beacons = scenario_beacons(spec, truth);
  Streams streams = emit_streams(spec, truth);
  const ImuNoise noise =
      imu_variance_from_datasheet(spec.gyro_density, spec.accel_density, spec.imu_rate);
  PreparedScenario out{spec,  std::move(truth), std::move(beacons), std::move(streams),
                       noise, filter_config_for(spec, noise), {}, {}};
  for (const auto& s : out.truth) {
    out.true_p.push_back(s.p);
    out.true_r.push_back(s.r);
  }
  return out;
}

/// Noisy sensor data of one trial, aligned to filter steps.
struct TrialInputs {
  std::uint64_t seed = 0;
  std::vector<StepInput> stream;
  std::vector<long> range_steps;
  std::vector<RangeSet> ranges;
};

inline TrialInputs simulate_trial(const PreparedScenario& sc, std::uint64_t seed) {
  Rng rng(seed);
  TrialInputs out;
  out.seed = seed;
  const Mat6 q = sc.imu_noise.input_covariance();
  const std::size_t steps = sc.streams.imu.size();
  out.stream.resize(steps);
  std::size_t next_ms = 0;
  std::array<Vec3, 3> init;
  bool have_prev = false;
  Vec3 centroid = Vec3::Zero();
  for (const auto& b : sc.beacons.positions()) centroid += b;
  centroid /= static_cast<double>(sc.beacons.size());
  for (std::size_t k = 1; k <= steps; ++k) {
    const ImuTruth& u = sc.streams.imu[k - 1];
    out.stream[k - 1].u = simulate_imu(u.omega, u.accel, q, rng);
    if (next_ms < sc.streams.ms.size() && sc.streams.ms[next_ms].step == static_cast<long>(k)) {
      RangeSet r = simulate_ranges(sc.streams.ms[next_ms].transmitters, sc.beacons,
                                   sc.spec.sigma_r, rng);
      if (!have_prev) init.fill(centroid);
      const MultilaterationResult m = multilaterate(r, sc.beacons, init);
      for (int i = 0; i < 3; ++i) init[static_cast<std::size_t>(i)] = m.y.segment<3>(3 * i);
      have_prev = true;
      out.stream[k - 1].y = m.y;
      out.range_steps.push_back(static_cast<long>(k));
      out.ranges.push_back(std::move(r));
      ++next_ms;
    }
  }
  return out;
}

struct TrialRun {
  std::vector<FilterState> states;
  RunResult result;
};

inline TrialRun run_trial(const PreparedScenario& sc, const TrialInputs& in, FilterKind kind,
                          const FilterConfig& cfg) {
  TrialRun out;
  out.states = run_filter(kind, in.stream, sc.initial_state(), cfg, sc.spec.geometry);
  out.result = score_run(kind, out.states, sc.true_p, sc.true_r);
  out.result.seed = in.seed;
  out.result.scenario_id = std::string(to_string(sc.spec.kind));
  return out;
}

inline TrialRun run_trial(const PreparedScenario& sc, const TrialInputs& in, FilterKind kind) {
  return run_trial(sc, in, kind, sc.config);
}

/// Worker count: MANIFOLD_TRACK_THREADS if set, else the hardware concurrency.
inline unsigned thread_count() {
  if (const char* env = std::getenv("MANIFOLD_TRACK_THREADS"); env && *env) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) {
      throw InvalidArgument("MANIFOLD_TRACK_THREADS must be a positive integer");
    }
    return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs job(i) for i in [0, n) on up to `threads` workers; the first
/// exception is rethrown after all workers join.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& job) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// results[t][f]: trial t (seed seed_base + t) for kinds[f]. All kinds see
/// the same noise realization within a trial.
inline std::vector<std::vector<RunResult>> monte_carlo(const PreparedScenario& sc,
                                                       const std::vector<FilterKind>& kinds,
                                                       std::size_t trials, std::uint64_t seed_base,
                                                       unsigned threads) {
  if (trials < 1) throw InvalidArgument("monte_carlo: trials must be >= 1");
  std::vector<std::vector<RunResult>> out(trials, std::vector<RunResult>(kinds.size()));
  parallel_for(trials, threads, [&](std::size_t t) {
    const TrialInputs in = simulate_trial(sc, seed_base + t);
    for (std::size_t f = 0; f < kinds.size(); ++f) {
      out[t][f] = run_trial(sc, in, kinds[f]).result;
    }
  });
  return out;
}

}  // namespace mtrack
