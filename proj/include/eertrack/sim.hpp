#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eertrack/config.hpp"
#include "eertrack/guidance.hpp"
#include "eertrack/particle_filter.hpp"

namespace eertrack {

struct AgentState {
  Pose2 position;
  double max_speed = 1.0;
  Pose2 fov_half_extents{0.75, 0.75};

  SensorFootprint fov() const { return SensorFootprint(position, fov_half_extents); }
};

/// Truth plus Gaussian noise when the truth is observable from the agent, otherwise nothing.
std::optional<Pose2> synth_measurement(const Pose2& truth, const AgentState& agent, const Workspace& ws,
                                       const MeasurementModel& mm, Rng& rng);

/// First-order kinematics: moves straight toward `wp` by at most max_speed*dt, then clips to `bounds`.
AgentState step_agent(const AgentState& agent, const Pose2& wp, double dt, const Rect& bounds);

double tracking_error(const Pose2& agent, const Pose2& truth);
double estimation_error(const ParticleSet& ps, const Pose2& truth);

/// One filter step of an episode.
struct StepRecord {
  long k = 0;
  double t = 0.0;
  Pose2 truth;
  Pose2 agent;
  std::optional<Pose2> z;
  bool occluded = false;
  bool in_fov = false;
  Pose2 mean;
  double det_cov = 0.0;
  double e = 0.0;      // agent to target, m
  double e_est = 0.0;  // estimate to target, m
  Pose2 waypoint;
  GuidanceMode mode = GuidanceMode::kPfwm;
  ResampleKind resample = ResampleKind::kNone;

  bool observed() const { return z.has_value(); }
};

struct EpisodeSummary {
  double mean_e = 0.0, max_e = 0.0;
  double mean_e_est = 0.0, max_e_est = 0.0;
  double mean_det_cov = 0.0, max_det_cov = 0.0;
  double pct_observed = 0.0;
  double pct_occluded = 0.0;     // target inside an occlusion zone
  double pct_out_of_fov = 0.0;   // not occluded but outside the FOV
  /// Filter steps from each exit of the target out of an occlusion zone until e_est < 0.2 m.
  /// Exits that never recover count the remaining episode length.
  std::vector<long> recovery_steps;
  double mean_recovery_steps = 0.0;
  double mean_guidance_ms = 0.0, max_guidance_ms = 0.0;
  double mean_filter_ms = 0.0, max_filter_ms = 0.0;
};

inline constexpr double kRecoveredError = 0.2;

EpisodeSummary summarize(const std::vector<StepRecord>& records);

struct EpisodeLog {
  Policy policy = Policy::kDmmnEer;
  std::uint64_t seed = 0;
  std::vector<StepRecord> records;
  std::vector<Pose2> target_path;  // truth at every simulation tick
  EpisodeSummary summary;
};

/// Optional per-step debug taps.
struct EpisodeHooks {
  std::function<void(long k, const ParticleSet&)> on_particles;
  std::function<void(long k, const EerResult&)> on_eer;
};

/// Simulation ticks per second and the tick counts between filter and guidance cycles.
struct Schedule {
  double tick_hz = 15.0;
  int filter_every = 5;
  int guidance_every = 6;

  static Schedule from_rates(double filter_hz, double guidance_hz);
};

/// Closed loop: target, measurement, filter and guidance on one clock. `model` is
/// required when the filter or the planner uses the DMMN.
EpisodeLog run_episode(const SimConfig& cfg, std::shared_ptr<const DmmnParams> model, const EpisodeHooks& hooks = {});

/// DMMN weights for `cfg`: loaded from cfg.model_weights when set, otherwise trained
/// on a road-network trajectory drawn from the training stream.
std::shared_ptr<const DmmnParams> obtain_model(const SimConfig& cfg, TrainReport* report = nullptr);

/// Trains on a trajectory generated from the config's road network.
DmmnParams train_from_config(const SimConfig& cfg, TrainReport* report = nullptr);

struct CompareRow {
  Policy policy = Policy::kDmmnEer;
  std::string seed;  // seed number, or "mean" for aggregate rows
  double mean_e = 0.0;
  double mean_e_est = 0.0;
  double mean_det_cov = 0.0;
  double pct_observed = 0.0;
  double mean_recovery_steps = 0.0;
};

struct CompareResult {
  std::vector<CompareRow> runs;        // policy-major, seeds ascending
  std::vector<CompareRow> aggregates;  // one per policy
  std::vector<EpisodeLog> logs;        // same order as runs
};

/// Every policy on every seed with matched target trajectories; episodes run on
/// `threads` worker threads (0 picks the hardware count).
CompareResult compare(const SimConfig& cfg, std::shared_ptr<const DmmnParams> model, const std::vector<std::uint64_t>& seeds,
                      const std::vector<Policy>& policies = {Policy::kDmmnEer, Policy::kLawn, Policy::kPfwm},
                      unsigned threads = 0);

}  // namespace eertrack
