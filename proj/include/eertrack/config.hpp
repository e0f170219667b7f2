#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "eertrack/dmmn.hpp"
#include "eertrack/entropy.hpp"
#include "eertrack/geometry.hpp"
#include "eertrack/guidance.hpp"
#include "eertrack/particle_filter.hpp"
#include "eertrack/road_network.hpp"

namespace eertrack {

enum class MotionModelKind { kDmmn, kConstantVelocity };

struct FilterConfig {
  std::size_t n = 500;
  ResampleThresholds thresholds;
  int k_in = 10;
  // Missed-detection model: 0 ignores empty scans, 1 treats the sensor as perfect.
  double detection_probability = 0.9;
};

struct RateConfig {
  double filter_hz = 3.0;
  double guidance_hz = 2.5;
};

/// Training run used by `train` and by episodes that have no weights file.
struct TrainingSetup {
  DmmnHyper hyper;
  TrainConfig optimizer{.augment_symmetries = true, .stationary_fraction = 0.02, .input_noise = 0.05};
  double trajectory_duration = 1800.0;  // seconds of simulated road-network driving
};

struct SimConfig {
  Workspace workspace;
  Pose2 fov_half_extents{0.75, 0.75};
  RoadNetwork road_network = RoadNetwork::default_network();
  Eigen::Matrix2d measurement_cov = Eigen::Matrix2d::Identity() * 0.0025;  // (0.05 m)^2 per axis
  double sigma_p = 0.05;
  FilterConfig filter;
  EerConfig eer;  // sigma_p, measurement_cov and fov_half_extents are copied from the fields above
  RateConfig rates;
  double duration = 90.0;
  double agent_max_speed = 1.0;
  Pose2 agent_start{9.5, 2.75};
  Policy guidance = Policy::kDmmnEer;
  MotionModelKind motion_model = MotionModelKind::kDmmn;
  std::uint64_t seed = 1;
  std::string model_weights;  // empty: train in-process
  TrainingSetup train;
  double lawn_row_spacing = 0.9;  // fraction of the FOV height

  /// Default workspace with one square occlusion zone around road node A.
  static SimConfig defaults();

  /// Cross-checks every field; throws ConfigError listing each problem found.
  void validate() const;

  /// EerConfig with the shared noise and footprint fields filled in.
  EerConfig planner_config() const;
};

/// Parses a JSON config. Keys absent from the file keep their defaults; unknown keys are errors.
SimConfig parse_config(const std::string& text);
SimConfig load_config(const std::string& path);
std::string dump_config(const SimConfig& cfg);

std::string to_string(MotionModelKind k);

}  // namespace eertrack
