#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

#include "eertrack/dmmn.hpp"
#include "eertrack/geometry.hpp"
#include "eertrack/particle_filter.hpp"

namespace eertrack {

/// Particle entropy estimate in nats. `uninformative` marks the fallback value
/// returned when a log-sum had no support (all kernels or weights zero).
struct EntropyValue {
  double nats = 0.0;
  bool uninformative = false;
};

/// Prior-particle entropy
///   H = -sum_i w_i log(sum_j K_ij v_j)
/// with log_kernel(i, j) = log p(x_i | x'_j), v the previous weights and w the
/// weights of the x_i. All sums are taken in log space.
EntropyValue entropy_prior_terms(const Eigen::MatrixXd& log_kernel, std::span<const double> prev_weights,
                                 std::span<const double> weights, double fallback);

/// Posterior-particle entropy after a measurement z
///   H = log(sum_i L_i v_i) - sum_i u_i [log L_i + log(sum_j K_ij v_j)]
/// with log_lik(i) = log p(z | x_i), v the pre-update weights and u the updated weights.
EntropyValue entropy_posterior_terms(const Eigen::MatrixXd& log_kernel, std::span<const double> log_lik,
                                     std::span<const double> prev_weights, std::span<const double> post_weights,
                                     double fallback);

/// log_kernel(i, j) = log N(points_i; means_j, sigma^2 I).
Eigen::MatrixXd gaussian_log_kernel(std::span<const Pose2> points, std::span<const Pose2> means, double sigma);

/// Entropy of the posterior represented by `sub` after measurement z. `prev` holds the
/// index-aligned particles of the previous step; its weights are the pre-update weights
/// and its histories define the one-step transition kernels. The weights of `sub` are
/// the updated weights.
EntropyValue entropy_posterior(const ParticleSet& sub, const ParticleSet& prev, const Pose2& z, const DmmnParams& model,
                               const MeasurementModel& mm, double sigma_p, double fallback);

/// Entropy of the prediction represented by `sub` (no measurement).
EntropyValue entropy_prior(const ParticleSet& sub, const ParticleSet& prev, const DmmnParams& model, double sigma_p,
                           double fallback);

struct Waypoint {
  Pose2 position;
  int horizon = 5;
};

struct EerConfig {
  std::size_t n_h = 25;
  std::size_t n_m = 1;
  int horizon = 5;  // K
  double sigma_p = 0.05;
  Eigen::Matrix2d measurement_cov = Eigen::Matrix2d::Identity() * 0.05 * 0.05;
  int grid = 5;  // n x n candidate grid
  Pose2 fov_half_extents{0.75, 0.75};
  /// Planner tests true occlusion as well as FOV membership (ablation only).
  bool known_occlusion = false;

  void validate(std::size_t n_particles) const;
};

/// Shared random draws for one planning cycle: subsample, K-step rollouts and
/// hypothetical measurements. Every candidate is scored against the same sample.
struct PlanningSample {
  std::vector<Pose2> rolled;        // x-hat_{k+K}, one per subsampled particle
  std::vector<Pose2> measurements;  // N_H * N_M hypothetical measurements
  std::vector<double> measurement_weights;  // normalized likelihood weights
  std::vector<double> posterior_entropy;    // per hypothetical measurement
  std::vector<bool> posterior_flagged;
  EntropyValue prior_entropy;    // no measurement at k+K
  EntropyValue current_entropy;  // H(p(x_k | z_1:k))
};

/// `last_z` is the measurement of the current step, if any; it selects the
/// posterior or prior form of the current entropy.
PlanningSample prepare_planning(const ParticleSet& ps, const DmmnParams& model, const EerConfig& cfg,
                                const Workspace& ws, const std::optional<Pose2>& last_z, Rng& rng);

double score_waypoint(const PlanningSample& sample, const Pose2& waypoint, const EerConfig& cfg, const Workspace& ws);

double expected_entropy_reduction(const ParticleSet& ps, const Waypoint& wp, const DmmnParams& model,
                                  const EerConfig& cfg, const Workspace& ws, Rng& rng,
                                  const std::optional<Pose2>& last_z = std::nullopt);

/// Hover point first, then the n x n grid points inside the disc of radius v_max*K*dt
/// (row-major from the lowest row), clipped to the workspace bounds.
std::vector<Waypoint> candidate_waypoints(const Pose2& agent, double v_max, double dt, const EerConfig& cfg,
                                          const Rect& bounds);

struct EerResult {
  std::vector<Waypoint> candidates;
  std::vector<double> eer;
  std::size_t chosen = 0;
  double prior_entropy = 0.0;
  double wall_time_ms = 0.0;

  const Waypoint& best() const { return candidates.at(chosen); }
};

/// Index of the largest value; ties resolve to the smallest index.
std::size_t argmax_first(std::span<const double> values);

EerResult best_waypoint(const ParticleSet& ps, const std::vector<Waypoint>& candidates, const DmmnParams& model,
                        const EerConfig& cfg, const Workspace& ws, Rng& rng,
                        const std::optional<Pose2>& last_z = std::nullopt);

}  // namespace eertrack
