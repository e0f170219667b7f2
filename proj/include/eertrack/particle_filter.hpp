#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "eertrack/dmmn.hpp"
#include "eertrack/geometry.hpp"
#include "eertrack/motion_model.hpp"
#include "eertrack/rng.hpp"

namespace eertrack {

struct Particle {
  HistoryWindow history;  // newest pose is the particle's state hypothesis
  double weight = 0.0;

  const Pose2& pose() const { return history.newest(); }
};

enum class ResampleKind { kNone, kMultinomial, kUniform };

struct ParticleSet {
  std::vector<Particle> particles;
  long step = 0;
  /// Raised by update() when every likelihood underflowed.
  bool degenerate = false;
  ResampleKind last_resample = ResampleKind::kNone;

  std::size_t size() const { return particles.size(); }
  double weight_sum() const;
  std::vector<Pose2> poses() const;
  std::vector<double> weights() const;
  std::vector<HistoryWindow> histories() const;
};

/// Gaussian measurement noise z ~ N(x, cov).
class MeasurementModel {
 public:
  explicit MeasurementModel(const Eigen::Matrix2d& cov);
  static MeasurementModel isotropic(double sigma) { return MeasurementModel(Eigen::Matrix2d::Identity() * sigma * sigma); }

  const Eigen::Matrix2d& covariance() const { return cov_; }
  double log_likelihood(const Pose2& z, const Pose2& x) const;
  double likelihood(const Pose2& z, const Pose2& x) const;
  Pose2 sample(const Pose2& x, Rng& rng) const;
  /// Per-axis standard deviations.
  Pose2 sigmas() const;

 private:
  Eigen::Matrix2d cov_;
  Eigen::Matrix2d inv_;
  Eigen::Matrix2d chol_;
  double log_norm_;
};

struct ResampleThresholds {
  double multinomial = 0.9;  // a
  double uniform = 0.3;      // b
};

/// N particles uniform over `region`, each history the sampled position repeated K_in times.
ParticleSet init_particles(const Rect& region, std::size_t n, int k_in, double dt, Rng& rng, double t0 = 0.0);

/// Moves every particle through the motion model plus N(0, sigma_p^2 I) noise.
/// When `means` is non-null it receives the noise-free predictions.
ParticleSet predict(const ParticleSet& ps, const MotionModel& model, double sigma_p, Rng& rng,
                    std::vector<Pose2>* means = nullptr);

ParticleSet update(const ParticleSet& ps, const Pose2& z, const MeasurementModel& mm);

/// Negative information after a missed detection: particles inside the footprint are scaled
/// by 1 - p_detect. Occlusion zones are unknown to the tracker, so they play no part here.
/// Marks the set degenerate when no weight survives.
ParticleSet update_missed(const ParticleSet& ps, const SensorFootprint& fov, double p_detect);

/// Zeroes the weight of particles outside `region` (the target cannot leave it) and
/// renormalizes. When no particle is left inside, weights become uniform and the
/// set is flagged degenerate.
ParticleSet restrict_to(const ParticleSet& ps, const Rect& region);

double effective_sample_size(const ParticleSet& ps);

/// r = N_eff / N. Below b (or after a degenerate update) the particles are redrawn
/// uniformly over `recovery_region`, each keeping the motion history of a
/// weight-sampled donor; below a, multinomial resampling; otherwise unchanged.
ParticleSet resample(const ParticleSet& ps, const ResampleThresholds& th, const Rect& recovery_region, Rng& rng);

Pose2 weighted_mean(const ParticleSet& ps);
Eigen::Matrix2d covariance(const ParticleSet& ps);

/// Systematic resampling of n_h particles proportional to weight; result has uniform weights.
ParticleSet subsample(const ParticleSet& ps, std::size_t n_h, Rng& rng);

}  // namespace eertrack
