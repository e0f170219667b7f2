#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eertrack/dmmn.hpp"

namespace eertrack {

/// Transition model used by the particle filter's prediction step: returns the
/// mean next position for each history (process noise is added by the caller).
class MotionModel {
 public:
  virtual ~MotionModel() = default;
  virtual std::vector<Pose2> predict(std::span<const HistoryWindow> windows, Rng& rng) const = 0;
  virtual std::string name() const = 0;
};

class DmmnMotionModel final : public MotionModel {
 public:
  explicit DmmnMotionModel(std::shared_ptr<const DmmnParams> params);
  std::vector<Pose2> predict(std::span<const HistoryWindow> windows, Rng& rng) const override;
  std::string name() const override { return "dmmn"; }
  const DmmnParams& params() const { return *params_; }

 private:
  std::shared_ptr<const DmmnParams> params_;
};

/// Constant-velocity baseline: velocity from the last two poses; fresh windows
/// get a random speed in [0, max_speed] with a random heading.
class ConstantVelocityModel final : public MotionModel {
 public:
  explicit ConstantVelocityModel(double max_speed = 0.7) : max_speed_(max_speed) {}
  std::vector<Pose2> predict(std::span<const HistoryWindow> windows, Rng& rng) const override;
  std::string name() const override { return "cv"; }

 private:
  double max_speed_;
};

Pose2 cv_predict(const HistoryWindow& w, Rng& rng, double max_speed = 0.7);

/// Isotropic Gaussian density N(x; mean, sigma^2 I) in m^-2, and its logarithm.
double gaussian_density(const Pose2& x, const Pose2& mean, double sigma);
double log_gaussian_density(const Pose2& x, const Pose2& mean, double sigma);

/// p(x_i | history_j): Gaussian around the one-step DMMN prediction.
double transition_density(const DmmnParams& model, const HistoryWindow& history_j, const Pose2& x_i, double sigma_p);

}  // namespace eertrack
