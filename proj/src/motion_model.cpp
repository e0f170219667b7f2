#include "eertrack/motion_model.hpp"

#include <cmath>
#include <numbers>

#include "eertrack/errors.hpp"

namespace eertrack {

DmmnMotionModel::DmmnMotionModel(std::shared_ptr<const DmmnParams> params) : params_(std::move(params)) {
  if (!params_) throw ConfigError("DMMN motion model needs parameters");
}

std::vector<Pose2> DmmnMotionModel::predict(std::span<const HistoryWindow> windows, Rng&) const {
  return forward_batch(*params_, windows);
}

std::vector<Pose2> ConstantVelocityModel::predict(std::span<const HistoryWindow> windows, Rng& rng) const {
  std::vector<Pose2> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(cv_predict(w, rng, max_speed_));
  return out;
}

Pose2 cv_predict(const HistoryWindow& w, Rng& rng, double max_speed) {
  if (w.size() < 2) throw ConfigError("constant-velocity prediction needs at least two poses");
  const Pose2& last = w.poses[w.size() - 1];
  if (w.fresh) {
    const double speed = uniform(rng, 0.0, max_speed);
    const double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    return last + Pose2{std::cos(heading), std::sin(heading)} * (speed * w.dt);
  }
  const Pose2& prev = w.poses[w.size() - 2];
  const double gap = w.times[w.size() - 1] - w.times[w.size() - 2];
  return last + (last - prev) * (w.dt / gap);
}

double gaussian_density(const Pose2& x, const Pose2& mean, double sigma) {
  return std::exp(log_gaussian_density(x, mean, sigma));
}

double log_gaussian_density(const Pose2& x, const Pose2& mean, double sigma) {
  const Pose2 d = x - mean;
  const double var = sigma * sigma;
  return -0.5 * (d.x * d.x + d.y * d.y) / var - std::log(2.0 * std::numbers::pi * var);
}

double transition_density(const DmmnParams& model, const HistoryWindow& history_j, const Pose2& x_i, double sigma_p) {
  if (!(sigma_p > 0.0)) throw ConfigError("transition density needs sigma_p > 0");
  return gaussian_density(x_i, forward(model, history_j), sigma_p);
}

}  // namespace eertrack
