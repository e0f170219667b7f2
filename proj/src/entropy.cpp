#include "eertrack/entropy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "eertrack/errors.hpp"
#include "eertrack/motion_model.hpp"

namespace eertrack {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double w) { return w > 0.0 ? std::log(w) : kNegInf; }

/// log(sum_j exp(a_j)), max-shifted; -inf when every term is -inf.
template <class Get>
double log_sum_exp(std::size_t n, Get&& term) {
  double m = kNegInf;
  for (std::size_t j = 0; j < n; ++j) m = std::max(m, term(j));
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::exp(term(j) - m);
  return m + std::log(s);
}

/// log(sum_j K_ij v_j) for every row i.
std::vector<double> log_predictive(const Eigen::MatrixXd& log_kernel, std::span<const double> prev_weights) {
  const auto rows = static_cast<std::size_t>(log_kernel.rows());
  std::vector<double> log_v(prev_weights.size());
  std::transform(prev_weights.begin(), prev_weights.end(), log_v.begin(), safe_log);
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    out[i] = log_sum_exp(log_v.size(), [&](std::size_t j) {
      return log_kernel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) + log_v[j];
    });
  }
  return out;
}

void check_shapes(const Eigen::MatrixXd& log_kernel, std::size_t prev, std::size_t cur) {
  if (static_cast<std::size_t>(log_kernel.cols()) != prev || static_cast<std::size_t>(log_kernel.rows()) != cur) {
    throw ConfigError("entropy kernel shape does not match the weight vectors");
  }
}

}  // namespace

EntropyValue entropy_prior_terms(const Eigen::MatrixXd& log_kernel, std::span<const double> prev_weights,
                                 std::span<const double> weights, double fallback) {
  check_shapes(log_kernel, prev_weights.size(), weights.size());
  const std::vector<double> lp = log_predictive(log_kernel, prev_weights);
  double h = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    if (!std::isfinite(lp[i])) return {fallback, true};
    h -= weights[i] * lp[i];
  }
  return {h, false};
}

EntropyValue entropy_posterior_terms(const Eigen::MatrixXd& log_kernel, std::span<const double> log_lik,
                                     std::span<const double> prev_weights, std::span<const double> post_weights,
                                     double fallback) {
  check_shapes(log_kernel, prev_weights.size(), post_weights.size());
  if (log_lik.size() != post_weights.size() || prev_weights.size() != post_weights.size()) {
    throw ConfigError("posterior entropy needs index-aligned likelihoods and weights");
  }
  const double evidence = log_sum_exp(log_lik.size(), [&](std::size_t i) { return log_lik[i] + safe_log(prev_weights[i]); });
  if (!std::isfinite(evidence)) return {fallback, true};
  const std::vector<double> lp = log_predictive(log_kernel, prev_weights);
  double h = evidence;
  for (std::size_t i = 0; i < post_weights.size(); ++i) {
    if (post_weights[i] <= 0.0) continue;
    const double term = log_lik[i] + lp[i];
    if (!std::isfinite(term)) return {fallback, true};
    h -= post_weights[i] * term;
  }
  return {h, false};
}

Eigen::MatrixXd gaussian_log_kernel(std::span<const Pose2> points, std::span<const Pose2> means, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("kernel sigma must be positive");
  const auto rows = static_cast<Eigen::Index>(points.size());
  const auto cols = static_cast<Eigen::Index>(means.size());
  Eigen::MatrixXd k(rows, cols);
  const double inv_var = 1.0 / (sigma * sigma);
  const double log_norm = -std::log(2.0 * std::numbers::pi * sigma * sigma);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const Pose2 d = points[static_cast<std::size_t>(i)] - means[static_cast<std::size_t>(j)];
      k(i, j) = log_norm - 0.5 * (d.x * d.x + d.y * d.y) * inv_var;
    }
  }
  return k;
}

EntropyValue entropy_posterior(const ParticleSet& sub, const ParticleSet& prev, const Pose2& z, const DmmnParams& model,
                               const MeasurementModel& mm, double sigma_p, double fallback) {
  if (sub.size() != prev.size()) throw ConfigError("entropy needs index-aligned current and previous particles");
  const std::vector<Pose2> means = forward_batch(model, prev.histories());
  const std::vector<Pose2> points = sub.poses();
  const Eigen::MatrixXd log_kernel = gaussian_log_kernel(points, means, sigma_p);
  std::vector<double> log_lik(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) log_lik[i] = mm.log_likelihood(z, points[i]);
  return entropy_posterior_terms(log_kernel, log_lik, prev.weights(), sub.weights(), fallback);
}

EntropyValue entropy_prior(const ParticleSet& sub, const ParticleSet& prev, const DmmnParams& model, double sigma_p,
                           double fallback) {
  if (sub.size() != prev.size()) throw ConfigError("entropy needs index-aligned current and previous particles");
  const std::vector<Pose2> means = forward_batch(model, prev.histories());
  const std::vector<Pose2> points = sub.poses();
  return entropy_prior_terms(gaussian_log_kernel(points, means, sigma_p), prev.weights(), prev.weights(), fallback);
}

void EerConfig::validate(std::size_t n_particles) const {
  if (n_h < 1 || n_h > n_particles) throw ConfigError("N_H must lie in [1, N]");
  if (n_m < 1) throw ConfigError("N_M must be at least 1");
  if (horizon < 1) throw ConfigError("planning horizon K must be at least 1");
  if (grid < 1) throw ConfigError("candidate grid size must be at least 1");
  if (!(sigma_p > 0.0)) throw ConfigError("sigma_p must be positive");
  if (!(fov_half_extents.x > 0.0) || !(fov_half_extents.y > 0.0)) throw ConfigError("FOV half extents must be positive");
  MeasurementModel check(measurement_cov);
  (void)check;
}

namespace {

/// Window one step earlier: newest pose dropped, oldest repeated.
HistoryWindow previous_window(const HistoryWindow& w) {
  HistoryWindow p = w;
  std::rotate(p.poses.rbegin(), p.poses.rbegin() + 1, p.poses.rend());
  p.poses.front() = p.poses[1];
  for (auto& t : p.times) t -= w.dt;
  return p;
}

}  // namespace

PlanningSample prepare_planning(const ParticleSet& ps, const DmmnParams& model, const EerConfig& cfg,
                                const Workspace& ws, const std::optional<Pose2>& last_z, Rng& rng) {
  cfg.validate(ps.size());
  const MeasurementModel mm(cfg.measurement_cov);
  const double fallback = std::log(ws.bounds.area());
  const ParticleSet sub = subsample(ps, cfg.n_h, rng);
  const std::vector<HistoryWindow> windows = sub.histories();
  const std::vector<double> w = sub.weights();
  const std::size_t n = sub.size();

  PlanningSample out;

  // Current entropy from one-step kernels on the subsample.
  {
    std::vector<HistoryWindow> earlier;
    earlier.reserve(n);
    for (const auto& h : windows) earlier.push_back(previous_window(h));
    const std::vector<Pose2> means = forward_batch(model, earlier);
    const std::vector<Pose2> points = sub.poses();
    const Eigen::MatrixXd log_kernel = gaussian_log_kernel(points, means, cfg.sigma_p);
    if (last_z) {
      std::vector<double> log_lik(n);
      std::vector<double> post(n);
      for (std::size_t i = 0; i < n; ++i) log_lik[i] = mm.log_likelihood(*last_z, points[i]);
      const double m = *std::max_element(log_lik.begin(), log_lik.end());
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += post[i] = w[i] * std::exp(log_lik[i] - m);
      for (auto& p : post) p /= total;
      out.current_entropy = entropy_posterior_terms(log_kernel, log_lik, w, post, fallback);
    } else {
      out.current_entropy = entropy_prior_terms(log_kernel, w, w, fallback);
    }
  }

  // K-step rollout; kernel variance accumulates as K * sigma_p^2.
  const std::vector<Pose2> means = rollout_batch(model, windows, cfg.horizon);
  const double sigma_k = cfg.sigma_p * std::sqrt(static_cast<double>(cfg.horizon));
  out.rolled.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double nx = standard_normal(rng);
    const double ny = standard_normal(rng);
    out.rolled[i] = means[i] + Pose2{nx, ny} * sigma_k;
  }
  const Eigen::MatrixXd log_kernel = gaussian_log_kernel(out.rolled, means, sigma_k);
  out.prior_entropy = entropy_prior_terms(log_kernel, w, w, fallback);

  // Every rolled particle passes through the measurement model N_M times.
  std::vector<double> log_weight;
  std::vector<double> log_lik(n);
  std::vector<double> post(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < cfg.n_m; ++m) {
      const Pose2 z = mm.sample(out.rolled[i], rng);
      for (std::size_t l = 0; l < n; ++l) log_lik[l] = mm.log_likelihood(z, out.rolled[l]);
      const double peak = *std::max_element(log_lik.begin(), log_lik.end());
      double total = 0.0;
      for (std::size_t l = 0; l < n; ++l) total += post[l] = w[l] * std::exp(log_lik[l] - peak);
      for (auto& p : post) p /= total;
      const EntropyValue h = entropy_posterior_terms(log_kernel, log_lik, w, post, fallback);
      out.measurements.push_back(z);
      out.posterior_entropy.push_back(h.nats);
      out.posterior_flagged.push_back(h.uninformative);
      log_weight.push_back(log_lik[i]);
    }
  }
  const double peak = *std::max_element(log_weight.begin(), log_weight.end());
  double total = 0.0;
  out.measurement_weights.resize(log_weight.size());
  for (std::size_t m = 0; m < log_weight.size(); ++m) {
    total += out.measurement_weights[m] = std::exp(log_weight[m] - peak);
  }
  for (auto& v : out.measurement_weights) v /= total;
  return out;
}

double score_waypoint(const PlanningSample& sample, const Pose2& waypoint, const EerConfig& cfg, const Workspace& ws) {
  const SensorFootprint fov(waypoint, cfg.fov_half_extents);
  double expected = 0.0;
  for (std::size_t m = 0; m < sample.measurements.size(); ++m) {
    const Pose2& z = sample.measurements[m];
    const bool seen = cfg.known_occlusion ? is_observable(ws, fov, z) : fov_contains(fov, z);
    expected += sample.measurement_weights[m] * (seen ? sample.posterior_entropy[m] : sample.prior_entropy.nats);
  }
  return sample.current_entropy.nats - expected;
}

double expected_entropy_reduction(const ParticleSet& ps, const Waypoint& wp, const DmmnParams& model,
                                  const EerConfig& cfg, const Workspace& ws, Rng& rng,
                                  const std::optional<Pose2>& last_z) {
  EerConfig c = cfg;
  c.horizon = wp.horizon;
  const PlanningSample sample = prepare_planning(ps, model, c, ws, last_z, rng);
  return score_waypoint(sample, wp.position, c, ws);
}

std::vector<Waypoint> candidate_waypoints(const Pose2& agent, double v_max, double dt, const EerConfig& cfg,
                                          const Rect& bounds) {
  if (!(v_max > 0.0)) throw ConfigError("agent max speed must be positive");
  const double radius = v_max * cfg.horizon * dt;
  std::vector<Waypoint> out;
  out.push_back({bounds.clamp(agent), cfg.horizon});
  const int n = cfg.grid;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double fx = n == 1 ? 0.0 : -1.0 + 2.0 * c / (n - 1);
      const double fy = n == 1 ? 0.0 : -1.0 + 2.0 * r / (n - 1);
      if (fx * fx + fy * fy > 1.0 + 1e-12) continue;
      const Pose2 p = bounds.clamp(agent + Pose2{fx, fy} * radius);
      const bool duplicate = std::any_of(out.begin(), out.end(), [&](const Waypoint& w) { return w.position == p; });
      if (!duplicate) out.push_back({p, cfg.horizon});
    }
  }
  return out;
}

std::size_t argmax_first(std::span<const double> values) {
  if (values.empty()) throw ConfigError("argmax over an empty set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

EerResult best_waypoint(const ParticleSet& ps, const std::vector<Waypoint>& candidates, const DmmnParams& model,
                        const EerConfig& cfg, const Workspace& ws, Rng& rng, const std::optional<Pose2>& last_z) {
  const auto start = std::chrono::steady_clock::now();
  EerResult result;
  result.candidates = candidates;
  const PlanningSample sample = prepare_planning(ps, model, cfg, ws, last_z, rng);
  result.eer.reserve(candidates.size());
  for (const auto& c : candidates) result.eer.push_back(score_waypoint(sample, c.position, cfg, ws));
  result.chosen = argmax_first(result.eer);
  result.prior_entropy = sample.current_entropy.nats;
  result.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace eertrack
