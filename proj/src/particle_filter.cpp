#include "eertrack/particle_filter.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numbers>

#include "eertrack/errors.hpp"

namespace eertrack {

double ParticleSet::weight_sum() const {
  double s = 0.0;
  for (const auto& p : particles) s += p.weight;
  return s;
}

std::vector<Pose2> ParticleSet::poses() const {
  std::vector<Pose2> out;
  out.reserve(particles.size());
  for (const auto& p : particles) out.push_back(p.pose());
  return out;
}

std::vector<double> ParticleSet::weights() const {
  std::vector<double> out;
  out.reserve(particles.size());
  for (const auto& p : particles) out.push_back(p.weight);
  return out;
}

std::vector<HistoryWindow> ParticleSet::histories() const {
  std::vector<HistoryWindow> out;
  out.reserve(particles.size());
  for (const auto& p : particles) out.push_back(p.history);
  return out;
}

MeasurementModel::MeasurementModel(const Eigen::Matrix2d& cov) : cov_(cov) {
  if (!cov.allFinite()) throw ConfigError("measurement covariance must be finite");
  if (std::abs(cov(0, 1) - cov(1, 0)) > 1e-12) throw ConfigError("measurement covariance must be symmetric");
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) throw ConfigError("measurement covariance must be positive definite");
  inv_ = cov.inverse();
  chol_ = cov.llt().matrixL();
  log_norm_ = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(cov.determinant());
}

double MeasurementModel::log_likelihood(const Pose2& z, const Pose2& x) const {
  const Eigen::Vector2d d(z.x - x.x, z.y - x.y);
  return log_norm_ - 0.5 * d.dot(inv_ * d);
}

double MeasurementModel::likelihood(const Pose2& z, const Pose2& x) const { return std::exp(log_likelihood(z, x)); }

Pose2 MeasurementModel::sample(const Pose2& x, Rng& rng) const {
  const double n0 = standard_normal(rng);
  const double n1 = standard_normal(rng);
  return {x.x + chol_(0, 0) * n0, x.y + chol_(1, 0) * n0 + chol_(1, 1) * n1};
}

Pose2 MeasurementModel::sigmas() const { return {std::sqrt(cov_(0, 0)), std::sqrt(cov_(1, 1))}; }

ParticleSet init_particles(const Rect& region, std::size_t n, int k_in, double dt, Rng& rng, double t0) {
  if (n < 1) throw ConfigError("particle count must be at least 1");
  if (!region.valid()) throw ConfigError("particle initialization region is empty");
  ParticleSet ps;
  ps.particles.reserve(n);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = uniform(rng, region.min_x, region.max_x);
    const double y = uniform(rng, region.min_y, region.max_y);
    Particle p;
    p.history = HistoryWindow::constant({x, y}, static_cast<std::size_t>(k_in), dt, t0);
    p.history.fresh = true;
    p.weight = w;
    ps.particles.push_back(std::move(p));
  }
  return ps;
}

ParticleSet predict(const ParticleSet& ps, const MotionModel& model, double sigma_p, Rng& rng,
                    std::vector<Pose2>* means) {
  ParticleSet out = ps;
  const std::vector<HistoryWindow> windows = ps.histories();
  const std::vector<Pose2> mean = model.predict(windows, rng);
  for (std::size_t i = 0; i < out.particles.size(); ++i) {
    const double nx = standard_normal(rng);
    const double ny = standard_normal(rng);
    out.particles[i].history.push(mean[i] + Pose2{nx, ny} * sigma_p);
  }
  out.step = ps.step + 1;
  out.degenerate = false;
  out.last_resample = ResampleKind::kNone;
  if (means) *means = mean;
  return out;
}

ParticleSet update(const ParticleSet& ps, const Pose2& z, const MeasurementModel& mm) {
  if (!z.finite()) throw ConfigError("measurement must be finite");
  ParticleSet out = ps;
  const std::size_t n = ps.size();
  std::vector<double> log_lik(n);
  double max_ll = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    log_lik[i] = mm.log_likelihood(z, ps.particles[i].pose());
    max_ll = std::max(max_ll, log_lik[i]);
  }
  out.degenerate = false;
  // Every likelihood below the smallest normal double counts as underflow.
  if (!(max_ll > std::log(DBL_MIN))) {
    for (auto& p : out.particles) p.weight = 1.0 / static_cast<double>(n);
    out.degenerate = true;
    return out;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.particles[i].weight = ps.particles[i].weight * std::exp(log_lik[i] - max_ll);
    total += out.particles[i].weight;
  }
  if (!(total > 0.0)) {
    for (auto& p : out.particles) p.weight = 1.0 / static_cast<double>(n);
    out.degenerate = true;
    return out;
  }
  for (auto& p : out.particles) p.weight /= total;
  return out;
}

ParticleSet update_missed(const ParticleSet& ps, const SensorFootprint& fov, double p_detect) {
  if (!(p_detect >= 0.0 && p_detect <= 1.0)) throw ConfigError("detection probability must lie in [0, 1]");
  ParticleSet out = ps;
  double total = 0.0;
  for (auto& p : out.particles) {
    if (fov_contains(fov, p.pose())) p.weight *= 1.0 - p_detect;
    total += p.weight;
  }
  if (!(total > 0.0)) {
    for (auto& p : out.particles) p.weight = 1.0 / static_cast<double>(out.size());
    out.degenerate = true;
    return out;
  }
  for (auto& p : out.particles) p.weight /= total;
  return out;
}

ParticleSet restrict_to(const ParticleSet& ps, const Rect& region) {
  ParticleSet out = ps;
  double total = 0.0;
  for (auto& p : out.particles) {
    if (!region.contains(p.pose())) p.weight = 0.0;
    total += p.weight;
  }
  if (!(total > 0.0)) {
    for (auto& p : out.particles) p.weight = 1.0 / static_cast<double>(out.size());
    out.degenerate = true;
    return out;
  }
  for (auto& p : out.particles) p.weight /= total;
  return out;
}

double effective_sample_size(const ParticleSet& ps) {
  double sq = 0.0;
  for (const auto& p : ps.particles) sq += p.weight * p.weight;
  return sq > 0.0 ? 1.0 / sq : 0.0;
}

namespace {

/// Index drawn proportional to weight via the cumulative table.
std::size_t draw_index(const std::vector<double>& cumulative, Rng& rng) {
  const double u = uniform(rng, 0.0, cumulative.back());
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

std::vector<double> cumulative_weights(const ParticleSet& ps) {
  std::vector<double> c(ps.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    acc += ps.particles[i].weight;
    c[i] = acc;
  }
  return c;
}

}  // namespace

ParticleSet resample(const ParticleSet& ps, const ResampleThresholds& th, const Rect& recovery_region, Rng& rng) {
  const std::size_t n = ps.size();
  const double ratio = ps.degenerate ? 0.0 : effective_sample_size(ps) / static_cast<double>(n);
  ParticleSet out;
  out.step = ps.step;
  out.particles.reserve(n);
  const double w = 1.0 / static_cast<double>(n);
  if (ratio < th.uniform) {
    if (!recovery_region.valid()) throw ConfigError("recovery region is empty");
    const std::vector<double> cumulative = cumulative_weights(ps);
    for (std::size_t i = 0; i < n; ++i) {
      const Pose2 at{uniform(rng, recovery_region.min_x, recovery_region.max_x),
                     uniform(rng, recovery_region.min_y, recovery_region.max_y)};
      const Particle& donor = ps.particles[draw_index(cumulative, rng)];
      Particle p;
      p.history = donor.history.translated(at - donor.pose());
      p.history.fresh = true;
      p.weight = w;
      out.particles.push_back(std::move(p));
    }
    out.last_resample = ResampleKind::kUniform;
  } else if (ratio < th.multinomial) {
    const std::vector<double> cumulative = cumulative_weights(ps);
    for (std::size_t i = 0; i < n; ++i) {
      Particle p = ps.particles[draw_index(cumulative, rng)];
      p.weight = w;
      out.particles.push_back(std::move(p));
    }
    out.last_resample = ResampleKind::kMultinomial;
  } else {
    out = ps;
    out.last_resample = ResampleKind::kNone;
  }
  out.degenerate = false;
  return out;
}

Pose2 weighted_mean(const ParticleSet& ps) {
  Pose2 mu;
  for (const auto& p : ps.particles) mu += p.pose() * p.weight;
  return mu;
}

Eigen::Matrix2d covariance(const ParticleSet& ps) {
  const Pose2 mu = weighted_mean(ps);
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : ps.particles) {
    const Eigen::Vector2d d(p.pose().x - mu.x, p.pose().y - mu.y);
    cov += p.weight * d * d.transpose();
  }
  cov(1, 0) = cov(0, 1);
  return cov;
}

ParticleSet subsample(const ParticleSet& ps, std::size_t n_h, Rng& rng) {
  if (n_h < 1 || n_h > ps.size()) throw ConfigError("subsample size must lie in [1, N]");
  const std::vector<double> cumulative = cumulative_weights(ps);
  const double total = cumulative.back();
  const double step = total / static_cast<double>(n_h);
  double u = uniform(rng, 0.0, step);
  ParticleSet out;
  out.step = ps.step;
  out.particles.reserve(n_h);
  std::size_t idx = 0;
  for (std::size_t m = 0; m < n_h; ++m, u += step) {
    while (idx + 1 < ps.size() && cumulative[idx] <= u) ++idx;
    Particle p = ps.particles[idx];
    p.weight = 1.0 / static_cast<double>(n_h);
    out.particles.push_back(std::move(p));
  }
  return out;
}

}  // namespace eertrack
