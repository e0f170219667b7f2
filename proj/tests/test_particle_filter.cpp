#include <Eigen/Eigenvalues>
#include <cmath>
#include <set>
#include <numbers>

#include "doctest.h"
#include "eertrack/errors.hpp"
#include "eertrack/particle_filter.hpp"
#include "test_support.hpp"

using namespace eertrack;
using namespace eertrack::testing;

namespace {

ParticleSet make_set(const std::vector<Pose2>& poses, const std::vector<double>& weights, std::size_t k_in = 3) {
  ParticleSet ps;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    Particle p;
    p.history = HistoryWindow::constant(poses[i], k_in, 1.0 / 3.0);
    p.weight = weights[i];
    ps.particles.push_back(p);
  }
  return ps;
}

ParticleSet random_set(std::size_t n, Rng& rng) {
  std::vector<Pose2> poses;
  std::vector<double> w;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    poses.push_back({uniform(rng, 0.0, 11.0), uniform(rng, 0.0, 5.5)});
    w.push_back(uniform(rng, 0.01, 1.0));
    total += w.back();
  }
  for (auto& x : w) x /= total;
  return make_set(poses, w);
}

/// Moves every particle by a fixed offset, ignoring the history.
class ShiftModel final : public MotionModel {
 public:
  explicit ShiftModel(Pose2 d) : d_(d) {}
  std::vector<Pose2> predict(std::span<const HistoryWindow> windows, Rng&) const override {
    std::vector<Pose2> out;
    for (const auto& w : windows) out.push_back(w.newest() + d_);
    return out;
  }
  std::string name() const override { return "shift"; }

 private:
  Pose2 d_;
};

double ess_ratio(const std::vector<double>& w) {
  double sq = 0.0;
  for (double x : w) sq += x * x;
  return 1.0 / sq / static_cast<double>(w.size());
}

const Rect kWorld{0.0, 0.0, 11.0, 5.5};

}  // namespace

TEST_SUITE("particle_filter") {
  TEST_CASE("initialization draws N particles with equal weights inside the region") {
    Rng rng(1);
    const auto ps = init_particles(kWorld, 500, 10, 1.0 / 3.0, rng);
    REQUIRE(ps.size() == 500);
    for (const auto& p : ps.particles) {
      CHECK(p.weight == doctest::Approx(0.002).epsilon(1e-12));
      CHECK(kWorld.contains(p.pose()));
      CHECK(p.history.size() == 10);
      CHECK(p.history.fresh);
      CHECK(p.history.poses.front() == p.pose());
    }
    CHECK(std::abs(ps.weight_sum() - 1.0) < 1e-9);
  }

  TEST_CASE("initialization is uniform over the region") {
    Rng rng(2);
    const auto ps = init_particles(kWorld, 20000, 2, 1.0, rng);
    int left = 0;
    double sx = 0.0;
    for (const auto& p : ps.particles) {
      left += p.pose().x < 5.5;
      sx += p.pose().x;
    }
    CHECK(std::abs(left - 10000) < 4 * 71);  // 4 sigma of a fair binomial
    CHECK(std::abs(sx / 20000.0 - 5.5) < 4 * 11.0 / std::sqrt(12.0 * 20000.0));
  }

  TEST_CASE("initialization rejects bad arguments") {
    Rng rng(1);
    CHECK_THROWS_AS(init_particles(kWorld, 0, 10, 1.0, rng), ConfigError);
    CHECK_THROWS_AS(init_particles(Rect{1, 1, 1, 2}, 10, 10, 1.0, rng), ConfigError);
  }

  TEST_CASE("prediction leaves weights unchanged and adds unbiased process noise") {
    Rng rng(3);
    const std::size_t n = 4000;
    auto ps = make_set(std::vector<Pose2>(n, Pose2{5.0, 2.0}), std::vector<double>(n, 1.0 / n));
    ps.particles[0].weight = 2.0 / n;
    ps.particles[1].weight = 0.0;
    const ShiftModel model({0.1, -0.2});
    std::vector<Pose2> means;
    const double sigma_p = 0.05;
    const auto out = predict(ps, model, sigma_p, rng, &means);
    CHECK(out.step == ps.step + 1);
    double sx = 0.0, sy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(out.particles[i].weight == ps.particles[i].weight);
      CHECK(means[i] == Pose2{5.1, 1.8});
      const Pose2 d = out.particles[i].pose() - means[i];
      sx += d.x;
      sy += d.y;
      sxx += d.x * d.x;
    }
    const double bound = 4.0 * sigma_p / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(sx / n) < bound);
    CHECK(std::abs(sy / n) < bound);
    CHECK(std::sqrt(sxx / n) == doctest::Approx(sigma_p).epsilon(0.05));
    // The history shifts by one entry.
    CHECK(out.particles[0].history.poses[1] == ps.particles[0].history.poses[2]);
  }

  TEST_CASE("update: symmetry and the Gaussian weight ratio") {
    const auto mm = MeasurementModel::isotropic(0.05);
    const auto eq = update(make_set({{1.0, 0.0}, {-1.0, 0.0}}, {0.5, 0.5}), {0.0, 0.0}, mm);
    CHECK(eq.particles[0].weight == doctest::Approx(eq.particles[1].weight));
    const auto r = update(make_set({{2.0, 2.0}, {2.15, 2.0}}, {0.5, 0.5}), {2.0, 2.0}, mm);
    CHECK(r.particles[0].weight / r.particles[1].weight == doctest::Approx(std::exp(4.5)).epsilon(1e-9));
    CHECK(std::exp(4.5) == doctest::Approx(90.02).epsilon(1e-4));
  }

  TEST_CASE("update matches a brute-force Bayes rule") {
    Rng rng(5);
    Eigen::Matrix2d cov;
    cov << 0.04, 0.01, 0.01, 0.09;
    const MeasurementModel mm(cov);
    const std::vector<Pose2> x{{1.0, 1.0}, {1.2, 0.8}, {0.7, 1.3}};
    const std::vector<double> w{0.2, 0.5, 0.3};
    const Pose2 z{1.05, 1.1};
    // Bivariate normal density written out with the explicit 2x2 inverse.
    const double det = 0.04 * 0.09 - 0.01 * 0.01;
    auto pdf = [&](const Pose2& m) {
      const double dx = z.x - m.x, dy = z.y - m.y;
      const double q = (0.09 * dx * dx - 2.0 * 0.01 * dx * dy + 0.04 * dy * dy) / det;
      return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(det));
    };
    double total = 0.0;
    std::vector<double> expected(3);
    for (int i = 0; i < 3; ++i) total += expected[i] = w[i] * pdf(x[i]);
    const auto out = update(make_set(x, w), z, mm);
    for (int i = 0; i < 3; ++i) CHECK(out.particles[i].weight == doctest::Approx(expected[i] / total).epsilon(1e-12));
    CHECK(mm.likelihood(z, x[1]) == doctest::Approx(pdf(x[1])).epsilon(1e-12));
    CHECK_FALSE(out.degenerate);
  }

  TEST_CASE("update underflow resets to uniform and flags degeneracy") {
    const auto mm = MeasurementModel::isotropic(0.05);
    const auto out = update(make_set({{0.0, 0.0}, {1.0, 0.0}}, {0.3, 0.7}), {100.0, 100.0}, mm);
    CHECK(out.degenerate);
    CHECK(out.particles[0].weight == 0.5);
    CHECK(out.particles[1].weight == 0.5);
    CHECK_THROWS_AS(update(make_set({{0.0, 0.0}}, {1.0}), {NAN, 0.0}, mm), ConfigError);
  }

  TEST_CASE("measurement model validation and sampling") {
    Eigen::Matrix2d bad;
    bad << 1.0, 0.0, 0.0, -1.0;
    CHECK_THROWS_AS(MeasurementModel{bad}, ConfigError);
    bad << 1.0, 0.5, 0.2, 1.0;
    CHECK_THROWS_AS(MeasurementModel{bad}, ConfigError);
    Eigen::Matrix2d cov;
    cov << 0.04, 0.012, 0.012, 0.09;
    const MeasurementModel mm(cov);
    Rng rng(8);
    const int n = 40000;
    Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i) {
      const Pose2 s = mm.sample({1.0, 2.0}, rng);
      const Eigen::Vector2d d(s.x - 1.0, s.y - 2.0);
      acc += d * d.transpose();
    }
    acc /= n;
    CHECK(acc(0, 0) == doctest::Approx(0.04).epsilon(0.05));
    CHECK(acc(1, 1) == doctest::Approx(0.09).epsilon(0.05));
    CHECK(acc(0, 1) == doctest::Approx(0.012).epsilon(0.15));
  }

  TEST_CASE("resampling branch follows the effective sample size ratio") {
    const Rect region{0.0, 0.0, 1.0, 1.0};
    const ResampleThresholds th;
    CHECK(th.multinomial == 0.9);
    CHECK(th.uniform == 0.3);
    Rng rng(9);
    const std::size_t n = 10;
    std::vector<Pose2> poses;
    for (std::size_t i = 0; i < n; ++i) poses.push_back({5.0 + i, 3.0});

    SUBCASE("uniform weights are left alone") {
      const auto ps = make_set(poses, std::vector<double>(n, 0.1));
      const auto out = resample(ps, th, region, rng);
      CHECK(out.last_resample == ResampleKind::kNone);
      for (std::size_t i = 0; i < n; ++i) CHECK(out.particles[i].pose() == poses[i]);
    }
    SUBCASE("a near point mass triggers uniform reinitialization") {
      std::vector<double> w(n, 1e-6);
      w[3] = 1.0 - 9e-6;
      const auto out = resample(make_set(poses, w), th, region, rng);
      CHECK(out.last_resample == ResampleKind::kUniform);
      for (const auto& p : out.particles) {
        CHECK(region.contains(p.pose()));
        CHECK(p.weight == doctest::Approx(0.1));
        CHECK(p.history.fresh);
      }
    }
    SUBCASE("ratios on either side of each threshold") {
      // Two groups of equal weight: m heavy particles share mass q.
      auto weights_for_ratio = [&](std::size_t m, double q) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = i < m ? q / m : (1.0 - q) / (n - m);
        return w;
      };
      struct Case {
        std::size_t m;
        double q;
      };
      for (const Case c : {Case{1, 0.05}, Case{2, 0.5}, Case{5, 0.8}, Case{1, 0.5}, Case{1, 0.7}, Case{2, 0.9}}) {
        const auto w = weights_for_ratio(c.m, c.q);
        const double r = ess_ratio(w);
        const auto out = resample(make_set(poses, w), th, region, rng);
        const ResampleKind expected =
            r < 0.3 ? ResampleKind::kUniform : (r < 0.9 ? ResampleKind::kMultinomial : ResampleKind::kNone);
        CHECK(out.last_resample == expected);
        CHECK(std::abs(out.weight_sum() - 1.0) < 1e-9);
      }
    }
    SUBCASE("a degenerate set is always reinitialized") {
      auto ps = make_set(poses, std::vector<double>(n, 0.1));
      ps.degenerate = true;
      CHECK(resample(ps, th, region, rng).last_resample == ResampleKind::kUniform);
    }
  }

  TEST_CASE("multinomial resampling frequencies follow the weights") {
    const std::vector<Pose2> poses{{0, 0}, {1, 0}, {2, 0}, {3, 0}};
    const std::vector<double> w{0.55, 0.25, 0.15, 0.05};
    REQUIRE(ess_ratio(w) > 0.3);
    REQUIRE(ess_ratio(w) < 0.9);
    const auto ps = make_set(poses, w);
    Rng rng(10);
    std::vector<double> count(4, 0.0);
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
      const auto out = resample(ps, {}, kWorld, rng);
      REQUIRE(out.last_resample == ResampleKind::kMultinomial);
      for (const auto& p : out.particles) count[static_cast<int>(p.pose().x)] += 1.0;
    }
    // Chi-square against the categorical distribution, 3 degrees of freedom, 1% level.
    const double draws = 4.0 * trials;
    double chi2 = 0.0;
    for (int i = 0; i < 4; ++i) chi2 += std::pow(count[i] - draws * w[i], 2) / (draws * w[i]);
    CHECK(chi2 < 11.345);
  }

  TEST_CASE("resampled particles carry their own history") {
    ParticleSet ps;
    for (int i = 0; i < 4; ++i) {
      Particle p;
      p.history = HistoryWindow::uniform({{0.0, double(i)}, {1.0, double(i)}}, 0.5);
      p.weight = i == 0 ? 0.7 : 0.1;
      ps.particles.push_back(p);
    }
    Rng rng(11);
    const auto out = resample(ps, {}, kWorld, rng);
    REQUIRE(out.last_resample == ResampleKind::kMultinomial);
    for (const auto& p : out.particles) CHECK(p.history.poses[0].y == p.history.poses[1].y);
  }

  TEST_CASE("weighted mean") {
    CHECK(weighted_mean(make_set({{0, 0}, {2, 0}}, {0.5, 0.5})) == Pose2{1.0, 0.0});
    CHECK(weighted_mean(make_set({{3.5, 1.25}}, {1.0})) == Pose2{3.5, 1.25});
    Rng rng(12);
    const auto ps = random_set(5, rng);
    double x = 0.0, y = 0.0;
    for (const auto& p : ps.particles) {
      x += p.weight * p.history.poses.back().x;
      y += p.weight * p.history.poses.back().y;
    }
    CHECK(std::abs(weighted_mean(ps).x - x) < 1e-12);
    CHECK(std::abs(weighted_mean(ps).y - y) < 1e-12);
  }

  TEST_CASE("covariance examples and two-pass oracle") {
    CHECK(covariance(make_set({{1, 1}, {1, 1}, {1, 1}}, {0.2, 0.3, 0.5})).isZero(0.0));
    const Eigen::Matrix2d c = covariance(make_set({{0, 0}, {2, 0}}, {0.5, 0.5}));
    CHECK(c(0, 0) == doctest::Approx(1.0));
    CHECK(c(0, 1) == 0.0);
    CHECK(c(1, 1) == 0.0);

    Rng rng(13);
    const auto ps = random_set(10, rng);
    // Second-moment form: E[xx^T] - mu mu^T, computed independently.
    double m[2] = {0, 0}, s[2][2] = {{0, 0}, {0, 0}};
    for (const auto& p : ps.particles) {
      const double v[2] = {p.history.poses.back().x, p.history.poses.back().y};
      for (int a = 0; a < 2; ++a) {
        m[a] += p.weight * v[a];
        for (int b = 0; b < 2; ++b) s[a][b] += p.weight * v[a] * v[b];
      }
    }
    const Eigen::Matrix2d cov = covariance(ps);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) CHECK(std::abs(cov(a, b) - (s[a][b] - m[a] * m[b])) < 1e-12);
  }

  TEST_CASE("covariance is symmetric positive semi-definite") {
    Rng rng(14);
    for (int t = 0; t < 200; ++t) {
      const auto ps = random_set(2 + t % 20, rng);
      const Eigen::Matrix2d c = covariance(ps);
      CHECK(c(0, 1) == c(1, 0));
      const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(c);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
    }
  }

  TEST_CASE("subsampling") {
    Rng rng(15);
    SUBCASE("uniform weights and N_H = N give a permutation") {
      const auto ps = random_set(50, rng);
      auto flat = ps;
      for (auto& p : flat.particles) p.weight = 1.0 / 50;
      const auto sub = subsample(flat, 50, rng);
      std::multiset<std::pair<double, double>> a, b;
      for (const auto& p : flat.particles) a.insert({p.pose().x, p.pose().y});
      for (const auto& p : sub.particles) b.insert({p.pose().x, p.pose().y});
      CHECK(a == b);
    }
    SUBCASE("25 from 500") {
      const auto ps = init_particles(kWorld, 500, 10, 1.0 / 3.0, rng);
      const auto sub = subsample(ps, 25, rng);
      CHECK(sub.size() == 25);
      for (const auto& p : sub.particles) CHECK(p.weight == doctest::Approx(0.04));
    }
    SUBCASE("subsample mean is consistent with the weighted mean") {
      const auto ps = random_set(500, rng);
      const Pose2 mu = weighted_mean(ps);
      const Eigen::Matrix2d c = covariance(ps);
      const int reps = 400;
      double mx = 0.0;
      for (int r = 0; r < reps; ++r) mx += weighted_mean(subsample(ps, 25, rng)).x;
      mx /= reps;
      // Systematic resampling has at most the multinomial variance.
      CHECK(std::abs(mx - mu.x) < 3.0 * std::sqrt(c(0, 0) / 25.0) / std::sqrt(static_cast<double>(reps)));
    }
    SUBCASE("size limits") {
      const auto ps = random_set(5, rng);
      CHECK_THROWS_AS(subsample(ps, 0, rng), ConfigError);
      CHECK_THROWS_AS(subsample(ps, 6, rng), ConfigError);
    }
  }

  TEST_CASE("missed detection scales particles inside the footprint") {
    const SensorFootprint fov({1.0, 1.0}, {0.5, 0.5});
    const auto ps = make_set({{1.0, 1.0}, {3.0, 3.0}, {1.2, 0.6}}, {0.5, 0.25, 0.25});
    const auto out = update_missed(ps, fov, 0.9);
    const double total = 0.5 * 0.1 + 0.25 + 0.25 * 0.1;
    CHECK(out.particles[0].weight == doctest::Approx(0.05 / total));
    CHECK(out.particles[1].weight == doctest::Approx(0.25 / total));
    CHECK(out.particles[2].weight == doctest::Approx(0.025 / total));
    CHECK_FALSE(out.degenerate);

    const auto zero = update_missed(ps, fov, 0.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(zero.particles[i].weight == doctest::Approx(ps.particles[i].weight));

    const auto all_seen = update_missed(make_set({{1.0, 1.0}, {1.1, 1.1}}, {0.4, 0.6}), fov, 1.0);
    CHECK(all_seen.degenerate);
    CHECK(all_seen.particles[0].weight == 0.5);
    CHECK_THROWS_AS(update_missed(ps, fov, 1.5), ConfigError);
  }

  TEST_CASE("restriction to the workspace") {
    const auto ps = make_set({{1.0, 1.0}, {-1.0, 1.0}, {2.0, 6.0}, {3.0, 3.0}}, {0.25, 0.25, 0.25, 0.25});
    const auto out = restrict_to(ps, kWorld);
    CHECK(out.particles[0].weight == doctest::Approx(0.5));
    CHECK(out.particles[1].weight == 0.0);
    CHECK(out.particles[2].weight == 0.0);
    CHECK_FALSE(out.degenerate);
    const auto none = restrict_to(make_set({{-1.0, 0.0}}, {1.0}), kWorld);
    CHECK(none.degenerate);
  }

  TEST_CASE("weights stay normalized through a random pipeline") {
    Rng rng(16);
    const ShiftModel model({0.05, 0.0});
    const auto mm = MeasurementModel::isotropic(0.05);
    auto ps = init_particles(kWorld, 200, 5, 1.0 / 3.0, rng);
    for (int k = 0; k < 60; ++k) {
      ps = restrict_to(predict(ps, model, 0.05, rng), kWorld);
      CHECK(std::abs(ps.weight_sum() - 1.0) < 1e-9);
      if (k % 3 == 0) {
        ps = update(ps, {uniform(rng, 0.0, 11.0), uniform(rng, 0.0, 5.5)}, mm);
      } else {
        ps = update_missed(ps, SensorFootprint({uniform(rng, 0.0, 11.0), 2.0}, {0.75, 0.75}), 0.9);
      }
      CHECK(std::abs(ps.weight_sum() - 1.0) < 1e-9);
      ps = resample(ps, {}, kWorld, rng);
      CHECK(std::abs(ps.weight_sum() - 1.0) < 1e-9);
    }
  }

  TEST_CASE("a measurement at the mean contracts the covariance") {
    Rng rng(17);
    const ShiftModel model({0.0, 0.0});
    const auto mm = MeasurementModel::isotropic(0.05);
    auto ps = make_set(std::vector<Pose2>(500, Pose2{4.0, 2.0}), std::vector<double>(500, 1.0 / 500));
    ps = predict(ps, model, 0.1, rng);
    const double before = covariance(ps).determinant();
    const auto after = update(ps, weighted_mean(ps), mm);
    CHECK(covariance(after).determinant() < before);
  }

  TEST_CASE("the filter pipeline is deterministic per seed") {
    auto run = [](std::uint64_t seed) {
      Rng rng = make_stream(seed, Stream::kFilter);
      const ConstantVelocityModel cv;
      const auto mm = MeasurementModel::isotropic(0.05);
      auto ps = init_particles(kWorld, 100, 4, 1.0 / 3.0, rng);
      for (int k = 0; k < 20; ++k) {
        ps = predict(ps, cv, 0.05, rng);
        ps = update(ps, {5.0 + 0.1 * k, 2.0}, mm);
        ps = resample(ps, {}, kWorld, rng);
      }
      return ps.poses();
    };
    CHECK(run(3) == run(3));
    CHECK(run(3) != run(4));
  }
}
