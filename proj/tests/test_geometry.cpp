#include <random>

#include "doctest.h"
#include "eertrack/errors.hpp"
#include "eertrack/geometry.hpp"

using namespace eertrack;

TEST_SUITE("geometry") {
  TEST_CASE("fov_contains is boundary inclusive") {
    const SensorFootprint fov({0.0, 0.0}, {1.0, 1.0});
    CHECK(fov_contains(fov, {0.5, 0.5}));
    CHECK(fov_contains(fov, {1.0, 1.0}));
    CHECK(fov_contains(fov, {-1.0, 0.0}));
    CHECK_FALSE(fov_contains(fov, {1.0 + 1e-12, 0.0}));
    CHECK_FALSE(fov_contains(fov, {0.0, -1.5}));
  }

  TEST_CASE("footprint rejects non-positive half extents") {
    CHECK_THROWS_AS(SensorFootprint({0.0, 0.0}, {0.0, 1.0}), ConfigError);
    CHECK_THROWS_AS(SensorFootprint({0.0, 0.0}, {1.0, -1.0}), ConfigError);
  }

  TEST_CASE("is_occluded on a square zone") {
    const Workspace ws({0.0, 0.0, 5.0, 5.0}, {OcclusionZone::rectangle("sq", {1.0, 1.0, 2.0, 2.0})});
    CHECK(is_occluded(ws, {1.5, 1.5}));
    CHECK_FALSE(is_occluded(ws, {0.0, 0.0}));
    CHECK(is_occluded(ws, {1.0, 1.5}));
    CHECK(is_occluded(ws, {2.0, 2.0}));
  }

  TEST_CASE("no zones means nothing is occluded") {
    const Workspace ws({0.0, 0.0, 5.0, 5.0}, {});
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 6.0);
    for (int i = 0; i < 200; ++i) CHECK_FALSE(is_occluded(ws, {u(rng), u(rng)}));
  }

  TEST_CASE("polygon zone matches a triangle oracle") {
    // Right triangle with legs on the axes: inside iff x >= 0, y >= 0, x + y <= 2.
    const Workspace ws({-1.0, -1.0, 3.0, 3.0}, {OcclusionZone("tri", {{0.0, 0.0}, {2.0, 0.0}, {0.0, 2.0}})});
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.5, 2.5);
    for (int i = 0; i < 2000; ++i) {
      const Pose2 p{u(rng), u(rng)};
      const bool oracle = p.x >= 0.0 && p.y >= 0.0 && p.x + p.y <= 2.0;
      CHECK(is_occluded(ws, p) == oracle);
    }
    CHECK(is_occluded(ws, {1.0, 1.0}));
  }

  TEST_CASE("is_observable combines footprint and occlusion") {
    const Workspace ws({0.0, 0.0, 10.0, 10.0}, {OcclusionZone::rectangle("z", {4.0, 4.0, 6.0, 6.0})});
    const SensorFootprint fov({5.0, 5.0}, {2.0, 2.0});
    CHECK(is_observable(ws, fov, {3.5, 5.0}));
    CHECK_FALSE(is_observable(ws, fov, {5.0, 5.0}));
    CHECK_FALSE(is_observable(ws, fov, {9.0, 9.0}));
  }

  TEST_CASE("observable implies inside footprint, and removing zones never hides a point") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::uniform_real_distribution<double> h(0.2, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<OcclusionZone> zones;
      for (int z = 0; z < 3; ++z) {
        const double x = u(rng) * 0.8, y = u(rng) * 0.8;
        zones.push_back(OcclusionZone::rectangle("z" + std::to_string(z), {x, y, x + h(rng), y + h(rng)}));
      }
      const Workspace full({0.0, 0.0, 10.0, 10.0}, zones);
      std::vector<OcclusionZone> fewer(zones.begin(), zones.end() - 1);
      const Workspace reduced({0.0, 0.0, 10.0, 10.0}, fewer);
      const SensorFootprint fov({u(rng), u(rng)}, {h(rng), h(rng)});
      for (int i = 0; i < 100; ++i) {
        const Pose2 p{u(rng), u(rng)};
        if (is_observable(full, fov, p)) {
          CHECK(fov_contains(fov, p));
          CHECK(is_observable(reduced, fov, p));
        }
      }
    }
  }

  TEST_CASE("zone validation") {
    CHECK_THROWS_AS(OcclusionZone("flat", {{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}}), ConfigError);
    CHECK_THROWS_AS(OcclusionZone("two", {{0.0, 0.0}, {1.0, 0.0}}), ConfigError);
    CHECK_THROWS_AS(Workspace({0.0, 0.0, 1.0, 1.0}, {OcclusionZone::rectangle("out", {0.5, 0.5, 1.5, 0.9})}),
                    ConfigError);
    CHECK(OcclusionZone::rectangle("r", {0.0, 0.0, 2.0, 3.0}).area() == doctest::Approx(6.0));
  }

  TEST_CASE("rect clamp") {
    const Rect r{0.0, 0.0, 11.0, 5.5};
    CHECK(r.clamp({-1.0, 7.0}) == Pose2{0.0, 5.5});
    CHECK(r.clamp({3.0, 2.0}) == Pose2{3.0, 2.0});
  }
}
