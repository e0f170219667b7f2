#include <cmath>

#include "doctest.h"
#include "eertrack/errors.hpp"
#include "eertrack/guidance.hpp"
#include "eertrack/sim.hpp"
#include "test_support.hpp"

using namespace eertrack;
using namespace eertrack::testing;

namespace {

const Workspace kWs{};
const Pose2 kHalf{0.75, 0.75};

ParticleSet cloud(Pose2 c, double spread, std::size_t n, Rng& rng) {
  ParticleSet ps;
  for (std::size_t i = 0; i < n; ++i) {
    Particle p;
    p.history = HistoryWindow::constant(c + Pose2{standard_normal(rng), standard_normal(rng)} * spread, 10, 1.0 / 3.0);
    p.weight = 1.0 / static_cast<double>(n);
    ps.particles.push_back(p);
  }
  return ps;
}

}  // namespace

TEST_SUITE("guidance") {
  TEST_CASE("names round-trip") {
    for (Policy p : {Policy::kDmmnEer, Policy::kLawn, Policy::kPfwm, Policy::kTruth}) CHECK(parse_policy(to_string(p)) == p);
    for (GuidanceMode m : {GuidanceMode::kEer, GuidanceMode::kTrack, GuidanceMode::kLawnSweep, GuidanceMode::kPfwm,
                           GuidanceMode::kTruth}) {
      CHECK(parse_mode(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_policy("random"), ConfigError);
  }

  TEST_CASE("lawnmower tracks a fresh measurement and keeps its sweep state") {
    LawnState s = LawnState::start(SensorFootprint({0, 0}, kHalf));
    s.row = 2;
    s.direction = -1;
    const auto [d, next] = policy_lawn(s, Pose2{2.0, 1.0}, {5.0, 5.0}, kWs, kHalf);
    CHECK(d.waypoint == Pose2{2.0, 1.0});
    CHECK(d.mode == GuidanceMode::kTrack);
    CHECK(next.row == 2);
    CHECK(next.direction == -1);
    CHECK(next.tracking);
  }

  TEST_CASE("lawnmower row spacing is capped by the footprint") {
    const LawnState s = LawnState::start(SensorFootprint({0, 0}, kHalf));
    CHECK(s.row_spacing == doctest::Approx(0.9 * 1.5));
    CHECK(s.row_spacing <= 1.5);
    CHECK_THROWS_AS(LawnState::start(SensorFootprint({0, 0}, kHalf), 1.2), ConfigError);
    CHECK_THROWS_AS(LawnPattern::build(kWs.bounds, kHalf, 1.6), ConfigError);
  }

  TEST_CASE("end of row 0 eastbound leads to row 1 westbound") {
    const LawnState s0 = LawnState::start(SensorFootprint({0, 0}, kHalf));
    const LawnPattern pat = LawnPattern::build(kWs.bounds, kHalf, s0.row_spacing);
    REQUIRE(pat.rows.size() >= 2);
    const Pose2 east_end{pat.x_east, pat.rows[0]};
    auto [d0, s1] = policy_lawn(s0, std::nullopt, {pat.x_west, pat.rows[0]}, kWs, kHalf);
    CHECK(d0.waypoint == east_end);
    CHECK(d0.mode == GuidanceMode::kLawnSweep);
    // Arrival at the east end: a short leg onto row 1 at the same x.
    auto [d1, s2] = policy_lawn(s1, std::nullopt, east_end, kWs, kHalf);
    CHECK(s2.row == 1);
    CHECK(s2.direction == -1);
    CHECK(d1.waypoint == Pose2{pat.x_east, pat.rows[1]});
    // Once on row 1 the sweep heads west.
    auto [d2, s3] = policy_lawn(s2, std::nullopt, d1.waypoint, kWs, kHalf);
    CHECK(d2.waypoint == Pose2{pat.x_west, pat.rows[1]});
    CHECK(s3.row == 1);
  }

  TEST_CASE("one full sweep covers every point of the workspace") {
    LawnState s = LawnState::start(SensorFootprint({0, 0}, kHalf));
    const LawnPattern pat = LawnPattern::build(kWs.bounds, kHalf, s.row_spacing);
    AgentState agent;
    agent.position = {pat.x_west, pat.rows[0]};
    std::vector<Pose2> visited{agent.position};
    const double dt = 1.0 / 15.0;
    // Drive until the sweep has reached the last row and come back to row 0.
    bool reached_top = false;
    for (int tick = 0; tick < 20000; ++tick) {
      auto [d, next] = policy_lawn(s, std::nullopt, agent.position, kWs, kHalf);
      s = next;
      CHECK(kWs.bounds.contains(d.waypoint));
      agent = step_agent(agent, d.waypoint, dt, kWs.bounds);
      visited.push_back(agent.position);
      if (s.row == static_cast<int>(pat.rows.size()) - 1) reached_top = true;
      if (reached_top && s.row == 0) break;
    }
    REQUIRE(reached_top);
    int uncovered = 0;
    for (double x = 0.0; x <= 11.0 + 1e-9; x += 0.1) {
      for (double y = 0.0; y <= 5.5 + 1e-9; y += 0.1) {
        bool seen = false;
        for (const auto& v : visited) {
          if (fov_contains(SensorFootprint(v, kHalf), {x, y})) {
            seen = true;
            break;
          }
        }
        uncovered += !seen;
      }
    }
    CHECK(uncovered == 0);
  }

  TEST_CASE("particle weighted mean policy") {
    ParticleSet ps;
    for (Pose2 p : {Pose2{0, 0}, Pose2{2, 0}}) ps.particles.push_back({HistoryWindow::constant(p, 3, 1.0), 0.5});
    const auto d = policy_pfwm(ps, Rect{-1, -1, 5, 5});
    CHECK(d.waypoint == Pose2{1.0, 0.0});
    CHECK(d.mode == GuidanceMode::kPfwm);
    ParticleSet one;
    one.particles.push_back({HistoryWindow::constant({3.5, 1.5}, 3, 1.0), 1.0});
    CHECK(policy_pfwm(one, kWs.bounds).waypoint == Pose2{3.5, 1.5});
    Rng rng(1);
    const auto c = cloud({4, 2}, 1.0, 50, rng);
    CHECK(policy_pfwm(c, kWs.bounds).waypoint == kWs.bounds.clamp(weighted_mean(c)));
  }

  TEST_CASE("waypoints stay inside the workspace") {
    ParticleSet outside;
    outside.particles.push_back({HistoryWindow::constant({-3.0, 9.0}, 3, 1.0), 1.0});
    CHECK(kWs.bounds.contains(policy_pfwm(outside, kWs.bounds).waypoint));
    CHECK(kWs.bounds.contains(policy_truth({20.0, -1.0}, kWs.bounds).waypoint));
    const LawnState s = LawnState::start(SensorFootprint({0, 0}, kHalf));
    CHECK(kWs.bounds.contains(policy_lawn(s, Pose2{12.0, 6.0}, {1, 1}, kWs, kHalf).first.waypoint));
  }

  TEST_CASE("EER guidance moves toward a collapsed cloud") {
    Rng m(2);
    const DmmnParams model = DmmnParams::initialize(DmmnHyper{}, m);  // stays put
    Rng rng(3);
    const Pose2 target{4.2, 2.75};
    const auto ps = cloud(target, 0.05, 500, rng);
    const Pose2 agent{2.0, 2.75};
    Rng planner(4);
    const auto d = policy_dmmn_eer(ps, agent, 1.0, 1.0 / 3.0, model, EerConfig{}, kWs, planner, std::nullopt);
    CHECK(d.mode == GuidanceMode::kEer);
    REQUIRE(d.eer.has_value());
    CHECK(distance(d.waypoint, target) < distance(agent, target) - 1.0);
    CHECK(kWs.bounds.contains(d.waypoint));
    CHECK(d.time_to_go == doctest::Approx(5.0 / 3.0));
  }

  TEST_CASE("EER guidance is deterministic and leaves the filter state alone") {
    const DmmnParams model = random_params(DmmnHyper{}, 5);
    Rng rng(6);
    const auto ps = cloud({6.0, 1.0}, 0.4, 500, rng);
    const auto copy = ps;
    Rng a(7), b(7);
    const auto d1 = policy_dmmn_eer(ps, {5.0, 1.5}, 1.0, 1.0 / 3.0, model, EerConfig{}, kWs, a, std::nullopt);
    const auto d2 = policy_dmmn_eer(ps, {5.0, 1.5}, 1.0, 1.0 / 3.0, model, EerConfig{}, kWs, b, std::nullopt);
    CHECK(d1.waypoint == d2.waypoint);
    CHECK(d1.eer->eer == d2.eer->eer);
    CHECK(ps.poses() == copy.poses());
    CHECK(ps.weights() == copy.weights());
  }

  TEST_CASE("EER guidance at the workspace corner stays inside") {
    const DmmnParams model = random_params(DmmnHyper{}, 8);
    Rng rng(9);
    const auto ps = cloud({0.5, 0.5}, 0.3, 500, rng);
    Rng p(10);
    const auto d = policy_dmmn_eer(ps, {0.0, 0.0}, 1.0, 1.0 / 3.0, model, EerConfig{}, kWs, p, std::nullopt);
    CHECK(kWs.bounds.contains(d.waypoint));
    for (const auto& c : d.eer->candidates) CHECK(kWs.bounds.contains(c.position));
  }
}
