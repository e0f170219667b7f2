#include "eertrack/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "eertrack/errors.hpp"

namespace eertrack {

std::string to_string(Policy p) {
  switch (p) {
    case Policy::kDmmnEer: return "dmmn_eer";
    case Policy::kLawn: return "lawn";
    case Policy::kPfwm: return "pfwm";
    case Policy::kTruth: return "truth";
  }
  return "unknown";
}

std::string to_string(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::kEer: return "EER";
    case GuidanceMode::kTrack: return "TRACK";
    case GuidanceMode::kLawnSweep: return "LAWN_SWEEP";
    case GuidanceMode::kPfwm: return "PFWM";
    case GuidanceMode::kTruth: return "TRUTH";
  }
  return "UNKNOWN";
}

Policy parse_policy(const std::string& s) {
  if (s == "dmmn_eer") return Policy::kDmmnEer;
  if (s == "lawn") return Policy::kLawn;
  if (s == "pfwm") return Policy::kPfwm;
  if (s == "truth") return Policy::kTruth;
  throw ConfigError("unknown guidance policy '" + s + "' (expected dmmn_eer, lawn, pfwm or truth)");
}

GuidanceMode parse_mode(const std::string& s) {
  for (GuidanceMode m : {GuidanceMode::kEer, GuidanceMode::kTrack, GuidanceMode::kLawnSweep, GuidanceMode::kPfwm,
                         GuidanceMode::kTruth}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown guidance mode '" + s + "'");
}

LawnState LawnState::start(const SensorFootprint& fov_shape, double spacing_fraction) {
  if (!(spacing_fraction > 0.0 && spacing_fraction <= 1.0)) {
    throw ConfigError("lawnmower row spacing must be a fraction in (0, 1] of the FOV height");
  }
  LawnState s;
  s.row_spacing = spacing_fraction * 2.0 * fov_shape.half_extents.y;
  return s;
}

LawnPattern LawnPattern::build(const Rect& bounds, const Pose2& half, double row_spacing) {
  if (!(row_spacing > 0.0) || row_spacing > 2.0 * half.y + 1e-12) {
    throw ConfigError("lawnmower row spacing must be positive and no wider than the FOV");
  }
  LawnPattern p;
  p.x_west = std::min(bounds.min_x + half.x, bounds.center().x);
  p.x_east = std::max(bounds.max_x - half.x, bounds.center().x);
  const double y_first = std::min(bounds.min_y + half.y, bounds.center().y);
  const double y_last = std::max(bounds.max_y - half.y, bounds.center().y);
  for (double y = y_first;; y += row_spacing) {
    if (y >= y_last - 1e-9) {
      p.rows.push_back(y_last);
      break;
    }
    p.rows.push_back(y);
  }
  return p;
}

GuidanceDecision policy_dmmn_eer(const ParticleSet& ps, const Pose2& agent, double agent_max_speed, double filter_dt,
                                 const DmmnParams& model, const EerConfig& cfg, const Workspace& ws, Rng& rng,
                                 const std::optional<Pose2>& last_z) {
  const auto candidates = candidate_waypoints(agent, agent_max_speed, filter_dt, cfg, ws.bounds);
  GuidanceDecision d;
  d.eer = best_waypoint(ps, candidates, model, cfg, ws, rng, last_z);
  d.waypoint = ws.bounds.clamp(d.eer->best().position);
  d.mode = GuidanceMode::kEer;
  d.time_to_go = cfg.horizon * filter_dt;
  return d;
}

namespace {

constexpr double kArrivalTolerance = 1e-6;

Pose2 leg_end(const LawnState& s, const LawnPattern& p) {
  const bool east = (s.direction > 0) != s.shifting;
  return {east ? p.x_east : p.x_west, p.rows[static_cast<std::size_t>(s.row)]};
}

}  // namespace

std::pair<GuidanceDecision, LawnState> policy_lawn(const LawnState& state, const std::optional<Pose2>& last_z,
                                                   const Pose2& agent, const Workspace& ws,
                                                   const Pose2& fov_half_extents) {
  LawnState next = state;
  GuidanceDecision d;
  if (last_z) {
    next.tracking = true;
    d.waypoint = ws.bounds.clamp(*last_z);
    d.mode = GuidanceMode::kTrack;
    return {d, next};
  }
  next.tracking = false;
  const LawnPattern pattern = LawnPattern::build(ws.bounds, fov_half_extents, state.row_spacing);
  const int rows = static_cast<int>(pattern.rows.size());
  next.row = std::clamp(next.row, 0, rows - 1);
  if (distance(agent, leg_end(next, pattern)) <= kArrivalTolerance) {
    if (next.shifting) {
      next.shifting = false;
    } else {
      // End of a row: the next leg shifts to the neighboring row, which is swept the other way.
      next.direction = -next.direction;
      if (rows > 1) {
        if (next.row + next.row_step < 0 || next.row + next.row_step >= rows) next.row_step = -next.row_step;
        next.row += next.row_step;
        next.shifting = true;
      }
    }
  }
  d.waypoint = ws.bounds.clamp(leg_end(next, pattern));
  d.mode = GuidanceMode::kLawnSweep;
  return {d, next};
}

GuidanceDecision policy_pfwm(const ParticleSet& ps, const Rect& bounds) {
  GuidanceDecision d;
  d.waypoint = bounds.clamp(weighted_mean(ps));
  d.mode = GuidanceMode::kPfwm;
  return d;
}

GuidanceDecision policy_truth(const Pose2& truth, const Rect& bounds) {
  GuidanceDecision d;
  d.waypoint = bounds.clamp(truth);
  d.mode = GuidanceMode::kTruth;
  return d;
}

}  // namespace eertrack
