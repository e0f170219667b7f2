#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eertrack/entropy.hpp"
#include "eertrack/geometry.hpp"
#include "eertrack/particle_filter.hpp"

namespace eertrack {

enum class Policy { kDmmnEer, kLawn, kPfwm, kTruth };
enum class GuidanceMode { kEer, kTrack, kLawnSweep, kPfwm, kTruth };

std::string to_string(Policy p);
std::string to_string(GuidanceMode m);
Policy parse_policy(const std::string& s);
GuidanceMode parse_mode(const std::string& s);

struct GuidanceDecision {
  Pose2 waypoint;
  GuidanceMode mode = GuidanceMode::kPfwm;
  /// Seconds until the agent is meant to be at the waypoint; 0 means as soon as possible.
  double time_to_go = 0.0;
  std::optional<EerResult> eer;
};

/// Boustrophedon sweep state. Rows run along x and are stacked in y.
struct LawnState {
  int row = 0;
  int direction = +1;       // +1 eastbound, -1 westbound
  int row_step = +1;        // +1 moving up the rows, -1 moving down
  bool shifting = false;    // on the short leg onto row `row`, before sweeping it
  double row_spacing = 1.35;
  bool tracking = false;

  /// Rows spaced at `spacing_fraction` of the FOV height.
  static LawnState start(const SensorFootprint& fov_shape, double spacing_fraction = 0.9);
};

/// Row y-coordinates and the x extent of the sweep for a workspace and footprint.
struct LawnPattern {
  std::vector<double> rows;
  double x_west = 0.0;
  double x_east = 0.0;

  static LawnPattern build(const Rect& bounds, const Pose2& fov_half_extents, double row_spacing);
};

GuidanceDecision policy_dmmn_eer(const ParticleSet& ps, const Pose2& agent, double agent_max_speed, double filter_dt,
                                 const DmmnParams& model, const EerConfig& cfg, const Workspace& ws, Rng& rng,
                                 const std::optional<Pose2>& last_z);

/// Track the latest measurement when there is one; otherwise follow the sweep,
/// advancing to the next leg once the agent reaches the current leg's end.
std::pair<GuidanceDecision, LawnState> policy_lawn(const LawnState& state, const std::optional<Pose2>& last_z,
                                                   const Pose2& agent, const Workspace& ws,
                                                   const Pose2& fov_half_extents);

GuidanceDecision policy_pfwm(const ParticleSet& ps, const Rect& bounds);

GuidanceDecision policy_truth(const Pose2& truth, const Rect& bounds);

}  // namespace eertrack
