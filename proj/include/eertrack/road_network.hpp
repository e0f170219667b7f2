#pragma once

#include <map>
#include <string>
#include <vector>

#include "eertrack/geometry.hpp"
#include "eertrack/rng.hpp"

namespace eertrack {

using NodeId = std::string;

struct Transition {
  NodeId to;
  double probability = 0.0;
};

/// Markov-chain road graph: the target moves along straight edges at constant speed
/// and picks its next node at random when it reaches one.
class RoadNetwork {
 public:
  static constexpr double kMaxTargetSpeed = 0.7;

  RoadNetwork(std::map<NodeId, Pose2> nodes, std::map<NodeId, std::vector<Transition>> transitions,
              double target_speed, NodeId start_node);

  const std::map<NodeId, Pose2>& nodes() const { return nodes_; }
  const std::map<NodeId, std::vector<Transition>>& transitions() const { return transitions_; }
  double target_speed() const { return target_speed_; }
  const NodeId& start_node() const { return start_node_; }
  const Pose2& position(const NodeId& id) const;
  Rect bounding_box() const;

  /// Distance from p to the closest edge segment with nonzero transition probability.
  double distance_to_network(const Pose2& p) const;

  /// Same graph with a different speed (speed 0 allowed for a parked target).
  RoadNetwork with_speed(double speed) const;

  /// Four-node default: decision node A sits at the occlusion zone.
  static RoadNetwork default_network();

 private:
  std::map<NodeId, Pose2> nodes_;
  std::map<NodeId, std::vector<Transition>> transitions_;
  double target_speed_;
  NodeId start_node_;
};

struct TargetTruth {
  Pose2 pose;
  NodeId from;
  NodeId to;
  double edge_progress = 0.0;  // fraction in [0,1]
};

NodeId sample_next_node(const RoadNetwork& net, const NodeId& at, Rng& rng);

/// Target at the start node, heading along a freshly sampled first edge.
TargetTruth initial_truth(const RoadNetwork& net, Rng& rng);

TargetTruth step_target(const RoadNetwork& net, const TargetTruth& s, double dt, Rng& rng);

/// floor(duration/dt)+1 poses starting at the network's start node.
std::vector<Pose2> generate_trajectory(const RoadNetwork& net, double duration, double dt, Rng& rng);

void write_trajectory_csv(const std::string& path, const std::vector<Pose2>& poses, double dt);

}  // namespace eertrack
