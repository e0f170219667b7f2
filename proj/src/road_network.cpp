#include "eertrack/road_network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "eertrack/errors.hpp"

namespace eertrack {

RoadNetwork::RoadNetwork(std::map<NodeId, Pose2> nodes, std::map<NodeId, std::vector<Transition>> transitions,
                         double target_speed, NodeId start_node)
    : nodes_(std::move(nodes)),
      transitions_(std::move(transitions)),
      target_speed_(target_speed),
      start_node_(std::move(start_node)) {
  if (nodes_.empty()) throw ConfigError("road network has no nodes");
  for (const auto& [id, p] : nodes_) {
    if (!p.finite()) throw ConfigError("road node '" + id + "' has a non-finite position");
  }
  if (!nodes_.count(start_node_)) throw ConfigError("start node '" + start_node_ + "' is not a road node");
  // Speed 0 is allowed for a parked target; the upper bound is the target's physical limit.
  if (!(target_speed_ >= 0.0) || target_speed_ > kMaxTargetSpeed) {
    throw ConfigError("target speed must lie in [0, 0.7] m/s");
  }
  for (const auto& [from, list] : transitions_) {
    if (!nodes_.count(from)) throw ConfigError("transition source '" + from + "' is not a road node");
    double total = 0.0;
    for (const auto& t : list) {
      if (!nodes_.count(t.to)) throw ConfigError("transition target '" + t.to + "' is not a road node");
      if (!(t.probability >= 0.0)) throw ConfigError("transition probability from '" + from + "' is negative");
      if (t.probability > 0.0 && distance(nodes_.at(from), nodes_.at(t.to)) <= 0.0) {
        throw ConfigError("edge " + from + "->" + t.to + " has zero length");
      }
      total += t.probability;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("transition probabilities out of '" + from + "' do not sum to 1");
  }
}

const Pose2& RoadNetwork::position(const NodeId& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw ConfigError("unknown road node '" + id + "'");
  return it->second;
}

Rect RoadNetwork::bounding_box() const {
  const Pose2& first = nodes_.begin()->second;
  Rect r{first.x, first.y, first.x, first.y};
  for (const auto& [id, p] : nodes_) {
    r.min_x = std::min(r.min_x, p.x);
    r.min_y = std::min(r.min_y, p.y);
    r.max_x = std::max(r.max_x, p.x);
    r.max_y = std::max(r.max_y, p.y);
  }
  return r;
}

double RoadNetwork::distance_to_network(const Pose2& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [from, list] : transitions_) {
    const Pose2& a = nodes_.at(from);
    for (const auto& t : list) {
      if (t.probability <= 0.0) continue;
      const Pose2& b = nodes_.at(t.to);
      const Pose2 ab = b - a;
      const double len2 = ab.x * ab.x + ab.y * ab.y;
      const double u = std::clamp(((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2, 0.0, 1.0);
      best = std::min(best, distance(p, a + ab * u));
    }
  }
  return best;
}

RoadNetwork RoadNetwork::with_speed(double speed) const {
  return RoadNetwork(nodes_, transitions_, speed, start_node_);
}

RoadNetwork RoadNetwork::default_network() {
  std::map<NodeId, Pose2> nodes{
      {"A", {3.0, 2.75}},
      {"B", {6.5, 4.75}},
      {"C", {6.5, 0.75}},
      {"D", {9.5, 2.75}},
  };
  std::map<NodeId, std::vector<Transition>> transitions{
      {"A", {{"B", 0.6}, {"C", 0.4}}},
      {"B", {{"D", 1.0}}},
      {"C", {{"D", 1.0}}},
      {"D", {{"A", 1.0}}},
  };
  return RoadNetwork(std::move(nodes), std::move(transitions), 0.35, "D");
}

NodeId sample_next_node(const RoadNetwork& net, const NodeId& at, Rng& rng) {
  auto it = net.transitions().find(at);
  if (it == net.transitions().end() || it->second.empty()) {
    throw ConfigError("road node '" + at + "' is a dead end");
  }
  const auto& list = it->second;
  const double u = uniform(rng, 0.0, 1.0);
  double cumulative = 0.0;
  for (const auto& t : list) {
    cumulative += t.probability;
    if (u < cumulative) return t.to;
  }
  // Rounding left u above the last partial sum: take the last reachable successor.
  for (auto r = list.rbegin(); r != list.rend(); ++r) {
    if (r->probability > 0.0) return r->to;
  }
  throw ConfigError("road node '" + at + "' has no successor with positive probability");
}

TargetTruth initial_truth(const RoadNetwork& net, Rng& rng) {
  TargetTruth s;
  s.from = net.start_node();
  s.to = sample_next_node(net, s.from, rng);
  s.edge_progress = 0.0;
  s.pose = net.position(s.from);
  return s;
}

TargetTruth step_target(const RoadNetwork& net, const TargetTruth& s, double dt, Rng& rng) {
  if (!(dt > 0.0)) throw ConfigError("step_target requires dt > 0");
  TargetTruth next = s;
  double remaining = net.target_speed() * dt;
  if (remaining <= 0.0) return next;
  for (;;) {
    const Pose2& a = net.position(next.from);
    const Pose2& b = net.position(next.to);
    const double length = distance(a, b);
    const double left_on_edge = (1.0 - next.edge_progress) * length;
    if (remaining < left_on_edge) {
      next.edge_progress += remaining / length;
      next.pose = a + (b - a) * next.edge_progress;
      return next;
    }
    // Node reached: carry the residual distance onto the next sampled edge.
    remaining -= left_on_edge;
    next.from = next.to;
    next.to = sample_next_node(net, next.from, rng);
    next.edge_progress = 0.0;
    next.pose = net.position(next.from);
    if (remaining <= 0.0) return next;
  }
}

std::vector<Pose2> generate_trajectory(const RoadNetwork& net, double duration, double dt, Rng& rng) {
  if (!(dt > 0.0) || duration < dt) throw ConfigError("generate_trajectory requires duration >= dt > 0");
  const auto steps = static_cast<std::size_t>(std::floor(duration / dt + 1e-9));
  std::vector<Pose2> poses;
  poses.reserve(steps + 1);
  TargetTruth s = initial_truth(net, rng);
  poses.push_back(s.pose);
  for (std::size_t i = 0; i < steps; ++i) {
    s = step_target(net, s, dt, rng);
    poses.push_back(s.pose);
  }
  return poses;
}

void write_trajectory_csv(const std::string& path, const std::vector<Pose2>& poses, double dt) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.precision(17);
  out << "# eertrack trajectory v1\n";
  out << "t,x,y\n";
  for (std::size_t i = 0; i < poses.size(); ++i) {
    out << static_cast<double>(i) * dt << ',' << poses[i].x << ',' << poses[i].y << '\n';
  }
}

}  // namespace eertrack
