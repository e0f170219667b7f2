#include "eertrack/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "eertrack/errors.hpp"

namespace eertrack {

using nlohmann::json;

std::string to_string(MotionModelKind k) { return k == MotionModelKind::kDmmn ? "dmmn" : "cv"; }

SimConfig SimConfig::defaults() {
  SimConfig c;
  c.workspace = Workspace(Rect{0.0, 0.0, 11.0, 5.5},
                          {OcclusionZone::rectangle("A", Rect{2.2, 1.95, 3.8, 3.55})});
  return c;
}

EerConfig SimConfig::planner_config() const {
  EerConfig e = eer;
  e.sigma_p = sigma_p;
  e.measurement_cov = measurement_cov;
  e.fov_half_extents = fov_half_extents;
  return e;
}

void SimConfig::validate() const {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  auto guarded = [&](auto&& f) {
    try {
      f();
    } catch (const ConfigError& e) {
      problems.emplace_back(e.what());
    }
  };
  check(workspace.bounds.valid(), "workspace bounds are empty");
  check(fov_half_extents.x > 0.0 && fov_half_extents.y > 0.0, "FOV half extents must be positive");
  check(sigma_p > 0.0, "sigma_p must be positive");
  check(filter.n >= 1, "filter.N must be at least 1");
  check(filter.thresholds.uniform >= 0.0 && filter.thresholds.uniform <= filter.thresholds.multinomial &&
            filter.thresholds.multinomial <= 1.0,
        "resampling thresholds must satisfy 0 <= b <= a <= 1");
  check(filter.detection_probability >= 0.0 && filter.detection_probability <= 1.0,
        "filter.detection_probability must lie in [0, 1]");
  check(filter.k_in >= 2, "filter.K_in must be at least 2");
  check(filter.k_in == train.hyper.k_in, "filter.K_in must equal train.K_in");
  check(rates.filter_hz > 0.0 && rates.guidance_hz > 0.0, "rates must be positive");
  check(duration > 0.0, "duration must be positive");
  check(agent_max_speed > 0.0, "agent_max_speed must be positive");
  check(workspace.bounds.contains(agent_start), "agent_start lies outside the workspace");
  check(lawn_row_spacing > 0.0 && lawn_row_spacing <= 1.0, "lawn_row_spacing must lie in (0, 1]");
  check(train.trajectory_duration > 0.0, "train.trajectory_duration must be positive");
  const Rect net_box = road_network.bounding_box();
  check(workspace.bounds.contains({net_box.min_x, net_box.min_y}) &&
            workspace.bounds.contains({net_box.max_x, net_box.max_y}),
        "road network leaves the workspace");
  guarded([&] { MeasurementModel m(measurement_cov); });
  guarded([&] { planner_config().validate(filter.n); });
  guarded([&] { train.hyper.validate(); });
  guarded([&] { train.optimizer.validate(); });
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

namespace {

/// Reads the members of one JSON object and rejects any it did not consume.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string sub(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + (path_.empty() ? k : path_ + "." + k) + "'");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "config" : "'" + path_ + "'"; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Pose2 read_point(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(where + " must be a [x, y] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

Rect read_rect(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw ConfigError(where + " must be [min_x, min_y, max_x, max_y]");
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(where + " must contain numbers");
  }
  Rect r{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!r.valid()) throw ConfigError(where + " is an empty rectangle");
  return r;
}

Eigen::Matrix2d read_cov(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("measurement_cov must be a 2x2 nested array");
  Eigen::Matrix2d m;
  for (int r = 0; r < 2; ++r) {
    if (!j[r].is_array() || j[r].size() != 2) throw ConfigError("measurement_cov must be a 2x2 nested array");
    for (int c = 0; c < 2; ++c) {
      if (!j[r][c].is_number()) throw ConfigError("measurement_cov entries must be numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

void read_workspace(const json& j, SimConfig& cfg) {
  ObjectReader r(j, "workspace");
  Rect bounds = cfg.workspace.bounds;
  std::vector<OcclusionZone> zones = cfg.workspace.zones;
  if (const json* b = r.child("bounds")) bounds = read_rect(*b, "workspace.bounds");
  if (const json* f = r.child("fov_half_extents")) cfg.fov_half_extents = read_point(*f, "workspace.fov_half_extents");
  if (const json* z = r.child("zones")) {
    if (!z->is_array()) throw ConfigError("workspace.zones must be an array");
    zones.clear();
    for (std::size_t i = 0; i < z->size(); ++i) {
      const std::string where = "workspace.zones[" + std::to_string(i) + "]";
      ObjectReader zr((*z)[i], where);
      std::string id = "zone" + std::to_string(i);
      zr.get("id", id);
      const json* rect = zr.child("rect");
      const json* poly = zr.child("polygon");
      zr.finish();
      if ((rect == nullptr) == (poly == nullptr)) throw ConfigError(where + " needs exactly one of rect or polygon");
      if (rect) {
        zones.push_back(OcclusionZone::rectangle(id, read_rect(*rect, where + ".rect")));
      } else {
        if (!poly->is_array()) throw ConfigError(where + ".polygon must be an array of points");
        std::vector<Pose2> pts;
        for (const auto& p : *poly) pts.push_back(read_point(p, where + ".polygon"));
        zones.emplace_back(id, std::move(pts));
      }
    }
  }
  r.finish();
  cfg.workspace = Workspace(bounds, std::move(zones));
}

void read_road_network(const json& j, SimConfig& cfg) {
  ObjectReader r(j, "road_network");
  std::map<NodeId, Pose2> nodes = cfg.road_network.nodes();
  std::map<NodeId, std::vector<Transition>> transitions = cfg.road_network.transitions();
  double speed = cfg.road_network.target_speed();
  NodeId start = cfg.road_network.start_node();
  if (const json* n = r.child("nodes")) {
    if (!n->is_object()) throw ConfigError("road_network.nodes must map node ids to [x, y]");
    nodes.clear();
    for (const auto& [id, p] : n->items()) nodes[id] = read_point(p, "road_network.nodes." + id);
  }
  if (const json* t = r.child("transitions")) {
    if (!t->is_object()) throw ConfigError("road_network.transitions must map node ids to {successor: probability}");
    transitions.clear();
    for (const auto& [from, succ] : t->items()) {
      if (!succ.is_object()) throw ConfigError("road_network.transitions." + from + " must be an object");
      for (const auto& [to, prob] : succ.items()) {
        if (!prob.is_number()) throw ConfigError("road_network.transitions." + from + "." + to + " must be a number");
        transitions[from].push_back({to, prob.get<double>()});
      }
    }
  }
  r.get("target_speed", speed);
  r.get("start_node", start);
  r.finish();
  cfg.road_network = RoadNetwork(std::move(nodes), std::move(transitions), speed, std::move(start));
}

void read_filter(const json& j, SimConfig& cfg) {
  ObjectReader r(j, "filter");
  r.get("N", cfg.filter.n);
  r.get("a", cfg.filter.thresholds.multinomial);
  r.get("b", cfg.filter.thresholds.uniform);
  r.get("K_in", cfg.filter.k_in);
  r.get("detection_probability", cfg.filter.detection_probability);
  r.finish();
  cfg.train.hyper.k_in = cfg.filter.k_in;
}

void read_eer(const json& j, SimConfig& cfg) {
  ObjectReader r(j, "eer");
  r.get("N_H", cfg.eer.n_h);
  r.get("N_M", cfg.eer.n_m);
  r.get("K", cfg.eer.horizon);
  r.get("grid", cfg.eer.grid);
  r.get("known_occlusion", cfg.eer.known_occlusion);
  r.finish();
}

void read_train(const json& j, SimConfig& cfg) {
  ObjectReader r(j, "train");
  auto& h = cfg.train.hyper;
  auto& o = cfg.train.optimizer;
  r.get("d_model", h.d_model);
  r.get("heads", h.heads);
  r.get("layers", h.layers);
  r.get("d_ff", h.d_ff);
  r.get("pos_scale", h.pos_scale);
  r.get("learning_rate", o.learning_rate);
  r.get("batch_size", o.batch_size);
  r.get("epochs", o.epochs);
  r.get("validation_fraction", o.validation_fraction);
  r.get("seed", o.seed);
  r.get("trajectory_duration", cfg.train.trajectory_duration);
  r.get("augment_symmetries", o.augment_symmetries);
  r.get("stationary_fraction", o.stationary_fraction);
  r.get("input_noise", o.input_noise);
  r.finish();
}

}  // namespace

SimConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  SimConfig cfg = SimConfig::defaults();
  ObjectReader r(j, "");
  if (const json* w = r.child("workspace")) read_workspace(*w, cfg);
  if (const json* n = r.child("road_network")) read_road_network(*n, cfg);
  if (const json* m = r.child("measurement_cov")) cfg.measurement_cov = read_cov(*m);
  r.get("sigma_p", cfg.sigma_p);
  if (const json* f = r.child("filter")) read_filter(*f, cfg);
  if (const json* e = r.child("eer")) read_eer(*e, cfg);
  if (const json* rates = r.child("rates")) {
    ObjectReader rr(*rates, "rates");
    rr.get("filter_hz", cfg.rates.filter_hz);
    rr.get("guidance_hz", cfg.rates.guidance_hz);
    rr.finish();
  }
  r.get("duration", cfg.duration);
  r.get("agent_max_speed", cfg.agent_max_speed);
  if (const json* s = r.child("agent_start")) cfg.agent_start = read_point(*s, "agent_start");
  std::string policy = to_string(cfg.guidance);
  r.get("guidance", policy);
  cfg.guidance = parse_policy(policy);
  std::string model = to_string(cfg.motion_model);
  r.get("motion_model", model);
  if (model == "dmmn") {
    cfg.motion_model = MotionModelKind::kDmmn;
  } else if (model == "cv") {
    cfg.motion_model = MotionModelKind::kConstantVelocity;
  } else {
    throw ConfigError("motion_model must be dmmn or cv, got '" + model + "'");
  }
  r.get("seed", cfg.seed);
  r.get("model_weights", cfg.model_weights);
  if (const json* t = r.child("train")) read_train(*t, cfg);
  r.get("lawn_row_spacing", cfg.lawn_row_spacing);
  r.finish();
  cfg.validate();
  return cfg;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  SimConfig cfg = parse_config(ss.str());
  // Relative weight paths are taken from the config file's directory.
  if (!cfg.model_weights.empty() && cfg.model_weights.front() != '/') {
    const auto slash = path.find_last_of('/');
    if (slash != std::string::npos) cfg.model_weights = path.substr(0, slash + 1) + cfg.model_weights;
  }
  return cfg;
}

std::string dump_config(const SimConfig& cfg) {
  auto pt = [](const Pose2& p) { return json::array({p.x, p.y}); };
  auto rect = [](const Rect& r) { return json::array({r.min_x, r.min_y, r.max_x, r.max_y}); };
  json zones = json::array();
  for (const auto& z : cfg.workspace.zones) {
    json poly = json::array();
    for (const auto& v : z.vertices) poly.push_back(json::array({v.x, v.y}));
    zones.push_back({{"id", z.id}, {"polygon", poly}});
  }
  json nodes = json::object();
  for (const auto& [id, p] : cfg.road_network.nodes()) nodes[id] = pt(p);
  json transitions = json::object();
  for (const auto& [from, list] : cfg.road_network.transitions()) {
    json succ = json::object();
    for (const auto& t : list) succ[t.to] = t.probability;
    transitions[from] = succ;
  }
  const auto& m = cfg.measurement_cov;
  json j = {
      {"workspace", {{"bounds", rect(cfg.workspace.bounds)}, {"fov_half_extents", pt(cfg.fov_half_extents)}, {"zones", zones}}},
      {"road_network",
       {{"nodes", nodes},
        {"transitions", transitions},
        {"target_speed", cfg.road_network.target_speed()},
        {"start_node", cfg.road_network.start_node()}}},
      {"measurement_cov", json::array({json::array({m(0, 0), m(0, 1)}), json::array({m(1, 0), m(1, 1)})})},
      {"sigma_p", cfg.sigma_p},
      {"filter",
       {{"N", cfg.filter.n},
        {"a", cfg.filter.thresholds.multinomial},
        {"b", cfg.filter.thresholds.uniform},
        {"K_in", cfg.filter.k_in},
        {"detection_probability", cfg.filter.detection_probability}}},
      {"eer",
       {{"N_H", cfg.eer.n_h},
        {"N_M", cfg.eer.n_m},
        {"K", cfg.eer.horizon},
        {"grid", cfg.eer.grid},
        {"known_occlusion", cfg.eer.known_occlusion}}},
      {"rates", {{"filter_hz", cfg.rates.filter_hz}, {"guidance_hz", cfg.rates.guidance_hz}}},
      {"duration", cfg.duration},
      {"agent_max_speed", cfg.agent_max_speed},
      {"agent_start", pt(cfg.agent_start)},
      {"guidance", to_string(cfg.guidance)},
      {"motion_model", to_string(cfg.motion_model)},
      {"seed", cfg.seed},
      {"model_weights", cfg.model_weights},
      {"train",
       {{"d_model", cfg.train.hyper.d_model},
        {"heads", cfg.train.hyper.heads},
        {"layers", cfg.train.hyper.layers},
        {"d_ff", cfg.train.hyper.d_ff},
        {"pos_scale", cfg.train.hyper.pos_scale},
        {"learning_rate", cfg.train.optimizer.learning_rate},
        {"batch_size", cfg.train.optimizer.batch_size},
        {"epochs", cfg.train.optimizer.epochs},
        {"validation_fraction", cfg.train.optimizer.validation_fraction},
        {"seed", cfg.train.optimizer.seed},
        {"trajectory_duration", cfg.train.trajectory_duration},
        {"augment_symmetries", cfg.train.optimizer.augment_symmetries},
        {"stationary_fraction", cfg.train.optimizer.stationary_fraction},
        {"input_noise", cfg.train.optimizer.input_noise}}},
      {"lawn_row_spacing", cfg.lawn_row_spacing},
  };
  return j.dump(2) + "\n";
}

}  // namespace eertrack
