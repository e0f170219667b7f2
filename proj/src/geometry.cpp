#include "eertrack/geometry.hpp"

#include <algorithm>

#include "eertrack/errors.hpp"

namespace eertrack {

Pose2 Rect::clamp(const Pose2& p) const {
  return {std::clamp(p.x, min_x, max_x), std::clamp(p.y, min_y, max_y)};
}

SensorFootprint::SensorFootprint(Pose2 c, Pose2 half) : center(c), half_extents(half) {
  if (!(half.x > 0.0) || !(half.y > 0.0)) {
    throw ConfigError("sensor footprint half extents must be strictly positive");
  }
  if (!c.finite()) throw ConfigError("sensor footprint center must be finite");
}

OcclusionZone::OcclusionZone(std::string label, std::vector<Pose2> polygon)
    : id(std::move(label)), vertices(std::move(polygon)) {
  if (vertices.size() < 3) throw ConfigError("occlusion zone '" + id + "' needs at least 3 vertices");
  for (const auto& v : vertices) {
    if (!v.finite()) throw ConfigError("occlusion zone '" + id + "' has a non-finite vertex");
  }
  if (!(area() > 0.0)) throw ConfigError("occlusion zone '" + id + "' has zero area");
}

OcclusionZone OcclusionZone::rectangle(std::string label, const Rect& r) {
  return OcclusionZone(std::move(label), {{r.min_x, r.min_y}, {r.max_x, r.min_y}, {r.max_x, r.max_y}, {r.min_x, r.max_y}});
}

double OcclusionZone::area() const {
  double twice = 0.0;
  for (std::size_t i = 0, n = vertices.size(); i < n; ++i) {
    const Pose2& a = vertices[i];
    const Pose2& b = vertices[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * std::abs(twice);
}

namespace {

bool on_segment(const Pose2& p, const Pose2& a, const Pose2& b) {
  const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  const double scale = std::max({1.0, std::abs(b.x - a.x), std::abs(b.y - a.y)});
  if (std::abs(cross) > 1e-12 * scale) return false;
  return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) && p.y >= std::min(a.y, b.y) &&
         p.y <= std::max(a.y, b.y);
}

}  // namespace

bool OcclusionZone::contains(const Pose2& p) const {
  const std::size_t n = vertices.size();
  // Boundary counts as inside.
  for (std::size_t i = 0; i < n; ++i) {
    if (on_segment(p, vertices[i], vertices[(i + 1) % n])) return true;
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Pose2& a = vertices[i];
    const Pose2& b = vertices[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

Rect OcclusionZone::bounding_box() const {
  Rect r{vertices[0].x, vertices[0].y, vertices[0].x, vertices[0].y};
  for (const auto& v : vertices) {
    r.min_x = std::min(r.min_x, v.x);
    r.min_y = std::min(r.min_y, v.y);
    r.max_x = std::max(r.max_x, v.x);
    r.max_y = std::max(r.max_y, v.y);
  }
  return r;
}

Workspace::Workspace(Rect b, std::vector<OcclusionZone> z) : bounds(b), zones(std::move(z)) {
  if (!bounds.valid()) throw ConfigError("workspace bounds must have positive width and height");
  for (const auto& zone : zones) {
    for (const auto& v : zone.vertices) {
      if (!bounds.contains(v)) throw ConfigError("occlusion zone '" + zone.id + "' extends outside the workspace");
    }
  }
}

bool fov_contains(const SensorFootprint& fov, const Pose2& p) {
  return std::abs(p.x - fov.center.x) <= fov.half_extents.x && std::abs(p.y - fov.center.y) <= fov.half_extents.y;
}

bool is_occluded(const Workspace& ws, const Pose2& p) {
  return std::any_of(ws.zones.begin(), ws.zones.end(), [&](const OcclusionZone& z) { return z.contains(p); });
}

bool is_observable(const Workspace& ws, const SensorFootprint& fov, const Pose2& p) {
  return fov_contains(fov, p) && !is_occluded(ws, p);
}

}  // namespace eertrack
