#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace eertrack {

/// Planar position in the inertial frame, meters.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Pose2() = default;
  constexpr Pose2(double px, double py) : x(px), y(py) {}

  bool finite() const { return std::isfinite(x) && std::isfinite(y); }

  Pose2 operator+(const Pose2& o) const { return {x + o.x, y + o.y}; }
  Pose2 operator-(const Pose2& o) const { return {x - o.x, y - o.y}; }
  Pose2 operator*(double s) const { return {x * s, y * s}; }
  Pose2& operator+=(const Pose2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  bool operator==(const Pose2&) const = default;
};

inline double norm(const Pose2& p) { return std::hypot(p.x, p.y); }
inline double distance(const Pose2& a, const Pose2& b) { return norm(a - b); }

/// Axis-aligned rectangle [min_x, max_x] x [min_y, max_y].
struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  double area() const { return width() * height(); }
  Pose2 center() const { return {0.5 * (min_x + max_x), 0.5 * (min_y + max_y)}; }
  bool contains(const Pose2& p) const {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }
  Pose2 clamp(const Pose2& p) const;
  bool valid() const { return max_x > min_x && max_y > min_y; }
};

/// Projected camera footprint S: an axis-aligned rectangle centered on the agent.
struct SensorFootprint {
  Pose2 center;
  Pose2 half_extents{0.75, 0.75};

  SensorFootprint() = default;
  SensorFootprint(Pose2 c, Pose2 half);
};

/// Occlusion region, stored as a simple polygon (counter-clockwise or clockwise).
struct OcclusionZone {
  std::string id;
  std::vector<Pose2> vertices;

  OcclusionZone(std::string label, std::vector<Pose2> polygon);
  static OcclusionZone rectangle(std::string label, const Rect& r);

  double area() const;
  bool contains(const Pose2& p) const;
  Rect bounding_box() const;
};

struct Workspace {
  Rect bounds{0.0, 0.0, 11.0, 5.5};
  std::vector<OcclusionZone> zones;

  Workspace() = default;
  Workspace(Rect b, std::vector<OcclusionZone> z);
};

bool fov_contains(const SensorFootprint& fov, const Pose2& p);
bool is_occluded(const Workspace& ws, const Pose2& p);
bool is_observable(const Workspace& ws, const SensorFootprint& fov, const Pose2& p);

}  // namespace eertrack
