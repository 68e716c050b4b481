#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>

namespace v2v {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline Vec2 unit_from_angle(double a) { return {std::cos(a), std::sin(a)}; }
constexpr Vec2 perp(Vec2 v) { return {-v.y, v.x}; }

struct Segment {
  Vec2 a;
  Vec2 b;
  friend constexpr bool operator==(const Segment&, const Segment&) = default;
};

// Rectangle centred at `center`, long axis along `heading`.
struct OrientedRect {
  Vec2 center;
  double heading = 0.0;
  double half_length = 0.0;
  double half_width = 0.0;

  [[nodiscard]] Vec2 axis_u() const { return unit_from_angle(heading); }
  [[nodiscard]] Vec2 axis_v() const { return perp(axis_u()); }

  // Counter-clockwise: front-right, front-left, rear-left, rear-right.
  [[nodiscard]] std::array<Vec2, 4> corners() const {
    const Vec2 u = axis_u() * half_length;
    const Vec2 v = axis_v() * half_width;
    return {center + u - v, center + u + v, center - u + v, center - u - v};
  }

  [[nodiscard]] std::array<Segment, 4> edges() const {
    const auto c = corners();
    return {Segment{c[0], c[1]}, Segment{c[1], c[2]}, Segment{c[2], c[3]}, Segment{c[3], c[0]}};
  }

  // Half-extent of the projection onto a unit axis.
  [[nodiscard]] double projected_radius(Vec2 axis) const {
    return half_length * std::abs(dot(axis_u(), axis)) + half_width * std::abs(dot(axis_v(), axis));
  }

  friend constexpr bool operator==(const OrientedRect&, const OrientedRect&) = default;
};

// Overlap means the interiors intersect; touching boundaries do not count.
inline bool overlaps(const OrientedRect& a, const OrientedRect& b) {
  const Vec2 d = b.center - a.center;
  const std::array<Vec2, 4> axes = {a.axis_u(), a.axis_v(), b.axis_u(), b.axis_v()};
  for (const Vec2& axis : axes) {
    if (std::abs(dot(d, axis)) >= a.projected_radius(axis) + b.projected_radius(axis)) return false;
  }
  return true;
}

// Rectangle against a segment; the segment's own direction never separates
// once the rectangle axes and the segment normal have been tested.
inline bool overlaps(const OrientedRect& r, const Segment& s) {
  const Vec2 dir = s.b - s.a;
  const double len = norm(dir);
  const Vec2 mid = (s.a + s.b) * 0.5;
  const Vec2 d = mid - r.center;
  std::array<Vec2, 3> axes = {r.axis_u(), r.axis_v(), Vec2{}};
  std::size_t n_axes = 2;
  if (len > 0.0) axes[n_axes++] = perp(dir * (1.0 / len));
  for (std::size_t i = 0; i < n_axes; ++i) {
    const Vec2 axis = axes[i];
    const double seg_radius = 0.5 * std::abs(dot(dir, axis));
    if (std::abs(dot(d, axis)) >= r.projected_radius(axis) + seg_radius) return false;
  }
  return true;
}

struct Ray {
  Vec2 origin;
  Vec2 dir;  // unit length
};

// Distance along the ray to the segment, if it is hit at t >= 0.
// Parallel segments are treated as misses.
inline std::optional<double> ray_hit(const Ray& ray, const Segment& s) {
  const Vec2 e = s.b - s.a;
  const double denom = cross(ray.dir, e);
  if (denom == 0.0) return std::nullopt;
  const Vec2 w = s.a - ray.origin;
  const double t = cross(w, e) / denom;
  const double u = cross(w, ray.dir) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

inline std::optional<double> ray_hit(const Ray& ray, const OrientedRect& r) {
  // Bounding-circle cull before the per-edge tests.
  const double radius = std::hypot(r.half_length, r.half_width);
  const Vec2 to_c = r.center - ray.origin;
  const double along = dot(to_c, ray.dir);
  const double perp_dist = std::abs(cross(ray.dir, to_c));
  if (perp_dist > radius || (along < 0.0 && norm(to_c) > radius)) return std::nullopt;
  std::optional<double> best;
  for (const Segment& e : r.edges()) {
    if (auto t = ray_hit(ray, e); t && (!best || *t < *best)) best = t;
  }
  return best;
}

inline bool point_in_rect(const OrientedRect& r, Vec2 p) {
  const Vec2 d = p - r.center;
  return std::abs(dot(d, r.axis_u())) < r.half_length && std::abs(dot(d, r.axis_v())) < r.half_width;
}

}  // namespace v2v
