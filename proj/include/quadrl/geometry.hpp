#pragma once

#include <cmath>

namespace quadrl {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

/// Closed axis-aligned box [lo, hi].
struct Aabb {
  Vec3 lo;
  Vec3 hi;

  constexpr bool operator==(const Aabb&) const = default;

  constexpr bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
  constexpr bool contains(const Aabb& b) const { return contains(b.lo) && contains(b.hi); }
  constexpr bool well_formed() const { return lo.x <= hi.x && lo.y <= hi.y && lo.z <= hi.z; }
  constexpr Vec3 center() const { return (lo + hi) * 0.5; }

  /// Euclidean distance from p to the box; zero when p is inside or on the surface.
  double distance(const Vec3& p) const {
    const double dx = std::fmax(std::fmax(lo.x - p.x, 0.0), p.x - hi.x);
    const double dy = std::fmax(std::fmax(lo.y - p.y, 0.0), p.y - hi.y);
    const double dz = std::fmax(std::fmax(lo.z - p.z, 0.0), p.z - hi.z);
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  }
};

}  // namespace quadrl
