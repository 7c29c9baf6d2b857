#pragma once

#include <filesystem>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "quadrl/geometry.hpp"

namespace quadrl::arena {

inline constexpr double kDefaultAgentRadius = 0.3;

struct SpawnRegion {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  bool operator==(const SpawnRegion&) const = default;
};

/// Immutable world geometry. Obstacles are full boxes; the world is closed by `bounds`.
struct ArenaSpec {
  Aabb bounds;
  SpawnRegion spawn;
  double goal_x = 0.0;
  std::vector<Aabb> obstacles;

  bool operator==(const ArenaSpec&) const = default;
};

struct Pose {
  Vec3 position;
  double yaw = 0.0;  // [-pi, pi)

  bool operator==(const Pose&) const = default;
};

class ArenaParseError : public std::runtime_error {
 public:
  ArenaParseError(int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

class ArenaInvariantError : public std::runtime_error {
 public:
  ArenaInvariantError(std::string rule, const std::string& what);
  const std::string& rule() const { return rule_; }

 private:
  std::string rule_;
};

/// Parses and validates an `arena v1` document.
ArenaSpec load_arena(std::string_view text, double agent_radius = kDefaultAgentRadius);
ArenaSpec load_arena_file(const std::filesystem::path& path,
                          double agent_radius = kDefaultAgentRadius);

/// Throws ArenaInvariantError naming the first violated rule.
void validate(const ArenaSpec& spec, double agent_radius = kDefaultAgentRadius);

/// Canonical writer; load_arena(render_arena(s)) == s.
std::string render_arena(const ArenaSpec& spec);

/// True iff the sphere (p, radius) touches an obstacle or is not fully inside bounds.
bool collides(const ArenaSpec& spec, const Vec3& p, double radius);

/// Distance along a unit ray to the nearest surface, capped at max_range.
/// Origins inside an obstacle or outside bounds return 0.
double raycast(const ArenaSpec& spec, const Vec3& origin, const Vec3& dir,
               double max_range = std::numeric_limits<double>::infinity());

Pose sample_spawn(const ArenaSpec& spec, std::mt19937_64& rng);

inline bool reached_goal(const ArenaSpec& spec, const Vec3& p) { return p.x >= spec.goal_x; }

}  // namespace quadrl::arena
