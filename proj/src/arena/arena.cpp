#include "quadrl/arena.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace quadrl::arena {

ArenaParseError::ArenaParseError(int line, const std::string& what)
    : std::runtime_error("arena:" + std::to_string(line) + ": " + what), line_(line) {}

ArenaInvariantError::ArenaInvariantError(std::string rule, const std::string& what)
    : std::runtime_error("arena invariant '" + rule + "' violated: " + what),
      rule_(std::move(rule)) {}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_number(std::string_view field, int line) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || !std::isfinite(value)) {
    throw ArenaParseError(line, "expected a decimal number, got '" + std::string(field) + "'");
  }
  return value;
}

template <std::size_t N>
std::array<double, N> parse_numbers(const std::vector<std::string_view>& fields, int line) {
  if (fields.size() != N + 1) {
    throw ArenaParseError(line, "'" + std::string(fields[0]) + "' expects " + std::to_string(N) +
                                    " numbers, got " + std::to_string(fields.size() - 1));
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_number(fields[i + 1], line);
  return out;
}

Aabb box_from(const std::array<double, 6>& v) {
  return {{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
}

std::string fmt_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

bool overlaps(const Aabb& a, const Aabb& b) {
  return a.lo.x <= b.hi.x && b.lo.x <= a.hi.x && a.lo.y <= b.hi.y && b.lo.y <= a.hi.y &&
         a.lo.z <= b.hi.z && b.lo.z <= a.hi.z;
}

// Ray/box slab test. Returns false on miss; otherwise [t_near, t_far] of the
// (closed) intersection with the infinite line, t_near possibly negative.
bool slab(const Aabb& box, const Vec3& o, const Vec3& d, double& t_near, double& t_far) {
  t_near = -std::numeric_limits<double>::infinity();
  t_far = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double oa = o[axis];
    const double da = d[axis];
    const double lo = box.lo[axis];
    const double hi = box.hi[axis];
    if (da == 0.0) {
      if (oa < lo || oa > hi) return false;
      continue;
    }
    double t0 = (lo - oa) / da;
    double t1 = (hi - oa) / da;
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return false;
  }
  return true;
}

}  // namespace

ArenaSpec load_arena(std::string_view text, double agent_radius) {
  enum class Expect { Header, Bounds, Spawn, Goal, Boxes };
  Expect expect = Expect::Header;
  ArenaSpec spec;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    const std::string_view key = fields[0];

    switch (expect) {
      case Expect::Header:
        if (key != "arena" || fields.size() != 2 || fields[1] != "v1") {
          throw ArenaParseError(line_no, "expected header 'arena v1'");
        }
        expect = Expect::Bounds;
        break;
      case Expect::Bounds:
        if (key != "bounds") throw ArenaParseError(line_no, "expected 'bounds'");
        spec.bounds = box_from(parse_numbers<6>(fields, line_no));
        expect = Expect::Spawn;
        break;
      case Expect::Spawn: {
        if (key != "spawn") throw ArenaParseError(line_no, "expected 'spawn'");
        const auto v = parse_numbers<6>(fields, line_no);
        spec.spawn = {v[0], v[1], v[2], v[3], v[4], v[5]};
        expect = Expect::Goal;
        break;
      }
      case Expect::Goal:
        if (key != "goal") throw ArenaParseError(line_no, "expected 'goal'");
        spec.goal_x = parse_numbers<1>(fields, line_no)[0];
        expect = Expect::Boxes;
        break;
      case Expect::Boxes:
        if (key != "box") {
          throw ArenaParseError(line_no, "unexpected '" + std::string(key) + "', expected 'box'");
        }
        spec.obstacles.push_back(box_from(parse_numbers<6>(fields, line_no)));
        break;
    }
  }
  if (expect != Expect::Boxes) {
    throw ArenaParseError(line_no, "truncated arena file: missing header, bounds, spawn or goal");
  }
  validate(spec, agent_radius);
  return spec;
}

ArenaSpec load_arena_file(const std::filesystem::path& path, double agent_radius) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open arena file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_arena(ss.str(), agent_radius);
}

void validate(const ArenaSpec& spec, double agent_radius) {
  if (!spec.bounds.well_formed() || spec.bounds.lo.x == spec.bounds.hi.x ||
      spec.bounds.lo.y == spec.bounds.hi.y || spec.bounds.lo.z == spec.bounds.hi.z) {
    throw ArenaInvariantError("bounds-well-formed", "bounds must have positive extent");
  }
  for (std::size_t i = 0; i < spec.obstacles.size(); ++i) {
    const Aabb& b = spec.obstacles[i];
    if (!b.well_formed()) {
      throw ArenaInvariantError("obstacle-well-formed",
                                "box " + std::to_string(i) + " has min > max on some axis");
    }
    if (!spec.bounds.contains(b)) {
      throw ArenaInvariantError("obstacle-inside-bounds",
                                "box " + std::to_string(i) + " extends past bounds");
    }
  }
  const SpawnRegion& s = spec.spawn;
  if (s.x0 > s.x1 || s.y0 > s.y1) {
    throw ArenaInvariantError("spawn-well-formed", "spawn min corner exceeds max corner");
  }
  if (!(s.yaw >= -std::numbers::pi && s.yaw < std::numbers::pi)) {
    throw ArenaInvariantError("spawn-yaw-range", "spawn yaw must lie in [-pi, pi)");
  }
  const Aabb spawn_rect{{s.x0, s.y0, s.z}, {s.x1, s.y1, s.z}};
  const Vec3 r{agent_radius, agent_radius, agent_radius};
  const Aabb shrunk{spec.bounds.lo + r, spec.bounds.hi - r};
  if (!shrunk.well_formed() || !shrunk.contains(spawn_rect)) {
    throw ArenaInvariantError("spawn-inside-bounds",
                              "spawn rectangle must keep the agent radius inside bounds");
  }
  for (std::size_t i = 0; i < spec.obstacles.size(); ++i) {
    const Aabb inflated{spec.obstacles[i].lo - r, spec.obstacles[i].hi + r};
    if (overlaps(inflated, spawn_rect)) {
      throw ArenaInvariantError("spawn-clear",
                                "spawn rectangle intersects inflated box " + std::to_string(i));
    }
  }
  if (!(s.x1 < spec.goal_x && spec.goal_x <= spec.bounds.hi.x)) {
    throw ArenaInvariantError("goal-placement", "require spawn x-max < goal_x <= bounds x-max");
  }
}

std::string render_arena(const ArenaSpec& spec) {
  std::ostringstream out;
  auto vec = [&](const Vec3& v) {
    out << ' ' << fmt_number(v.x) << ' ' << fmt_number(v.y) << ' ' << fmt_number(v.z);
  };
  out << "arena v1\n";
  out << "bounds";
  vec(spec.bounds.lo);
  vec(spec.bounds.hi);
  out << '\n';
  const SpawnRegion& s = spec.spawn;
  out << "spawn " << fmt_number(s.x0) << ' ' << fmt_number(s.y0) << ' ' << fmt_number(s.x1) << ' '
      << fmt_number(s.y1) << ' ' << fmt_number(s.z) << ' ' << fmt_number(s.yaw) << '\n';
  out << "goal " << fmt_number(spec.goal_x) << '\n';
  for (const Aabb& b : spec.obstacles) {
    out << "box";
    vec(b.lo);
    vec(b.hi);
    out << '\n';
  }
  return out.str();
}

bool collides(const ArenaSpec& spec, const Vec3& p, double radius) {
  const Aabb& b = spec.bounds;
  if (p.x - radius < b.lo.x || p.x + radius > b.hi.x || p.y - radius < b.lo.y ||
      p.y + radius > b.hi.y || p.z - radius < b.lo.z || p.z + radius > b.hi.z) {
    return true;
  }
  return std::any_of(spec.obstacles.begin(), spec.obstacles.end(),
                     [&](const Aabb& box) { return box.distance(p) <= radius; });
}

double raycast(const ArenaSpec& spec, const Vec3& origin, const Vec3& dir, double max_range) {
  if (!spec.bounds.contains(origin)) return 0.0;
  double best = max_range;

  // Exit through the bounds walls.
  for (int axis = 0; axis < 3; ++axis) {
    const double d = dir[axis];
    if (d > 0.0) {
      best = std::min(best, (spec.bounds.hi[axis] - origin[axis]) / d);
    } else if (d < 0.0) {
      best = std::min(best, (spec.bounds.lo[axis] - origin[axis]) / d);
    }
  }

  for (const Aabb& box : spec.obstacles) {
    double t_near = 0.0;
    double t_far = 0.0;
    if (!slab(box, origin, dir, t_near, t_far)) continue;
    if (t_far < 0.0) continue;
    if (t_near <= 0.0) return 0.0;  // origin inside or on the box
    best = std::min(best, t_near);
  }
  return std::clamp(best, 0.0, max_range);
}

Pose sample_spawn(const ArenaSpec& spec, std::mt19937_64& rng) {
  const SpawnRegion& s = spec.spawn;
  // Draw both coordinates unconditionally so degenerate regions keep the stream aligned.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double ux = unit(rng);
  const double uy = unit(rng);
  return Pose{{s.x0 + (s.x1 - s.x0) * ux, s.y0 + (s.y1 - s.y0) * uy, s.z}, s.yaw};
}

}  // namespace quadrl::arena
