#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "quadrl/arena.hpp"
#include "quadrl/state.hpp"

namespace quadrl::sim {

using AgentId = std::uint32_t;

struct SimConfig {
  int physics_hz = 4;
  double action_period = 1.0;  // seconds
  double forward_velocity = 1.0;
  double action_magnitude = 0.25;
  double camera_fov = std::numbers::pi / 2.0;
  double max_range = 20.0;
  double frame_period = 0.016;  // render-thread tick, seconds
  double agent_radius = arena::kDefaultAgentRadius;
  double lateral_clamp = 1.0;

  int substeps() const;
  void validate() const;
};

enum class TerminalKind : std::uint8_t { None = 0, Collision = 1, Goal = 2, Inactive = 3 };

struct StepOutcome {
  double reward = 0.0;
  TerminalKind kind = TerminalKind::Inactive;
};

struct QuadState {
  arena::Pose pose;
  Vec3 velocity;
  double desired_lateral = 0.0;
  bool alive = false;
  std::uint32_t steps_in_episode = 0;
  std::optional<DepthImage> prev_image;
};

class SimError : public std::runtime_error {
 public:
  enum class Code { UnknownAgent, AgentDead, PoseInCollision };
  SimError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// Render-thread tick source. A barrier wait blocks until the next tick boundary
/// t0 + k * period; every wait is counted.
class FrameClock {
 public:
  explicit FrameClock(double period_s);

  /// Blocks until the next tick and returns its index.
  std::uint64_t wait_barrier();

  std::uint64_t tick_index() const { return tick_index_.load(); }
  std::uint64_t barrier_waits() const { return barrier_waits_.load(); }
  double period() const { return period_.count(); }

 private:
  using Clock = std::chrono::steady_clock;
  std::chrono::duration<double> period_;
  Clock::time_point start_;
  std::atomic<std::uint64_t> tick_index_{0};
  std::atomic<std::uint64_t> barrier_waits_{0};
};

/// A set of non-interactive quadrotors sharing one arena. Agents never appear in
/// each other's depth images and are never tested against each other.
/// Thread-safe: every public call observes a consistent world state.
class World {
 public:
  World(arena::ArenaSpec arena, std::size_t n_agents, SimConfig config, std::uint64_t seed);

  World(const World&) = delete;
  World& operator=(const World&) = delete;

  std::size_t size() const { return agents_.size(); }
  const arena::ArenaSpec& arena() const { return arena_; }
  const SimConfig& config() const { return config_; }
  const FrameClock& clock() const { return clock_; }

  QuadState agent(AgentId id) const;

  void apply_action(AgentId id, Action action);
  std::vector<StepOutcome> step_action_period();

  DepthImage render_agent_depth(AgentId id) const;

  /// One barrier for the whole request, then every agent rendered at that tick.
  std::vector<StackedState> get_states_batched(std::span<const AgentId> ids);
  /// One barrier per agent, rendered sequentially.
  std::vector<StackedState> get_states_nonbatched(std::span<const AgentId> ids);

  void reset_vehicle(AgentId id, const arena::Pose& pose);
  void reset_all();

 private:
  void check_id(AgentId id) const;
  DepthImage render_locked(const QuadState& q) const;
  StackedState observe_locked(AgentId id);

  arena::ArenaSpec arena_;
  SimConfig config_;
  std::vector<Vec3> ray_dirs_;
  std::vector<std::mt19937_64> spawn_rngs_;

  mutable std::mutex mutex_;
  std::vector<QuadState> agents_;
  FrameClock clock_;
};

std::unique_ptr<World> create_world(arena::ArenaSpec arena, std::size_t n_agents,
                                    const SimConfig& config, std::uint64_t seed);

/// Unit ray directions for the 32x32 pinhole camera looking along +x, row-major.
/// Principal point sits on pixel (16, 16), so that pixel's ray is exactly +x.
std::vector<Vec3> camera_rays(double fov);

/// Stream used for agent `index` of a world seeded with `seed`.
std::mt19937_64 agent_stream(std::uint64_t seed, std::uint64_t index);

}  // namespace quadrl::sim
