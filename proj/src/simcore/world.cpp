#include <algorithm>
#include <cmath>
#include <thread>

#include "quadrl/simcore.hpp"

namespace quadrl::sim {

int SimConfig::substeps() const {
  return static_cast<int>(std::lround(physics_hz * action_period));
}

void SimConfig::validate() const {
  const double n = physics_hz * action_period;
  if (physics_hz <= 0 || action_period <= 0.0 || std::abs(n - std::round(n)) > 1e-9 || n < 1.0) {
    throw std::invalid_argument("physics_hz * action_period must be a positive whole number");
  }
  if (!(frame_period > 0.0)) throw std::invalid_argument("frame_period must be > 0");
  if (!(max_range > 0.0)) throw std::invalid_argument("max_range must be > 0");
  if (!(agent_radius > 0.0)) throw std::invalid_argument("agent_radius must be > 0");
  if (!(lateral_clamp >= 0.0)) throw std::invalid_argument("lateral_clamp must be >= 0");
  if (!(camera_fov > 0.0 && camera_fov < std::numbers::pi)) {
    throw std::invalid_argument("camera_fov must lie in (0, pi)");
  }
}

FrameClock::FrameClock(double period_s) : period_(period_s), start_(Clock::now()) {
  if (!(period_s > 0.0)) throw std::invalid_argument("frame period must be > 0");
}

std::uint64_t FrameClock::wait_barrier() {
  const auto elapsed = std::chrono::duration<double>(Clock::now() - start_);
  const auto next = static_cast<std::uint64_t>(std::floor(elapsed / period_)) + 1;
  std::this_thread::sleep_until(start_ + std::chrono::duration_cast<Clock::duration>(period_ * next));
  std::uint64_t seen = tick_index_.load();
  while (seen < next && !tick_index_.compare_exchange_weak(seen, next)) {
  }
  barrier_waits_.fetch_add(1);
  return next;
}

std::vector<Vec3> camera_rays(double fov) {
  const double half = kImageSide / 2.0;
  const double focal = half / std::tan(fov / 2.0);
  std::vector<Vec3> rays;
  rays.reserve(kImagePixels);
  for (int row = 0; row < kImageSide; ++row) {
    for (int col = 0; col < kImageSide; ++col) {
      // Image right is world -y, image up is world +z.
      const Vec3 d{focal, -(col - half), -(row - half)};
      rays.push_back(d * (1.0 / d.norm()));
    }
  }
  return rays;
}

std::mt19937_64 agent_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

World::World(arena::ArenaSpec arena, std::size_t n_agents, SimConfig config, std::uint64_t seed)
    : arena_(std::move(arena)), config_(config), clock_(config.frame_period) {
  config_.validate();
  if (n_agents < 1) throw std::invalid_argument("a world needs at least one agent");
  ray_dirs_ = camera_rays(config_.camera_fov);
  spawn_rngs_.reserve(n_agents);
  agents_.resize(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) {
    spawn_rngs_.push_back(agent_stream(seed, i));
    QuadState& q = agents_[i];
    q.pose = arena::sample_spawn(arena_, spawn_rngs_[i]);
    q.alive = true;
  }
}

void World::check_id(AgentId id) const {
  if (id >= agents_.size()) {
    throw SimError(SimError::Code::UnknownAgent, "unknown agent id " + std::to_string(id));
  }
}

QuadState World::agent(AgentId id) const {
  check_id(id);
  std::lock_guard lock(mutex_);
  return agents_[id];
}

void World::apply_action(AgentId id, Action action) {
  check_id(id);
  std::lock_guard lock(mutex_);
  QuadState& q = agents_[id];
  if (!q.alive) {
    throw SimError(SimError::Code::AgentDead, "agent " + std::to_string(id) + " is not alive");
  }
  const double delta = action == Action::Left ? config_.action_magnitude : -config_.action_magnitude;
  q.desired_lateral =
      std::clamp(q.desired_lateral + delta, -config_.lateral_clamp, config_.lateral_clamp);
}

std::vector<StepOutcome> World::step_action_period() {
  std::lock_guard lock(mutex_);
  const int substeps = config_.substeps();
  const double dt = config_.action_period / substeps;
  std::vector<StepOutcome> outcomes(agents_.size());
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    QuadState& q = agents_[i];
    if (!q.alive) continue;
    bool crashed = false;
    for (int s = 0; s < substeps && !crashed; ++s) {
      q.velocity = {config_.forward_velocity, q.desired_lateral, 0.0};
      q.pose.position += q.velocity * dt;
      // Checked every substep so thin walls cannot be skipped over.
      crashed = arena::collides(arena_, q.pose.position, config_.agent_radius);
    }
    q.steps_in_episode += 1;
    if (crashed) {
      q.alive = false;
      outcomes[i] = {kCollisionReward, TerminalKind::Collision};
    } else if (arena::reached_goal(arena_, q.pose.position)) {
      q.alive = false;
      outcomes[i] = {kSurvivalReward, TerminalKind::Goal};
    } else {
      outcomes[i] = {kSurvivalReward, TerminalKind::None};
    }
  }
  return outcomes;
}

DepthImage World::render_locked(const QuadState& q) const {
  DepthImage img;
  const float cap = static_cast<float>(config_.max_range);
  for (std::size_t p = 0; p < kImagePixels; ++p) {
    const double d = arena::raycast(arena_, q.pose.position, ray_dirs_[p], config_.max_range);
    img.depths[p] = std::min(static_cast<float>(d), cap);
  }
  return img;
}

DepthImage World::render_agent_depth(AgentId id) const {
  check_id(id);
  std::lock_guard lock(mutex_);
  return render_locked(agents_[id]);
}

StackedState World::observe_locked(AgentId id) {
  QuadState& q = agents_[id];
  StackedState s;
  s.image_now = render_locked(q);
  s.image_prev = q.prev_image ? *q.prev_image : s.image_now;
  s.velocity = {static_cast<float>(q.velocity.x), static_cast<float>(q.velocity.y),
                static_cast<float>(q.velocity.z)};
  q.prev_image = s.image_now;
  return s;
}

std::vector<StackedState> World::get_states_batched(std::span<const AgentId> ids) {
  for (AgentId id : ids) check_id(id);
  clock_.wait_barrier();
  std::lock_guard lock(mutex_);
  std::vector<StackedState> out;
  out.reserve(ids.size());
  for (AgentId id : ids) out.push_back(observe_locked(id));
  return out;
}

std::vector<StackedState> World::get_states_nonbatched(std::span<const AgentId> ids) {
  for (AgentId id : ids) check_id(id);
  std::vector<StackedState> out;
  out.reserve(ids.size());
  for (AgentId id : ids) {
    clock_.wait_barrier();
    std::lock_guard lock(mutex_);
    out.push_back(observe_locked(id));
  }
  return out;
}

void World::reset_vehicle(AgentId id, const arena::Pose& pose) {
  check_id(id);
  if (!pose.position.finite() || arena::collides(arena_, pose.position, config_.agent_radius)) {
    throw SimError(SimError::Code::PoseInCollision,
                   "reset pose for agent " + std::to_string(id) + " is not collision-free");
  }
  std::lock_guard lock(mutex_);
  QuadState& q = agents_[id];
  q.pose = pose;
  q.velocity = {};
  q.desired_lateral = 0.0;
  q.steps_in_episode = 0;
  q.prev_image.reset();
  q.alive = true;
}

void World::reset_all() {
  for (AgentId id = 0; id < agents_.size(); ++id) {
    arena::Pose pose;
    {
      std::lock_guard lock(mutex_);
      pose = arena::sample_spawn(arena_, spawn_rngs_[id]);
    }
    reset_vehicle(id, pose);
  }
}

std::unique_ptr<World> create_world(arena::ArenaSpec arena, std::size_t n_agents,
                                    const SimConfig& config, std::uint64_t seed) {
  return std::make_unique<World>(std::move(arena), n_agents, config, seed);
}

}  // namespace quadrl::sim
