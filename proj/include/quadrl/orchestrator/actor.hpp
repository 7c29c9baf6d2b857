#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "quadrl/arena.hpp"
#include "quadrl/dqn.hpp"
#include "quadrl/wire/rpc.hpp"

namespace quadrl::orch {

struct ActorOptions {
  std::string sim_address;
  std::string replay_address;
  std::string trainer_address;
  arena::ArenaSpec arena;  // for spawn sampling
  std::size_t n_agents = 1;
  std::uint32_t agent_offset = 0;  // global id of local agent 0
  std::uint64_t seed = 1;
  std::uint32_t episode_step_cap = 200;
  double delay_ms = 0.0;  // injected per-tick latency
  float max_range = dqn::kDefaultMaxRange;
  /// Episode timestamps: simulated (ticks x action_period) instead of wall clock.
  bool simulated_time = false;
  double action_period = 1.0;
  std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now();
  int max_retries = 3;
};

struct ActorStats {
  std::uint64_t ticks = 0;
  std::uint64_t episodes = 0;
  std::uint64_t pushed = 0;
  std::uint64_t rejected = 0;
  std::uint64_t param_refreshes = 0;
  std::uint64_t params_version = 0;
  double max_tick_gap_s = 0.0;
  double last_epsilon = 1.0;
};

/// Drives every agent of one simulator instance with a local policy snapshot.
///
/// Per tick: epsilon from replay stats, one batched state request, batched
/// Q-values, ApplyActions, StepPeriod, PushExperiences. Agents that finish
/// are reset on the spot, so no agent ever waits on another's episode.
class Actor {
 public:
  explicit Actor(ActorOptions options);

  void tick();

  /// Ticks until `stop` is set or `max_ticks` (0 = unlimited) is reached.
  /// Lost connections are retried `max_retries` times; returns false if the
  /// actor gave up on them.
  bool run(const std::atomic<bool>& stop, std::uint64_t max_ticks = 0);

  const ActorStats& stats() const { return stats_; }

  /// Observes every pushed batch together with the global ids of its agents.
  using PushObserver = std::function<void(const std::vector<Experience>&, const std::vector<std::uint32_t>&)>;
  void set_push_observer(PushObserver obs) { observer_ = std::move(obs); }

 private:
  struct Episode {
    std::uint64_t index = 0;
    double reward = 0.0;
    std::uint32_t steps = 0;
    std::uint64_t t_start_us = 0;
  };

  void connect();
  void refresh_params();
  void fetch_missing_states();
  void reset_agent(std::uint32_t local);
  void finish_episode(std::uint32_t local, double epsilon);
  std::uint64_t now_us() const;

  ActorOptions opts_;
  std::unique_ptr<wire::Client> sim_, replay_, trainer_;
  nn::NetParams params_;
  std::mt19937_64 policy_rng_;
  std::mt19937_64 spawn_rng_;
  std::vector<std::optional<StackedState>> current_;
  std::vector<Episode> episodes_;
  std::vector<wire::EpisodeRecord> finished_;
  ActorStats stats_;
  std::optional<std::chrono::steady_clock::time_point> last_tick_;
  PushObserver observer_;
};

}  // namespace quadrl::orch
