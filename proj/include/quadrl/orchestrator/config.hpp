#pragma once

// Experiment topology, read from JSON:
//
// {
//   "sims":    [{"address": "127.0.0.1:0", "arena": "arenas/easy_corridor.arena", "n_agents": 8}],
//   "replay":  {"address": "127.0.0.1:0"},
//   "trainer": {"address": "127.0.0.1:0"},
//   "hyperparams": {"gamma": 0.99, "replay_capacity": 15000, "batch_size": 32,
//                   "target_sync_every": 150, "train_hz": 50, "lr": 1e-4,
//                   "beta1": 0.9, "beta2": 0.999, "adam_eps": 1e-8, "grad_clip": 10},
//   "sim":     {"physics_hz": 4, "action_period": 1, "forward_velocity": 1,
//               "action_magnitude": 0.25, "camera_fov_deg": 90, "max_range": 20,
//               "frame_period": 0.016, "agent_radius": 0.3, "lateral_clamp": 1},
//   "seeds":   {"base": 1},
//   "run":     {"threshold": 150, "window": 20, "budget_s": 1800, "max_ticks": 0,
//               "episode_step_cap": 200, "deterministic": false, "actor_delay_ms": 0,
//               "train_steps_per_tick": 1, "out": "runs/latest"}
// }
//
// Every key except "sims" is optional. Relative arena paths resolve against
// the config file's directory. Port 0 binds an ephemeral port (in-process runs).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "quadrl/arena.hpp"
#include "quadrl/dqn.hpp"
#include "quadrl/simcore.hpp"

namespace quadrl::orch {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimInstance {
  std::string address = "127.0.0.1:0";
  std::filesystem::path arena_path;
  std::size_t n_agents = 1;
  arena::ArenaSpec arena;  // loaded and validated
};

struct Seeds {
  std::uint64_t base = 1;

  std::uint64_t network() const;
  std::uint64_t replay() const;
  std::uint64_t world(std::size_t sim_index) const;
  std::uint64_t actor(std::size_t sim_index) const;
};

struct RunSettings {
  double threshold = 150.0;
  std::size_t window = 20;
  double budget_s = 1800.0;
  std::uint64_t max_ticks = 0;  // per actor; 0 = unlimited
  std::uint32_t episode_step_cap = 200;
  bool deterministic = false;
  double actor_delay_ms = 0.0;
  std::size_t train_steps_per_tick = 1;  // deterministic mode only
  std::filesystem::path out = "runs/latest";
};

struct ExperimentConfig {
  std::vector<SimInstance> sims;
  std::string replay_address = "127.0.0.1:0";
  std::string trainer_address = "127.0.0.1:0";
  dqn::Hyperparams hp;
  sim::SimConfig sim;
  Seeds seeds;
  RunSettings run;
  std::string source_text;  // verbatim config, echoed into the manifest

  std::size_t total_agents() const;
  void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text,
                              const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Git blob hash (SHA-1 over "blob <size>\0" + contents), lowercase hex.
std::string git_blob_hash(const std::string& contents);
std::string git_blob_hash_file(const std::filesystem::path& path);

}  // namespace quadrl::orch
