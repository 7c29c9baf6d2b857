#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "quadrl/dqn.hpp"
#include "quadrl/replay.hpp"
#include "quadrl/simcore.hpp"
#include "quadrl/wire/rpc.hpp"

namespace quadrl::orch {

/// A World hosted behind the simulator endpoints.
class SimService {
 public:
  SimService(arena::ArenaSpec arena, std::size_t n_agents, const sim::SimConfig& config,
             std::uint64_t seed, const std::string& address);

  sim::World& world() { return *world_; }
  std::string address() const { return server_.address(); }
  void stop() { server_.stop(); }

 private:
  std::unique_ptr<sim::World> world_;
  wire::Server server_;
};

/// A ReplayBuffer hosted behind PushExperiences / SampleBatch / ReplayStats.
class ReplayService {
 public:
  ReplayService(std::size_t capacity, std::uint64_t seed, const std::string& address);

  replay::ReplayBuffer& buffer() { return buffer_; }
  std::string address() const { return server_.address(); }
  void stop() { server_.stop(); }

 private:
  replay::ReplayBuffer buffer_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
  wire::Server server_;
};

struct TrainerOptions {
  dqn::Hyperparams hp;
  float max_range = dqn::kDefaultMaxRange;
  std::uint64_t seed = 1;  // network initialisation
  std::string replay_address;
  std::string address = "127.0.0.1:0";
  std::filesystem::path metrics_dir;  // empty: no CSVs
  std::chrono::milliseconds ready_poll = std::chrono::milliseconds(50);
};

struct TrainerStats {
  std::uint64_t steps = 0;
  std::uint64_t target_syncs = 0;
  std::uint64_t skipped_nonfinite = 0;
  std::uint64_t version = 0;
  double last_loss = 0.0;
  bool ready = false;
};

/// Owns the online network. Serves GetParams, collects ReportEpisode, and
/// trains on batches sampled from the replay service.
///
/// Published versions start at 1 (the initial weights); each applied update adds 1.
class Trainer {
 public:
  explicit Trainer(TrainerOptions options);
  ~Trainer();

  std::string address() const { return server_.address(); }

  /// Fixed-rate loop on a background thread: waits until the replay buffer is
  /// full, then runs one step per 1/train_hz.
  void start_loop();
  void stop();

  /// One step in the caller's thread (lockstep mode). False while the replay
  /// buffer is not full.
  bool step_once();

  TrainerStats stats() const;
  /// Steady-clock seconds of every applied step since the loop became ready.
  std::vector<double> step_times() const;

  std::vector<wire::EpisodeRecord> episodes() const;
  std::size_t episode_count() const;
  /// Mean reward of the last `window` reported episodes (nullopt below `window`).
  std::optional<double> moving_average(std::size_t window) const;

  /// Set when the background loop died; the message explains why.
  std::optional<std::string> failure() const;

  nn::NetParams params_copy() const;

 private:
  bool sample_and_train();
  void loop();
  void log_row(double rate);
  void record_episode(const wire::EpisodeRecord& r);
  wire::ParamsReply serve_params(std::uint64_t have);

  TrainerOptions opts_;
  std::unique_ptr<wire::Client> replay_;

  mutable std::mutex params_mu_;
  nn::NetParams online_;
  nn::NetParams target_;
  nn::AdamState<float> adam_;
  std::uint64_t cached_version_ = 0;
  std::shared_ptr<const wire::Bytes> cached_blob_;

  mutable std::mutex stats_mu_;
  TrainerStats stats_;
  std::vector<double> step_times_;
  std::chrono::steady_clock::time_point ready_at_{};
  std::uint64_t row_steps_ = 0;
  std::chrono::steady_clock::time_point row_at_{};
  std::optional<std::string> failure_;

  mutable std::mutex episodes_mu_;
  std::vector<wire::EpisodeRecord> episodes_;
  std::ofstream episodes_csv_;
  std::ofstream trainer_csv_;

  std::atomic<bool> running_{false};
  std::thread thread_;
  wire::Server server_;
};

/// Column header and row format shared by every episodes.csv writer.
inline constexpr const char* kEpisodesHeader = "agent_id,episode,reward,steps,epsilon,t_start,t_end";
std::string episode_csv_row(const wire::EpisodeRecord& r);

}  // namespace quadrl::orch
