#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "quadrl/orchestrator/experiment.hpp"
#include "quadrl/wire/rpc.hpp"

namespace quadrl::bench {

enum class Method { Batched, NonBatched };
std::string_view method_name(Method m);

struct LatencySample {
  Method method = Method::Batched;
  std::size_t n_agents = 0;
  std::size_t calls = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::uint64_t barrier_waits = 0;  // total over the measured calls
  std::vector<double> samples_ms;
  std::vector<std::uint64_t> barrier_deltas;
};

struct LatencyOptions {
  std::size_t calls = 1000;
  std::size_t warmup = 50;
};

/// Linear interpolation between closest ranks; q in [0, 1].
double percentile(std::vector<double> values, double q);

/// Times `calls` state collections of agents 0..n-1 against a running simulator.
LatencySample measure_latency(wire::Client& sim, Method method, std::size_t n_agents,
                              const LatencyOptions& options);

/// One in-process simulator per agent count; both methods per count, one cell at a time.
std::vector<LatencySample> bench_latency(const arena::ArenaSpec& arena, const sim::SimConfig& config,
                                         const std::vector<std::size_t>& agent_counts,
                                         const LatencyOptions& options, std::uint64_t seed = 1);

void write_latency_csv(const std::vector<LatencySample>& rows, const std::filesystem::path& dir);

struct SpeedupRun {
  std::size_t n_agents = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  std::optional<double> time_to_threshold_s;
  double elapsed_s = 0.0;
  std::size_t episodes = 0;
  std::uint64_t train_steps = 0;
};

struct SpeedupRow {
  std::size_t n_agents = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<bool> converged;
  /// Median with non-converged runs ranked as slower than every converged one;
  /// nullopt when that places the median among them.
  std::optional<double> median_s;
};

/// Median over runs where a non-converged run counts as +infinity.
std::optional<double> censored_median(const std::vector<std::optional<double>>& times);

struct SpeedupOptions {
  std::vector<std::size_t> agent_counts{1, 4, 8};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double threshold = 150.0;
  std::filesystem::path out;
  double progress_every_s = 0.0;
};

/// run_experiment per (n_agents, seed) on the first sim instance of `base`.
std::vector<SpeedupRun> bench_speedup(const orch::ExperimentConfig& base, const SpeedupOptions& options);
std::vector<SpeedupRow> summarize_speedup(const std::vector<SpeedupRun>& runs);
void write_speedup_csv(const std::vector<SpeedupRun>& runs, const std::filesystem::path& dir);

/// Reads latency_raw.csv / latency.csv / speedup.csv from `dir`, recomputes the
/// statistics from the raw samples, writes gnuplot .dat files, and returns the
/// text tables. Throws if the directory holds none of them.
std::string emit_summary(const std::filesystem::path& dir);

}  // namespace quadrl::bench
