#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "quadrl/orchestrator/actor.hpp"
#include "quadrl/orchestrator/config.hpp"
#include "quadrl/orchestrator/services.hpp"

namespace quadrl::orch {

enum class RunStatus { Converged, NotConverged, Failed };

std::string_view status_name(RunStatus s);

struct ExperimentResult {
  RunStatus status = RunStatus::Failed;
  std::optional<double> time_to_threshold_s;  // wall clock, or simulated in deterministic mode
  double elapsed_s = 0.0;
  std::size_t episodes = 0;
  std::optional<double> final_moving_average;
  TrainerStats trainer;
  std::vector<double> trainer_step_times;
  std::vector<ActorStats> actors;
  std::string error;
  std::filesystem::path out_dir;
};

struct ExperimentHooks {
  /// Called for every pushed batch (actor index, items, global agent ids).
  std::function<void(std::size_t, const std::vector<Experience>&, const std::vector<std::uint32_t>&)> on_push;
  /// Stops the run early when it returns true; polled with the elapsed seconds.
  std::function<bool(double)> stop_early;
  /// Print one progress line every this many seconds (0 = quiet).
  double progress_every_s = 0.0;
};

/// Runs every role in this process over loopback and writes episodes.csv,
/// trainer.csv and manifest.txt to cfg.run.out.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentHooks& hooks = {});

}  // namespace quadrl::orch
