#include "quadrl/orchestrator/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

namespace quadrl::orch {

std::string_view status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "converged";
    case RunStatus::NotConverged: return "not-converged";
    case RunStatus::Failed: return "failed";
  }
  return "?";
}

namespace {

using Clock = std::chrono::steady_clock;

void write_manifest(const ExperimentConfig& cfg, const ExperimentResult& r) {
  std::ofstream out(cfg.run.out / "manifest.txt", std::ios::trunc);
  out << "status: " << status_name(r.status) << '\n';
  if (r.time_to_threshold_s) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", *r.time_to_threshold_s);
    out << "time_to_threshold_s: " << buf << '\n';
  } else {
    out << "time_to_threshold_s: none\n";
  }
  out << "threshold: " << cfg.run.threshold << "\nwindow: " << cfg.run.window << '\n';
  out << "elapsed_s: " << r.elapsed_s << '\n';
  out << "episodes: " << r.episodes << '\n';
  if (r.final_moving_average) out << "final_moving_average: " << *r.final_moving_average << '\n';
  out << "train_steps: " << r.trainer.steps << "\ntarget_syncs: " << r.trainer.target_syncs
      << "\nskipped_nonfinite: " << r.trainer.skipped_nonfinite << "\nparams_version: " << r.trainer.version
      << '\n';
  out << "deterministic: " << (cfg.run.deterministic ? "true" : "false") << '\n';
  if (!r.error.empty()) out << "error: " << r.error << '\n';
  out << "seed_base: " << cfg.seeds.base << "\nseed_network: " << cfg.seeds.network()
      << "\nseed_replay: " << cfg.seeds.replay() << '\n';
  for (std::size_t i = 0; i < cfg.sims.size(); ++i) {
    const auto& s = cfg.sims[i];
    out << "sim." << i << ".arena: " << s.arena_path.string() << '\n';
    out << "sim." << i << ".arena_hash: " << git_blob_hash_file(s.arena_path) << '\n';
    out << "sim." << i << ".n_agents: " << s.n_agents << '\n';
    out << "sim." << i << ".seed_world: " << cfg.seeds.world(i) << '\n';
    out << "sim." << i << ".seed_actor: " << cfg.seeds.actor(i) << '\n';
  }
  out << "--- config ---\n" << cfg.source_text;
  if (!cfg.source_text.empty() && cfg.source_text.back() != '\n') out << '\n';
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentHooks& hooks) {
  cfg.validate();
  ExperimentResult result;
  result.out_dir = cfg.run.out;
  std::filesystem::create_directories(cfg.run.out);
  const auto t0 = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - t0).count(); };

  std::unique_ptr<ReplayService> replay;
  std::vector<std::unique_ptr<SimService>> sims;
  std::unique_ptr<Trainer> trainer;
  std::vector<std::unique_ptr<Actor>> actors;
  std::vector<std::thread> actor_threads;
  std::atomic<bool> stop{false};
  std::mutex fail_mu;
  std::string failure;

  auto shutdown = [&] {
    stop = true;
    for (auto& t : actor_threads) {
      if (t.joinable()) t.join();
    }
    if (trainer) trainer->stop();
  };

  try {
    replay = std::make_unique<ReplayService>(cfg.hp.replay_capacity, cfg.seeds.replay(), cfg.replay_address);
    for (std::size_t i = 0; i < cfg.sims.size(); ++i) {
      const auto& s = cfg.sims[i];
      sims.push_back(std::make_unique<SimService>(s.arena, s.n_agents, cfg.sim, cfg.seeds.world(i), s.address));
    }
    TrainerOptions topts;
    topts.hp = cfg.hp;
    topts.max_range = static_cast<float>(cfg.sim.max_range);
    topts.seed = cfg.seeds.network();
    topts.replay_address = replay->address();
    topts.address = cfg.trainer_address;
    topts.metrics_dir = cfg.run.out;
    trainer = std::make_unique<Trainer>(topts);

    std::uint32_t offset = 0;
    for (std::size_t i = 0; i < cfg.sims.size(); ++i) {
      ActorOptions a;
      a.sim_address = sims[i]->address();
      a.replay_address = replay->address();
      a.trainer_address = trainer->address();
      a.arena = cfg.sims[i].arena;
      a.n_agents = cfg.sims[i].n_agents;
      a.agent_offset = offset;
      a.seed = cfg.seeds.actor(i);
      a.episode_step_cap = cfg.run.episode_step_cap;
      a.delay_ms = cfg.run.actor_delay_ms;
      a.max_range = static_cast<float>(cfg.sim.max_range);
      a.simulated_time = cfg.run.deterministic;
      a.action_period = cfg.sim.action_period;
      a.epoch = t0;
      offset += static_cast<std::uint32_t>(a.n_agents);
      actors.push_back(std::make_unique<Actor>(a));
      if (hooks.on_push) {
        actors.back()->set_push_observer(
            [&hooks, i](const std::vector<Experience>& items, const std::vector<std::uint32_t>& ids) {
              hooks.on_push(i, items, ids);
            });
      }
    }

    auto reached = [&]() -> bool {
      const auto ma = trainer->moving_average(cfg.run.window);
      return ma && *ma >= cfg.run.threshold;
    };

    if (cfg.run.deterministic) {
      Actor& actor = *actors.front();
      while (actor.stats().ticks < cfg.run.max_ticks && elapsed() < cfg.run.budget_s) {
        actor.tick();
        for (std::size_t k = 0; k < cfg.run.train_steps_per_tick; ++k) trainer->step_once();
        if (reached()) {
          result.time_to_threshold_s = static_cast<double>(actor.stats().ticks) * cfg.sim.action_period;
          break;
        }
        if (hooks.stop_early && hooks.stop_early(elapsed())) break;
      }
    } else {
      trainer->start_loop();
      std::atomic<std::size_t> finished{0};
      for (std::size_t i = 0; i < actors.size(); ++i) {
        actor_threads.emplace_back([&, i] {
          try {
            if (!actors[i]->run(stop, cfg.run.max_ticks)) {
              std::lock_guard lock(fail_mu);
              if (failure.empty()) failure = "actor " + std::to_string(i) + " lost its connections";
            }
          } catch (const std::exception& e) {
            std::lock_guard lock(fail_mu);
            if (failure.empty()) failure = "actor " + std::to_string(i) + ": " + e.what();
          }
          finished += 1;
        });
      }
      double next_progress = hooks.progress_every_s;
      for (;;) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        {
          std::lock_guard lock(fail_mu);
          if (!failure.empty()) break;
        }
        if (auto f = trainer->failure()) {
          std::lock_guard lock(fail_mu);
          failure = "trainer: " + *f;
          break;
        }
        if (reached()) {
          result.time_to_threshold_s = elapsed();
          break;
        }
        const double t = elapsed();
        if (t >= cfg.run.budget_s || finished == actors.size()) break;
        if (hooks.stop_early && hooks.stop_early(t)) break;
        if (hooks.progress_every_s > 0.0 && t >= next_progress) {
          next_progress += hooks.progress_every_s;
          const auto ts = trainer->stats();
          const auto ma = trainer->moving_average(cfg.run.window);
          std::fprintf(stderr, "[%7.1fs] episodes %zu  ma %s  train steps %llu  eps %.3f\n", t,
                       trainer->episode_count(), ma ? std::to_string(*ma).c_str() : "-",
                       static_cast<unsigned long long>(ts.steps), actors.front()->stats().last_epsilon);
        }
      }
    }
  } catch (const std::exception& e) {
    std::lock_guard lock(fail_mu);
    if (failure.empty()) failure = e.what();
  }
  shutdown();

  result.elapsed_s = elapsed();
  if (trainer) {
    result.trainer = trainer->stats();
    result.trainer_step_times = trainer->step_times();
    result.episodes = trainer->episode_count();
    result.final_moving_average = trainer->moving_average(cfg.run.window);
  }
  for (const auto& a : actors) result.actors.push_back(a->stats());
  result.error = failure;
  if (!failure.empty()) {
    result.status = RunStatus::Failed;
  } else {
    result.status = result.time_to_threshold_s ? RunStatus::Converged : RunStatus::NotConverged;
  }
  actors.clear();
  trainer.reset();
  sims.clear();
  replay.reset();
  write_manifest(cfg, result);
  return result;
}

}  // namespace quadrl::orch
