// quadrl: run a full experiment in one process, or host a single role.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "quadrl/nn.hpp"
#include "quadrl/orchestrator/experiment.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void wait_for_signal() {
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

int cmd_run(const std::string& config_path, const std::string& out, double budget, bool quiet) {
  auto cfg = quadrl::orch::load_config(config_path);
  if (!out.empty()) cfg.run.out = out;
  if (budget > 0.0) cfg.run.budget_s = budget;
  quadrl::orch::ExperimentHooks hooks;
  hooks.progress_every_s = quiet ? 0.0 : 10.0;
  hooks.stop_early = [](double) { return g_stop.load(); };
  const auto r = quadrl::orch::run_experiment(cfg, hooks);
  std::printf("status %s  episodes %zu  train_steps %llu  elapsed %.1fs", std::string(status_name(r.status)).c_str(),
              r.episodes, static_cast<unsigned long long>(r.trainer.steps), r.elapsed_s);
  if (r.time_to_threshold_s) std::printf("  time_to_threshold %.1fs", *r.time_to_threshold_s);
  std::printf("\nmetrics in %s\n", r.out_dir.string().c_str());
  if (!r.error.empty()) std::fprintf(stderr, "error: %s\n", r.error.c_str());
  return r.status == quadrl::orch::RunStatus::Failed ? 1 : 0;
}

int cmd_serve(const std::string& config_path, const std::string& role, std::size_t index) {
  using namespace quadrl::orch;
  const auto cfg = load_config(config_path);
  if (role == "sim") {
    if (index >= cfg.sims.size()) throw std::invalid_argument("no sim instance " + std::to_string(index));
    const auto& s = cfg.sims[index];
    SimService svc(s.arena, s.n_agents, cfg.sim, cfg.seeds.world(index), s.address);
    std::printf("sim %zu serving %zu agents on %s\n", index, s.n_agents, svc.address().c_str());
    std::fflush(stdout);
    wait_for_signal();
  } else if (role == "replay") {
    ReplayService svc(cfg.hp.replay_capacity, cfg.seeds.replay(), cfg.replay_address);
    std::printf("replay serving on %s\n", svc.address().c_str());
    std::fflush(stdout);
    wait_for_signal();
  } else if (role == "trainer") {
    TrainerOptions t;
    t.hp = cfg.hp;
    t.max_range = static_cast<float>(cfg.sim.max_range);
    t.seed = cfg.seeds.network();
    t.replay_address = cfg.replay_address;
    t.address = cfg.trainer_address;
    t.metrics_dir = cfg.run.out;
    Trainer trainer(t);
    trainer.start_loop();
    std::printf("trainer serving on %s\n", trainer.address().c_str());
    std::fflush(stdout);
    while (!g_stop && !trainer.failure()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    trainer.stop();
    if (auto f = trainer.failure()) throw std::runtime_error("trainer: " + *f);
  } else {
    throw std::invalid_argument("unknown role '" + role + "' (sim, replay, trainer)");
  }
  return 0;
}

int cmd_actor(const std::string& config_path, std::size_t index) {
  using namespace quadrl::orch;
  const auto cfg = load_config(config_path);
  if (index >= cfg.sims.size()) throw std::invalid_argument("no sim instance " + std::to_string(index));
  ActorOptions a;
  a.sim_address = cfg.sims[index].address;
  a.replay_address = cfg.replay_address;
  a.trainer_address = cfg.trainer_address;
  a.arena = cfg.sims[index].arena;
  a.n_agents = cfg.sims[index].n_agents;
  for (std::size_t i = 0; i < index; ++i) a.agent_offset += static_cast<std::uint32_t>(cfg.sims[i].n_agents);
  a.seed = cfg.seeds.actor(index);
  a.episode_step_cap = cfg.run.episode_step_cap;
  a.delay_ms = cfg.run.actor_delay_ms;
  a.max_range = static_cast<float>(cfg.sim.max_range);
  Actor actor(a);
  const bool ok = actor.run(g_stop, cfg.run.max_ticks);
  const auto& st = actor.stats();
  std::printf("actor %zu: %llu ticks, %llu episodes, %llu experiences pushed\n", index,
              static_cast<unsigned long long>(st.ticks), static_cast<unsigned long long>(st.episodes),
              static_cast<unsigned long long>(st.pushed));
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  quadrl::nn::tune_allocator();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"Distributed DQN training for simulated quadrotors"};
  app.require_subcommand(1);

  std::string config, out, role;
  double budget = 0.0;
  bool quiet = false;
  std::size_t index = 0;

  auto* run = app.add_subcommand("run", "Run every role in this process until the threshold or budget");
  run->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Metrics directory (overrides run.out)");
  run->add_option("--budget", budget, "Wall-clock budget in seconds (overrides run.budget_s)");
  run->add_flag("--quiet", quiet, "No progress lines");

  auto* serve = app.add_subcommand("serve", "Host one service role until interrupted");
  serve->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  serve->add_option("--role", role, "sim, replay or trainer")->required();
  serve->add_option("--index", index, "Sim instance index");

  auto* actor = app.add_subcommand("actor", "Drive one sim instance's agents");
  actor->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  actor->add_option("--index", index, "Sim instance index");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, out, budget, quiet);
    if (*serve) return cmd_serve(config, role, index);
    if (*actor) return cmd_actor(config, index);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "quadrl: %s\n", e.what());
    return 1;
  }
  return 0;
}
