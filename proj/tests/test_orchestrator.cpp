#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "quadrl/orchestrator/experiment.hpp"
#include "test_util.hpp"

using namespace quadrl;
using namespace quadrl::orch;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = QUADRL_SOURCE_DIR;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("quadrl_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<Experience> valid_batch(std::size_t n, std::mt19937_64& rng) {
  return testutil::random_batch(n, rng);
}

arena::ArenaSpec wall_arena() {
  // A wall at x = 6 ends every straight episode after a handful of steps.
  return arena::load_arena(
      "arena v1\nbounds 0 0 0 30 8 4\nspawn 1 2 2 6 2 0\ngoal 20\nbox 6 0 0 7 8 4\n");
}

}  // namespace

TEST(Config, ParsesAndResolvesArenaRelativeToConfig) {
  const ExperimentConfig cfg = load_config(kSource / "configs/easy_corridor.json");
  ASSERT_EQ(cfg.sims.size(), 1u);
  EXPECT_EQ(cfg.sims[0].n_agents, 8u);
  EXPECT_EQ(cfg.total_agents(), 8u);
  EXPECT_DOUBLE_EQ(cfg.sims[0].arena.goal_x, 75.0);
  EXPECT_EQ(cfg.hp.batch_size, 32u);
  EXPECT_EQ(cfg.run.window, 20u);
  EXPECT_FALSE(cfg.source_text.empty());
}

TEST(Config, RejectsBadInput) {
  const std::string arena = (kSource / "arenas/easy_corridor.arena").string();
  const std::string sims = R"("sims": [{"arena": ")" + arena + R"(", "n_agents": 2}])";
  EXPECT_NO_THROW(parse_config("{" + sims + "}"));
  EXPECT_THROW(parse_config("{"), ConfigError);
  EXPECT_THROW(parse_config("{}"), ConfigError);
  EXPECT_THROW(parse_config("{" + sims + R"(, "hyperparams": {"gama": 0.9}})"), ConfigError);
  EXPECT_THROW(parse_config("{" + sims + R"(, "hyperparams": {"gamma": "high"}})"), ConfigError);
  EXPECT_THROW(parse_config("{" + sims + R"(, "hyperparams": {"gamma": 0}})"), ConfigError);
  EXPECT_THROW(parse_config("{" + sims + R"(, "run": {"deterministic": true}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"sims": [{"arena": "missing.arena"}]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"sims": [{"arena": ")" + arena + R"(", "n_agents": 0}]})"), ConfigError);
  EXPECT_THROW(parse_config("{" + sims + R"(, "sim": {"physics_hz": 3, "action_period": 0.5}})"),
               ConfigError);
}

TEST(Config, SeedStreamsAreDistinct) {
  Seeds s{7};
  std::set<std::uint64_t> all{s.network(), s.replay(), s.world(0), s.world(1), s.actor(0), s.actor(1)};
  EXPECT_EQ(all.size(), 6u);
  EXPECT_EQ(s.world(1), Seeds{7}.world(1));
  EXPECT_NE(s.world(1), Seeds{8}.world(1));
}

TEST(Config, GitBlobHash) {
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(Csv, EpisodeRowFormat) {
  wire::EpisodeRecord r{3, 12, 57.0f, 19, 0.25f, 1500000, 20500000};
  EXPECT_EQ(std::string(kEpisodesHeader), "agent_id,episode,reward,steps,epsilon,t_start,t_end");
  const std::string row = episode_csv_row(r);
  EXPECT_EQ(row.substr(0, 6), "3,12,5");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 6);
}

TEST(Trainer, GatesOnFullReplayAndSyncsTargetEvery150Steps) {
  ReplayService replay(40, 1, "127.0.0.1:0");
  TrainerOptions opts;
  opts.hp.replay_capacity = 40;
  opts.replay_address = replay.address();
  Trainer trainer(opts);
  EXPECT_EQ(trainer.stats().version, 1u);
  EXPECT_FALSE(trainer.step_once());
  std::mt19937_64 rng(2);
  auto items = valid_batch(39, rng);
  replay.buffer().push(items);
  EXPECT_FALSE(trainer.step_once());
  items = valid_batch(1, rng);
  replay.buffer().push(items);
  for (int i = 0; i < 149; ++i) ASSERT_TRUE(trainer.step_once());
  EXPECT_EQ(trainer.stats().target_syncs, 0u);
  ASSERT_TRUE(trainer.step_once());
  EXPECT_EQ(trainer.stats().target_syncs, 1u);
  EXPECT_EQ(trainer.stats().steps, 150u);
  EXPECT_EQ(trainer.stats().version, 151u);
  for (int i = 0; i < 150; ++i) trainer.step_once();
  EXPECT_EQ(trainer.stats().target_syncs, 2u);
}

TEST(Trainer, GetParamsServesOnlyNewerVersions) {
  ReplayService replay(10, 1, "127.0.0.1:0");
  TrainerOptions opts;
  opts.hp.replay_capacity = 10;
  opts.replay_address = replay.address();
  Trainer trainer(opts);
  wire::Client c(trainer.address());
  const auto fresh = wire::get_params_client(c, 0);
  EXPECT_FALSE(fresh.up_to_date);
  EXPECT_EQ(fresh.version, 1u);
  EXPECT_EQ(nn::decode_params(fresh.blob), trainer.params_copy());
  const auto same = wire::get_params_client(c, 1);
  EXPECT_TRUE(same.up_to_date);
  EXPECT_TRUE(same.blob.empty());
  EXPECT_EQ(same.version, 1u);
}

TEST(Trainer, EpisodesAreRecordedAndAveraged) {
  const fs::path dir = scratch("episodes");
  ReplayService replay(10, 1, "127.0.0.1:0");
  TrainerOptions opts;
  opts.hp.replay_capacity = 10;
  opts.replay_address = replay.address();
  opts.metrics_dir = dir;
  {
    Trainer trainer(opts);
    wire::Client c(trainer.address());
    for (std::uint32_t i = 0; i < 4; ++i) {
      c.call<wire::MessageKind::ReportEpisode>(wire::EpisodeRecord{i, 0, 10.0f * i, 5, 1.0f, 0, 1});
    }
    EXPECT_EQ(trainer.episode_count(), 4u);
    EXPECT_FALSE(trainer.moving_average(5).has_value());
    EXPECT_DOUBLE_EQ(*trainer.moving_average(2), 25.0);
  }
  const std::string csv = read_file(dir / "episodes.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kEpisodesHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

struct Rig {
  SimService sim;
  ReplayService replay;
  Trainer trainer;

  Rig(arena::ArenaSpec a, std::size_t n_agents, std::size_t capacity)
      : sim(a, n_agents, fast_sim(), 3, "127.0.0.1:0"),
        replay(capacity, 4, "127.0.0.1:0"),
        trainer(trainer_options(capacity, replay.address())) {}

  static sim::SimConfig fast_sim() {
    sim::SimConfig c;
    c.frame_period = 0.001;
    return c;
  }
  static TrainerOptions trainer_options(std::size_t capacity, std::string replay_address) {
    TrainerOptions o;
    o.hp.replay_capacity = capacity;
    o.replay_address = std::move(replay_address);
    return o;
  }
  ActorOptions actor_options(const arena::ArenaSpec& a, std::size_t n) const {
    ActorOptions o;
    o.sim_address = sim.address();
    o.replay_address = replay.address();
    o.trainer_address = trainer.address();
    o.arena = a;
    o.n_agents = n;
    o.seed = 5;
    return o;
  }
};

// Property: per agent, consecutive transitions chain (s' of one is s of the
// next) unless the first was terminal, and a new episode starts from a fresh
// stacked state. Episode ends in one agent never interrupt the others.
TEST(Actor, AsyncResetKeepsPerAgentChains) {
  const auto a = wall_arena();
  Rig rig(a, 3, 10000);
  Actor actor(rig.actor_options(a, 3));
  std::map<std::uint32_t, std::vector<Experience>> per_agent;
  actor.set_push_observer([&](const std::vector<Experience>& items, const std::vector<std::uint32_t>& ids) {
    ASSERT_EQ(items.size(), ids.size());
    for (std::size_t i = 0; i < items.size(); ++i) per_agent[ids[i]].push_back(items[i]);
  });
  for (int t = 0; t < 40; ++t) actor.tick();
  EXPECT_EQ(actor.stats().ticks, 40u);
  EXPECT_EQ(actor.stats().pushed, 120u);
  EXPECT_GT(actor.stats().episodes, 3u);
  std::set<std::size_t> episode_lengths;
  for (auto& [id, chain] : per_agent) {
    ASSERT_EQ(chain.size(), 40u);
    std::size_t len = 0;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      ++len;
      if (chain[i].done) {
        EXPECT_EQ(chain[i].r, -100.0f);
        EXPECT_EQ(chain[i].s_next, chain[i].s);
        episode_lengths.insert(len);
        len = 0;
        if (i + 1 < chain.size()) EXPECT_EQ(chain[i + 1].s.image_prev, chain[i + 1].s.image_now);
      } else {
        EXPECT_EQ(chain[i].r, 3.0f);
        if (i + 1 < chain.size()) EXPECT_EQ(chain[i + 1].s, chain[i].s_next);
      }
    }
  }
  // Spawns differ in x, so agents finish at different ticks.
  EXPECT_GT(episode_lengths.size(), 1u);
  EXPECT_EQ(rig.trainer.episode_count(), actor.stats().episodes);
  EXPECT_EQ(rig.replay.buffer().stats().total_actions, 120u);
}

TEST(Actor, EpsilonFollowsScheduleOfTotalActions) {
  const auto a = arena::load_arena_file(kSource / "arenas/easy_corridor.arena");
  Rig rig(a, 4, 100);
  Actor actor(rig.actor_options(a, 4));
  for (std::uint64_t k = 1; k <= 30; ++k) {
    actor.tick();
    const std::uint64_t before = (k - 1) * 4;
    EXPECT_DOUBLE_EQ(actor.stats().last_epsilon, dqn::epsilon_schedule(before, 100));
  }
  EXPECT_EQ(actor.stats().last_epsilon, 0.0);
}

TEST(Actor, StepCapTruncatesWithoutTerminalFlag) {
  // Wide enough that no lateral drift can reach a wall within the cap.
  const auto a = arena::load_arena("arena v1\nbounds 0 0 0 80 40 4\nspawn 1 19 2 21 2 0\ngoal 75\n");
  Rig rig(a, 1, 1000);
  auto opts = rig.actor_options(a, 1);
  opts.episode_step_cap = 5;
  Actor actor(opts);
  std::vector<Experience> chain;
  actor.set_push_observer([&](const std::vector<Experience>& items, const std::vector<std::uint32_t>&) {
    chain.insert(chain.end(), items.begin(), items.end());
  });
  for (int t = 0; t < 12; ++t) actor.tick();
  ASSERT_EQ(chain.size(), 12u);
  EXPECT_EQ(actor.stats().episodes, 2u);
  for (const auto& e : chain) EXPECT_FALSE(e.done);
  // Truncated transitions keep the rendered next state; the next episode starts fresh.
  EXPECT_NE(chain[4].s_next, chain[4].s);
  EXPECT_EQ(chain[5].s.image_prev, chain[5].s.image_now);
  const auto eps = rig.trainer.episodes();
  ASSERT_EQ(eps.size(), 2u);
  EXPECT_EQ(eps[0].steps, 5u);
  EXPECT_FLOAT_EQ(eps[0].reward, 15.0f);
}

TEST(Actor, GivesUpWhenServicesDisappear) {
  const auto a = arena::load_arena_file(kSource / "arenas/easy_corridor.arena");
  auto rig = std::make_unique<Rig>(a, 1, 1000);
  auto opts = rig->actor_options(a, 1);
  opts.max_retries = 1;
  Actor actor(opts);
  actor.tick();
  rig->sim.stop();
  std::atomic<bool> stop{false};
  EXPECT_FALSE(actor.run(stop, 100));
}

namespace {

ExperimentConfig deterministic_config(const fs::path& out) {
  ExperimentConfig cfg = load_config(kSource / "configs/deterministic.json");
  cfg.run.out = out;
  cfg.run.max_ticks = 160;
  return cfg;
}

}  // namespace

TEST(Experiment, DeterministicModeIsReproducible) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const auto ra = run_experiment(deterministic_config(a));
  const auto rb = run_experiment(deterministic_config(b));
  ASSERT_NE(ra.status, RunStatus::Failed) << ra.error;
  ASSERT_NE(rb.status, RunStatus::Failed) << rb.error;
  EXPECT_GT(ra.trainer.steps, 0u);
  const std::string ea = read_file(a / "episodes.csv");
  EXPECT_GT(std::count(ea.begin(), ea.end(), '\n'), 3);
  EXPECT_EQ(ea, read_file(b / "episodes.csv"));
  const std::string manifest = read_file(a / "manifest.txt");
  EXPECT_NE(manifest.find("status: "), std::string::npos);
  EXPECT_NE(manifest.find(git_blob_hash_file(kSource / "arenas/easy_corridor.arena")), std::string::npos);
}

TEST(Experiment, BudgetExhaustionIsNotConverged) {
  ExperimentConfig cfg = load_config(kSource / "configs/easy_corridor.json");
  cfg.run.out = scratch("budget");
  cfg.run.budget_s = 1.0;
  cfg.sims[0].n_agents = 2;
  const auto r = run_experiment(cfg);
  EXPECT_EQ(r.status, RunStatus::NotConverged) << r.error;
  EXPECT_FALSE(r.time_to_threshold_s.has_value());
  EXPECT_NE(read_file(cfg.run.out / "manifest.txt").find("not-converged"), std::string::npos);
}
