#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "quadrl/bench.hpp"

using namespace quadrl;
using namespace quadrl::bench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("quadrl_bench_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

}  // namespace

TEST(Stats, PercentileInterpolatesBetweenRanks) {
  EXPECT_DOUBLE_EQ(percentile({5}, 0.95), 5.0);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 1.0), 5.0);
  // rank = 0.95 * 19 = 18.05 over 1..20
  std::vector<double> v;
  for (int i = 1; i <= 20; ++i) v.push_back(i);
  EXPECT_NEAR(percentile(v, 0.95), 19.05, 1e-12);
  EXPECT_THROW(percentile({}, 0.5), std::invalid_argument);
}

TEST(Stats, CensoredMedianRanksFailuresLast) {
  EXPECT_EQ(censored_median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(censored_median({3.0, std::nullopt, 1.0}), 3.0);
  EXPECT_EQ(censored_median({std::nullopt, std::nullopt, 1.0}), std::nullopt);
  EXPECT_EQ(censored_median({4.0, 2.0}), 3.0);
  EXPECT_EQ(censored_median({}), std::nullopt);
}

TEST(Latency, BarrierAccountingAndCsv) {
  const auto a = arena::load_arena_file(fs::path(QUADRL_SOURCE_DIR) / "arenas/easy_corridor.arena");
  sim::SimConfig cfg;
  cfg.frame_period = 0.002;
  const auto rows = bench_latency(a, cfg, {1, 3}, {20, 2});
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.calls, 20u);
    EXPECT_EQ(r.samples_ms.size(), 20u);
    const std::uint64_t per_call = r.method == Method::Batched ? 1 : r.n_agents;
    for (auto d : r.barrier_deltas) EXPECT_EQ(d, per_call);
    EXPECT_EQ(r.barrier_waits, 20 * per_call);
    EXPECT_LE(r.p50_ms, r.p95_ms);
  }
  const fs::path dir = scratch("latency");
  write_latency_csv(rows, dir);
  EXPECT_EQ(line_count(dir / "latency.csv"), 5u);
  EXPECT_EQ(line_count(dir / "latency_raw.csv"), 81u);

  // The summary recomputes from raw samples, ignoring a doctored aggregate.
  std::ofstream(dir / "latency.csv", std::ios::trunc)
      << "method,n_agents,calls,mean_ms,p50_ms,p95_ms,barrier_waits\nbatched,1,20,87654.5,87654.5,87654.5,20\n";
  const std::string text = emit_summary(dir);
  EXPECT_EQ(text.find("87654"), std::string::npos);
  EXPECT_NE(text.find("nonbatched"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "latency.dat"));
  EXPECT_EQ(line_count(dir / "latency.dat"), 3u);
}

TEST(Summary, EmptyDirectoryIsAnError) {
  EXPECT_THROW(emit_summary(scratch("empty")), std::runtime_error);
}

TEST(Speedup, OneRowPerAgentCountAndSeed) {
  orch::ExperimentConfig base = orch::load_config(fs::path(QUADRL_SOURCE_DIR) / "configs/easy_corridor.json");
  base.run.budget_s = 0.5;
  SpeedupOptions opts;
  opts.agent_counts = {2, 1};
  opts.seeds = {1, 2};
  opts.out = scratch("speedup");
  const auto runs = bench_speedup(base, opts);
  ASSERT_EQ(runs.size(), 4u);
  EXPECT_EQ(runs.front().n_agents, 1u);
  write_speedup_csv(runs, opts.out);
  EXPECT_EQ(line_count(opts.out / "speedup.csv"), 5u);
  const auto rows = summarize_speedup(runs);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.seeds.size(), 2u);
    EXPECT_FALSE(r.median_s.has_value());  // nothing converges in half a second
  }
  const std::string text = emit_summary(opts.out);
  EXPECT_NE(text.find("Training time to threshold"), std::string::npos);
  EXPECT_EQ(line_count(opts.out / "speedup.dat"), 3u);
}
