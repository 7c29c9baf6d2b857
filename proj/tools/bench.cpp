// bench: state-collection latency and agent-count speedup harness.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "quadrl/bench.hpp"
#include "quadrl/nn.hpp"

int main(int argc, char** argv) {
  quadrl::nn::tune_allocator();
  CLI::App app{"Benchmarks: batched vs non-batched state collection, training time vs agent count"};
  app.require_subcommand(1);

  std::string config, out, in;
  std::vector<std::size_t> agents;
  std::size_t calls = 1000, warmup = 50, n_seeds = 3;
  double threshold = 150.0;
  bool quiet = false;

  auto* lat = app.add_subcommand("latency", "Time batched and non-batched state collection");
  lat->add_option("--config", config, "Experiment config; the first sim's arena and the sim section are used")
      ->required()
      ->check(CLI::ExistingFile);
  lat->add_option("--agents", agents, "Agent counts")->delimiter(',')->required();
  lat->add_option("--calls", calls, "Measured calls per cell");
  lat->add_option("--warmup", warmup, "Discarded warm-up calls per cell");
  lat->add_option("--out", out, "Output directory")->required();

  auto* speed = app.add_subcommand("speedup", "Time-to-threshold per agent count and seed");
  speed->add_option("--config", config, "Experiment config")->required()->check(CLI::ExistingFile);
  speed->add_option("--agents", agents, "Agent counts")->delimiter(',')->required();
  speed->add_option("--seeds", n_seeds, "Seeds per agent count (base, base+1, ...)");
  speed->add_option("--threshold", threshold, "Moving-average reward threshold");
  speed->add_option("--out", out, "Output directory")->required();
  speed->add_flag("--quiet", quiet, "No progress lines");

  auto* sum = app.add_subcommand("summary", "Print tables and write gnuplot data from a results directory");
  sum->add_option("--in", in, "Directory with latency/speedup CSVs")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*lat) {
      const auto cfg = quadrl::orch::load_config(config);
      const auto rows = quadrl::bench::bench_latency(cfg.sims.front().arena, cfg.sim, agents, {calls, warmup},
                                                     cfg.seeds.world(0));
      quadrl::bench::write_latency_csv(rows, out);
      std::cout << quadrl::bench::emit_summary(out);
    } else if (*speed) {
      const auto cfg = quadrl::orch::load_config(config);
      quadrl::bench::SpeedupOptions opts;
      opts.agent_counts = agents;
      opts.seeds.clear();
      for (std::size_t k = 0; k < n_seeds; ++k) opts.seeds.push_back(cfg.seeds.base + k);
      opts.threshold = threshold;
      opts.out = out;
      opts.progress_every_s = quiet ? 0.0 : 30.0;
      const auto runs = quadrl::bench::bench_speedup(cfg, opts);
      quadrl::bench::write_speedup_csv(runs, out);
      std::cout << quadrl::bench::emit_summary(out);
    } else if (*sum) {
      std::cout << quadrl::bench::emit_summary(in);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bench: %s\n", e.what());
    return 1;
  }
  return 0;
}
