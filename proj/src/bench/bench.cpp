#include "quadrl/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "quadrl/orchestrator/services.hpp"

namespace quadrl::bench {

std::string_view method_name(Method m) { return m == Method::Batched ? "batched" : "nonbatched"; }

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double rank = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

LatencySample measure_latency(wire::Client& sim, Method method, std::size_t n_agents,
                              const LatencyOptions& options) {
  if (options.calls < 1) throw std::invalid_argument("calls must be >= 1");
  wire::StateQuery q;
  for (std::uint32_t i = 0; i < n_agents; ++i) q.agents.push_back(i);
  const wire::Bytes body = wire::encode(q);
  const auto kind = method == Method::Batched ? wire::MessageKind::GetBatchStates
                                              : wire::MessageKind::GetStatesNonBatched;
  auto one = [&] { return wire::decode_as<wire::StatesReply>(sim.call(kind, body, std::chrono::minutes(2))); };

  // At least one untimed call, so the first measured call has a barrier baseline.
  std::uint64_t prev = 0;
  for (std::size_t i = 0; i < std::max<std::size_t>(options.warmup, 1); ++i) prev = one().barrier_waits;

  LatencySample s;
  s.method = method;
  s.n_agents = n_agents;
  s.calls = options.calls;
  s.samples_ms.reserve(options.calls);
  s.barrier_deltas.reserve(options.calls);
  for (std::size_t i = 0; i < options.calls; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto reply = one();
    const auto t1 = std::chrono::steady_clock::now();
    s.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    s.barrier_deltas.push_back(reply.barrier_waits - prev);
    prev = reply.barrier_waits;
  }
  s.mean_ms = std::accumulate(s.samples_ms.begin(), s.samples_ms.end(), 0.0) / static_cast<double>(s.calls);
  s.p50_ms = percentile(s.samples_ms, 0.50);
  s.p95_ms = percentile(s.samples_ms, 0.95);
  s.barrier_waits = std::accumulate(s.barrier_deltas.begin(), s.barrier_deltas.end(), std::uint64_t{0});
  return s;
}

std::vector<LatencySample> bench_latency(const arena::ArenaSpec& arena, const sim::SimConfig& config,
                                         const std::vector<std::size_t>& agent_counts,
                                         const LatencyOptions& options, std::uint64_t seed) {
  std::vector<LatencySample> out;
  for (std::size_t n : agent_counts) {
    orch::SimService svc(arena, n, config, seed, "127.0.0.1:0");
    wire::Client client(svc.address());
    for (Method m : {Method::Batched, Method::NonBatched}) out.push_back(measure_latency(client, m, n, options));
  }
  return out;
}

void write_latency_csv(const std::vector<LatencySample>& rows, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream agg(dir / "latency.csv", std::ios::trunc);
  std::ofstream raw(dir / "latency_raw.csv", std::ios::trunc);
  agg << "method,n_agents,calls,mean_ms,p50_ms,p95_ms,barrier_waits\n";
  raw << "method,n_agents,call,ms,barrier_delta\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.6f,%.6f,%.6f,%llu", std::string(method_name(r.method)).c_str(),
                  r.n_agents, r.calls, r.mean_ms, r.p50_ms, r.p95_ms,
                  static_cast<unsigned long long>(r.barrier_waits));
    agg << buf << '\n';
    for (std::size_t i = 0; i < r.samples_ms.size(); ++i) {
      // %.17g keeps the samples exact, so recomputed means match to the last bit.
      std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.17g,%llu", std::string(method_name(r.method)).c_str(),
                    r.n_agents, i, r.samples_ms[i], static_cast<unsigned long long>(r.barrier_deltas[i]));
      raw << buf << '\n';
    }
  }
  if (!agg || !raw) throw std::runtime_error("cannot write latency CSVs under " + dir.string());
}

// ---- speedup --------------------------------------------------------------

std::optional<double> censored_median(const std::vector<std::optional<double>>& times) {
  if (times.empty()) return std::nullopt;
  std::vector<double> v;
  for (const auto& t : times) v.push_back(t ? *t : std::numeric_limits<double>::infinity());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double m = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  if (!std::isfinite(m)) return std::nullopt;
  return m;
}

std::vector<SpeedupRun> bench_speedup(const orch::ExperimentConfig& base, const SpeedupOptions& options) {
  std::vector<SpeedupRun> runs;
  std::vector<std::size_t> counts = options.agent_counts;
  std::sort(counts.begin(), counts.end());
  for (std::size_t n : counts) {
    for (std::uint64_t seed : options.seeds) {
      orch::ExperimentConfig cfg = base;
      cfg.sims.resize(1);
      cfg.sims[0].n_agents = n;
      cfg.seeds.base = seed;
      cfg.run.threshold = options.threshold;
      cfg.run.out = options.out / ("n" + std::to_string(n) + "_seed" + std::to_string(seed));
      orch::ExperimentHooks hooks;
      hooks.progress_every_s = options.progress_every_s;
      const auto r = orch::run_experiment(cfg, hooks);
      if (r.status == orch::RunStatus::Failed) {
        throw std::runtime_error("speedup run n=" + std::to_string(n) + " seed=" + std::to_string(seed) +
                                 " failed: " + r.error);
      }
      SpeedupRun row;
      row.n_agents = n;
      row.seed = seed;
      row.converged = r.status == orch::RunStatus::Converged;
      row.time_to_threshold_s = r.time_to_threshold_s;
      row.elapsed_s = r.elapsed_s;
      row.episodes = r.episodes;
      row.train_steps = r.trainer.steps;
      runs.push_back(row);
    }
  }
  return runs;
}

std::vector<SpeedupRow> summarize_speedup(const std::vector<SpeedupRun>& runs) {
  std::map<std::size_t, std::vector<const SpeedupRun*>> by_n;
  for (const auto& r : runs) by_n[r.n_agents].push_back(&r);
  std::vector<SpeedupRow> rows;
  for (const auto& [n, list] : by_n) {
    SpeedupRow row;
    row.n_agents = n;
    std::vector<std::optional<double>> times;
    for (const auto* r : list) {
      row.seeds.push_back(r->seed);
      row.converged.push_back(r->converged);
      times.push_back(r->converged ? r->time_to_threshold_s : std::nullopt);
    }
    row.median_s = censored_median(times);
    rows.push_back(row);
  }
  return rows;
}

void write_speedup_csv(const std::vector<SpeedupRun>& runs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "speedup.csv", std::ios::trunc);
  out << "n_agents,seed,converged,time_to_threshold_s,elapsed_s,episodes,train_steps\n";
  char buf[256];
  for (const auto& r : runs) {
    std::snprintf(buf, sizeof(buf), "%zu,%llu,%d,%s,%.3f,%zu,%llu", r.n_agents,
                  static_cast<unsigned long long>(r.seed), r.converged ? 1 : 0,
                  r.time_to_threshold_s ? std::to_string(*r.time_to_threshold_s).c_str() : "",
                  r.elapsed_s, r.episodes, static_cast<unsigned long long>(r.train_steps));
    out << buf << '\n';
  }
  if (!out) throw std::runtime_error("cannot write speedup.csv under " + dir.string());
}

// ---- summary --------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

Method parse_method(const std::string& s) {
  if (s == "batched") return Method::Batched;
  if (s == "nonbatched") return Method::NonBatched;
  throw std::runtime_error("unknown latency method '" + s + "'");
}

}  // namespace

std::string emit_summary(const std::filesystem::path& dir) {
  const bool has_raw = std::filesystem::exists(dir / "latency_raw.csv");
  const bool has_agg = std::filesystem::exists(dir / "latency.csv");
  const bool has_speed = std::filesystem::exists(dir / "speedup.csv");
  if (!has_raw && !has_agg && !has_speed) {
    throw std::runtime_error("no latency.csv, latency_raw.csv or speedup.csv in " + dir.string());
  }
  std::ostringstream out;
  char buf[256];

  if (has_raw || has_agg) {
    // key (n, method) -> sample; raw samples win over the aggregate file.
    std::map<std::pair<std::size_t, int>, LatencySample> cells;
    if (has_raw) {
      for (const auto& r : read_csv(dir / "latency_raw.csv")) {
        if (r.size() != 5) throw std::runtime_error("malformed row in latency_raw.csv");
        const Method m = parse_method(r[0]);
        auto& s = cells[{std::stoul(r[1]), static_cast<int>(m)}];
        s.method = m;
        s.n_agents = std::stoul(r[1]);
        s.samples_ms.push_back(std::stod(r[3]));
        s.barrier_deltas.push_back(std::stoull(r[4]));
      }
      for (auto& [k, s] : cells) {
        s.calls = s.samples_ms.size();
        s.mean_ms = std::accumulate(s.samples_ms.begin(), s.samples_ms.end(), 0.0) / static_cast<double>(s.calls);
        s.p50_ms = percentile(s.samples_ms, 0.50);
        s.p95_ms = percentile(s.samples_ms, 0.95);
        s.barrier_waits = std::accumulate(s.barrier_deltas.begin(), s.barrier_deltas.end(), std::uint64_t{0});
      }
    } else {
      for (const auto& r : read_csv(dir / "latency.csv")) {
        if (r.size() != 7) throw std::runtime_error("malformed row in latency.csv");
        const Method m = parse_method(r[0]);
        auto& s = cells[{std::stoul(r[1]), static_cast<int>(m)}];
        s.method = m;
        s.n_agents = std::stoul(r[1]);
        s.calls = std::stoul(r[2]);
        s.mean_ms = std::stod(r[3]);
        s.p50_ms = std::stod(r[4]);
        s.p95_ms = std::stod(r[5]);
        s.barrier_waits = std::stoull(r[6]);
      }
    }
    out << "State collection latency\n";
    std::snprintf(buf, sizeof(buf), "%-11s %6s %6s %10s %10s %10s %13s\n", "method", "agents", "calls", "mean_ms",
                  "p50_ms", "p95_ms", "barriers/call");
    out << buf;
    for (const auto& [k, s] : cells) {
      std::snprintf(buf, sizeof(buf), "%-11s %6zu %6zu %10.3f %10.3f %10.3f %13.3f\n",
                    std::string(method_name(s.method)).c_str(), s.n_agents, s.calls, s.mean_ms, s.p50_ms, s.p95_ms,
                    static_cast<double>(s.barrier_waits) / static_cast<double>(std::max<std::size_t>(s.calls, 1)));
      out << buf;
    }
    out << "\nBatched / non-batched mean latency\n";
    std::ofstream dat(dir / "latency.dat", std::ios::trunc);
    dat << "# n_agents batched_mean_ms nonbatched_mean_ms ratio\n";
    std::snprintf(buf, sizeof(buf), "%6s %12s %12s %8s\n", "agents", "batched_ms", "nonbatch_ms", "ratio");
    out << buf;
    std::map<std::size_t, std::pair<std::optional<double>, std::optional<double>>> by_n;
    for (const auto& [k, s] : cells) {
      (s.method == Method::Batched ? by_n[s.n_agents].first : by_n[s.n_agents].second) = s.mean_ms;
    }
    for (const auto& [n, p] : by_n) {
      if (!p.first || !p.second) continue;
      const double ratio = *p.first / *p.second;
      std::snprintf(buf, sizeof(buf), "%6zu %12.3f %12.3f %8.3f\n", n, *p.first, *p.second, ratio);
      out << buf;
      std::snprintf(buf, sizeof(buf), "%zu %.6f %.6f %.6f\n", n, *p.first, *p.second, ratio);
      dat << buf;
    }
  }

  if (has_speed) {
    std::vector<SpeedupRun> runs;
    for (const auto& r : read_csv(dir / "speedup.csv")) {
      if (r.size() != 7) throw std::runtime_error("malformed row in speedup.csv");
      SpeedupRun s;
      s.n_agents = std::stoul(r[0]);
      s.seed = std::stoull(r[1]);
      s.converged = r[2] == "1";
      if (!r[3].empty()) s.time_to_threshold_s = std::stod(r[3]);
      s.elapsed_s = std::stod(r[4]);
      s.episodes = std::stoul(r[5]);
      s.train_steps = std::stoull(r[6]);
      runs.push_back(s);
    }
    const auto rows = summarize_speedup(runs);
    if (has_raw || has_agg) out << '\n';
    out << "Training time to threshold\n";
    std::snprintf(buf, sizeof(buf), "%6s %6s %10s %12s\n", "agents", "seeds", "converged", "median_s");
    out << buf;
    std::ofstream dat(dir / "speedup.dat", std::ios::trunc);
    dat << "# n_agents median_time_to_threshold_s converged seeds\n";
    for (const auto& row : rows) {
      const auto conv = std::count(row.converged.begin(), row.converged.end(), true);
      const std::string med = row.median_s ? std::to_string(*row.median_s) : "none";
      std::snprintf(buf, sizeof(buf), "%6zu %6zu %7ld/%-2zu %12s\n", row.n_agents, row.seeds.size(),
                    static_cast<long>(conv), row.seeds.size(), med.c_str());
      out << buf;
      dat << row.n_agents << ' ' << (row.median_s ? med : "nan") << ' ' << conv << ' ' << row.seeds.size() << '\n';
    }
  }
  return out.str();
}

}  // namespace quadrl::bench
