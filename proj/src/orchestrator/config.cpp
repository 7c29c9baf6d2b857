#include "quadrl/orchestrator/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <numbers>
#include <set>
#include <span>
#include <sstream>

#include "json.hpp"
#include "quadrl/wire/rpc.hpp"

namespace quadrl::orch {

using nlohmann::json;

namespace {

std::uint64_t derive(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[0]} << 32) | out[1];
}

template <typename T>
void read_opt(const json& obj, const char* key, T& dst) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& obj, const char* section, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(std::string("config section '") + section + "' must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw ConfigError(std::string("unknown key '") + k + "' in '" + section + "'");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::uint64_t Seeds::network() const { return derive(base, 1, 0); }
std::uint64_t Seeds::replay() const { return derive(base, 2, 0); }
std::uint64_t Seeds::world(std::size_t i) const { return derive(base, 3, i); }
std::uint64_t Seeds::actor(std::size_t i) const { return derive(base, 4, i); }

std::size_t ExperimentConfig::total_agents() const {
  std::size_t n = 0;
  for (const auto& s : sims) n += s.n_agents;
  return n;
}

void ExperimentConfig::validate() const {
  if (sims.empty() || total_agents() < 1) throw ConfigError("topology needs at least one agent");
  std::set<std::string> seen;
  auto check_addr = [&](const std::string& a) {
    const auto parsed = wire::Address::parse(a);
    if (parsed.port == 0) return;  // ephemeral ports never clash
    if (!seen.insert(parsed.str()).second) throw ConfigError("address used twice: " + a);
  };
  for (const auto& s : sims) {
    if (s.n_agents < 1) throw ConfigError("sim instance with no agents");
    check_addr(s.address);
  }
  check_addr(replay_address);
  check_addr(trainer_address);
  try {
    hp.validate();
    sim.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (run.window < 1) throw ConfigError("run.window must be >= 1");
  if (!(run.budget_s > 0.0)) throw ConfigError("run.budget_s must be > 0");
  if (run.episode_step_cap < 1) throw ConfigError("run.episode_step_cap must be >= 1");
  if (run.actor_delay_ms < 0.0) throw ConfigError("run.actor_delay_ms must be >= 0");
  if (run.deterministic && (sims.size() != 1 || run.max_ticks == 0)) {
    throw ConfigError("deterministic mode needs exactly one sim instance and run.max_ticks > 0");
  }
}

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(root, "top level", {"sims", "replay", "trainer", "hyperparams", "sim", "seeds", "run"});
  ExperimentConfig cfg;
  cfg.source_text = json_text;

  if (root.contains("sim")) {
    const json& s = root["sim"];
    reject_unknown(s, "sim", {"physics_hz", "action_period", "forward_velocity", "action_magnitude",
                              "camera_fov_deg", "max_range", "frame_period", "agent_radius",
                              "lateral_clamp"});
    read_opt(s, "physics_hz", cfg.sim.physics_hz);
    read_opt(s, "action_period", cfg.sim.action_period);
    read_opt(s, "forward_velocity", cfg.sim.forward_velocity);
    read_opt(s, "action_magnitude", cfg.sim.action_magnitude);
    double fov_deg = cfg.sim.camera_fov * 180.0 / std::numbers::pi;
    read_opt(s, "camera_fov_deg", fov_deg);
    cfg.sim.camera_fov = fov_deg * std::numbers::pi / 180.0;
    read_opt(s, "max_range", cfg.sim.max_range);
    read_opt(s, "frame_period", cfg.sim.frame_period);
    read_opt(s, "agent_radius", cfg.sim.agent_radius);
    read_opt(s, "lateral_clamp", cfg.sim.lateral_clamp);
  }

  if (!root.contains("sims") || !root["sims"].is_array()) throw ConfigError("config needs a 'sims' array");
  for (const json& s : root["sims"]) {
    reject_unknown(s, "sims[]", {"address", "arena", "n_agents"});
    SimInstance inst;
    read_opt(s, "address", inst.address);
    std::string arena;
    read_opt(s, "arena", arena);
    if (arena.empty()) throw ConfigError("every sim instance needs an 'arena' file");
    inst.arena_path = std::filesystem::path(arena).is_absolute() ? std::filesystem::path(arena)
                                                                 : base_dir / arena;
    read_opt(s, "n_agents", inst.n_agents);
    try {
      inst.arena = arena::load_arena_file(inst.arena_path, cfg.sim.agent_radius);
    } catch (const std::exception& e) {
      throw ConfigError("arena " + inst.arena_path.string() + ": " + e.what());
    }
    cfg.sims.push_back(std::move(inst));
  }
  if (root.contains("replay")) {
    reject_unknown(root["replay"], "replay", {"address"});
    read_opt(root["replay"], "address", cfg.replay_address);
  }
  if (root.contains("trainer")) {
    reject_unknown(root["trainer"], "trainer", {"address"});
    read_opt(root["trainer"], "address", cfg.trainer_address);
  }
  if (root.contains("hyperparams")) {
    const json& h = root["hyperparams"];
    reject_unknown(h, "hyperparams", {"gamma", "replay_capacity", "batch_size", "target_sync_every",
                                      "train_hz", "lr", "beta1", "beta2", "adam_eps", "grad_clip"});
    read_opt(h, "gamma", cfg.hp.gamma);
    read_opt(h, "replay_capacity", cfg.hp.replay_capacity);
    read_opt(h, "batch_size", cfg.hp.batch_size);
    read_opt(h, "target_sync_every", cfg.hp.target_sync_every);
    read_opt(h, "train_hz", cfg.hp.train_hz);
    read_opt(h, "lr", cfg.hp.adam.lr);
    read_opt(h, "beta1", cfg.hp.adam.beta1);
    read_opt(h, "beta2", cfg.hp.adam.beta2);
    read_opt(h, "adam_eps", cfg.hp.adam.eps);
    read_opt(h, "grad_clip", cfg.hp.grad_clip);
  }
  if (root.contains("seeds")) {
    reject_unknown(root["seeds"], "seeds", {"base"});
    read_opt(root["seeds"], "base", cfg.seeds.base);
  }
  if (root.contains("run")) {
    const json& r = root["run"];
    reject_unknown(r, "run", {"threshold", "window", "budget_s", "max_ticks", "episode_step_cap",
                              "deterministic", "actor_delay_ms", "train_steps_per_tick", "out"});
    read_opt(r, "threshold", cfg.run.threshold);
    read_opt(r, "window", cfg.run.window);
    read_opt(r, "budget_s", cfg.run.budget_s);
    read_opt(r, "max_ticks", cfg.run.max_ticks);
    read_opt(r, "episode_step_cap", cfg.run.episode_step_cap);
    read_opt(r, "deterministic", cfg.run.deterministic);
    read_opt(r, "actor_delay_ms", cfg.run.actor_delay_ms);
    read_opt(r, "train_steps_per_tick", cfg.run.train_steps_per_tick);
    std::string out = cfg.run.out.string();
    read_opt(r, "out", out);
    cfg.run.out = out;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path().empty() ? "." : path.parent_path());
}

std::string git_blob_hash(const std::string& contents) {
  const std::string head = "blob " + std::to_string(contents.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) &&
                  EVP_DigestUpdate(ctx, head.data(), head.size()) &&
                  EVP_DigestUpdate(ctx, contents.data(), contents.size()) &&
                  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned char b : std::span(digest, len)) {
    hex.push_back(kHex[b >> 4]);
    hex.push_back(kHex[b & 15]);
  }
  return hex;
}

std::string git_blob_hash_file(const std::filesystem::path& path) { return git_blob_hash(read_file(path)); }

}  // namespace quadrl::orch
