#include "quadrl/orchestrator/services.hpp"

#include <cstdio>

namespace quadrl::orch {

using wire::MessageKind;

// ---- sim ------------------------------------------------------------------

SimService::SimService(arena::ArenaSpec arena, std::size_t n_agents, const sim::SimConfig& config,
                       std::uint64_t seed, const std::string& address)
    : world_(sim::create_world(std::move(arena), n_agents, config, seed)), server_("sim") {
  auto states = [this](bool batched) {
    return [this, batched](const wire::StateQuery& q) {
      wire::StatesReply r;
      r.states = batched ? world_->get_states_batched(q.agents) : world_->get_states_nonbatched(q.agents);
      r.barrier_waits = world_->clock().barrier_waits();
      return r;
    };
  };
  server_.on<MessageKind::GetBatchStates>(states(true));
  server_.on<MessageKind::GetStatesNonBatched>(states(false));
  server_.on<MessageKind::ApplyActions>([this](const wire::ActionList& l) {
    for (const auto& a : l.actions) world_->apply_action(a.agent, a.action);
    return wire::Empty{};
  });
  server_.on<MessageKind::StepPeriod>([this](const wire::Empty&) {
    wire::StepReply r;
    for (const auto& o : world_->step_action_period()) {
      r.results.push_back({static_cast<float>(o.reward), static_cast<std::uint8_t>(o.kind)});
    }
    return r;
  });
  server_.on<MessageKind::ResetVehicle>([this](const wire::ResetVehicleRequest& q) {
    world_->reset_vehicle(q.agent, arena::Pose{{q.x, q.y, q.z}, q.yaw});
    return wire::Empty{};
  });
  server_.on<MessageKind::ResetAll>([this](const wire::Empty&) {
    world_->reset_all();
    return wire::Empty{};
  });
  server_.start(address);
}

// ---- replay ---------------------------------------------------------------

ReplayService::ReplayService(std::size_t capacity, std::uint64_t seed, const std::string& address)
    : buffer_(capacity), rng_(seed), server_("replay") {
  server_.on<MessageKind::PushExperiences>(
      [this](const wire::ExperienceBatch& b) { return buffer_.push(b.items); });
  server_.on<MessageKind::SampleBatch>([this](const wire::SampleRequest& q) {
    std::optional<std::vector<Experience>> items;
    {
      std::lock_guard lock(rng_mu_);
      items = buffer_.sample(q.n, rng_);
    }
    wire::SampleReply r;
    r.ready = items.has_value();
    if (items) r.items = std::move(*items);
    return r;
  });
  server_.on<MessageKind::ReplayStats>([this](const wire::Empty&) { return buffer_.stats(); });
  server_.start(address);
}

// ---- trainer --------------------------------------------------------------

std::string episode_csv_row(const wire::EpisodeRecord& r) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%u,%llu,%.1f,%u,%.6f,%.6f,%.6f", r.agent,
                static_cast<unsigned long long>(r.episode), static_cast<double>(r.reward), r.steps,
                static_cast<double>(r.epsilon), static_cast<double>(r.t_start_us) * 1e-6,
                static_cast<double>(r.t_end_us) * 1e-6);
  return buf;
}

Trainer::Trainer(TrainerOptions options) : opts_(std::move(options)), server_("trainer") {
  opts_.hp.validate();
  online_ = dqn::build_network(opts_.seed);
  online_.version = 1;
  target_ = dqn::sync_target(online_);
  adam_ = nn::AdamState<float>::for_params(online_, opts_.hp.adam);
  stats_.version = online_.version;
  replay_ = std::make_unique<wire::Client>(opts_.replay_address);

  if (!opts_.metrics_dir.empty()) {
    std::filesystem::create_directories(opts_.metrics_dir);
    episodes_csv_.open(opts_.metrics_dir / "episodes.csv", std::ios::trunc);
    episodes_csv_ << kEpisodesHeader << '\n';
    trainer_csv_.open(opts_.metrics_dir / "trainer.csv", std::ios::trunc);
    trainer_csv_ << "step,loss,version,rate\n";
    if (!episodes_csv_ || !trainer_csv_) {
      throw std::runtime_error("cannot write metrics under " + opts_.metrics_dir.string());
    }
  }

  server_.on<MessageKind::GetParams>([this](const wire::ParamsRequest& q) { return serve_params(q.have_version); });
  server_.on<MessageKind::ReportEpisode>([this](const wire::EpisodeRecord& r) {
    record_episode(r);
    return wire::Empty{};
  });
  server_.start(opts_.address);
}

Trainer::~Trainer() { stop(); }

wire::ParamsReply Trainer::serve_params(std::uint64_t have) {
  std::lock_guard lock(params_mu_);
  wire::ParamsReply r;
  r.version = online_.version;
  if (online_.version <= have) {
    r.up_to_date = true;
    return r;
  }
  if (!cached_blob_ || cached_version_ != online_.version) {
    cached_blob_ = std::make_shared<const wire::Bytes>(nn::encode_params(online_));
    cached_version_ = online_.version;
  }
  r.blob = *cached_blob_;
  return r;
}

void Trainer::record_episode(const wire::EpisodeRecord& r) {
  std::lock_guard lock(episodes_mu_);
  episodes_.push_back(r);
  if (episodes_csv_.is_open()) {
    episodes_csv_ << episode_csv_row(r) << '\n';
    episodes_csv_.flush();
  }
}

bool Trainer::sample_and_train() {
  const auto reply = replay_->call<MessageKind::SampleBatch>(
      wire::SampleRequest{static_cast<std::uint32_t>(opts_.hp.batch_size)});
  if (!reply.ready) return false;
  std::lock_guard lock(params_mu_);
  try {
    const auto res = dqn::train_step(online_, target_, reply.items, adam_, opts_.hp, opts_.max_range);
    std::lock_guard s(stats_mu_);
    stats_.steps += 1;
    stats_.last_loss = res.loss;
    stats_.version = online_.version;
    if (stats_.steps % opts_.hp.target_sync_every == 0) {
      target_ = dqn::sync_target(online_);
      stats_.target_syncs += 1;
    }
    step_times_.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - ready_at_).count());
  } catch (const nn::NonFiniteError&) {
    std::lock_guard s(stats_mu_);
    stats_.skipped_nonfinite += 1;
  }
  return true;
}

bool Trainer::step_once() {
  {
    std::lock_guard s(stats_mu_);
    if (!stats_.ready) {
      const auto st = replay_->call<MessageKind::ReplayStats>(wire::Empty{});
      if (st.len < st.capacity) return false;
      stats_.ready = true;
      ready_at_ = row_at_ = std::chrono::steady_clock::now();
    }
  }
  if (!sample_and_train()) return false;
  // Lockstep rows follow the nominal rate: one per train_hz steps.
  const auto st = stats();
  if (st.steps % static_cast<std::uint64_t>(std::max(1.0, opts_.hp.train_hz)) == 0) {
    log_row(opts_.hp.train_hz);
  }
  return true;
}

void Trainer::log_row(double rate) {
  if (!trainer_csv_.is_open()) return;
  const auto st = stats();
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%llu,%.6g,%llu,%.3f", static_cast<unsigned long long>(st.steps),
                st.last_loss, static_cast<unsigned long long>(st.version), rate);
  trainer_csv_ << buf << '\n';
  trainer_csv_.flush();
}

void Trainer::start_loop() {
  if (running_.exchange(true)) return;
  thread_ = std::thread([this] {
    try {
      loop();
    } catch (const std::exception& e) {
      std::lock_guard s(stats_mu_);
      failure_ = e.what();
    }
  });
}

void Trainer::stop() {
  running_ = false;
  if (thread_.joinable()) thread_.join();
  server_.stop();
}

void Trainer::loop() {
  using Clock = std::chrono::steady_clock;
  while (running_) {
    const auto st = replay_->call<MessageKind::ReplayStats>(wire::Empty{});
    if (st.len >= st.capacity) break;
    std::this_thread::sleep_for(opts_.ready_poll);
  }
  if (!running_) return;
  {
    std::lock_guard s(stats_mu_);
    stats_.ready = true;
    ready_at_ = row_at_ = Clock::now();
  }
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / opts_.hp.train_hz));
  auto next = Clock::now();
  while (running_) {
    std::this_thread::sleep_until(next);
    next += period;
    // After a long stall, restart the schedule instead of bursting to catch up.
    if (Clock::now() - next > 5 * period) next = Clock::now() + period;
    sample_and_train();

    const auto now = Clock::now();
    const double since_row = std::chrono::duration<double>(now - row_at_).count();
    if (since_row >= 1.0) {
      std::uint64_t steps;
      {
        std::lock_guard s(stats_mu_);
        steps = stats_.steps;
      }
      log_row(static_cast<double>(steps - row_steps_) / since_row);
      row_steps_ = steps;
      row_at_ = now;
    }
  }
}

TrainerStats Trainer::stats() const {
  std::lock_guard s(stats_mu_);
  return stats_;
}

std::vector<double> Trainer::step_times() const {
  std::lock_guard s(stats_mu_);
  return step_times_;
}

std::optional<std::string> Trainer::failure() const {
  std::lock_guard s(stats_mu_);
  return failure_;
}

std::vector<wire::EpisodeRecord> Trainer::episodes() const {
  std::lock_guard lock(episodes_mu_);
  return episodes_;
}

std::size_t Trainer::episode_count() const {
  std::lock_guard lock(episodes_mu_);
  return episodes_.size();
}

std::optional<double> Trainer::moving_average(std::size_t window) const {
  std::lock_guard lock(episodes_mu_);
  if (window == 0 || episodes_.size() < window) return std::nullopt;
  double sum = 0.0;
  for (std::size_t i = episodes_.size() - window; i < episodes_.size(); ++i) sum += episodes_[i].reward;
  return sum / static_cast<double>(window);
}

nn::NetParams Trainer::params_copy() const {
  std::lock_guard lock(params_mu_);
  return online_;
}

}  // namespace quadrl::orch
