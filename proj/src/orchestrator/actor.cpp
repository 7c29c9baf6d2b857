#include "quadrl/orchestrator/actor.hpp"

#include <thread>

#include "quadrl/simcore.hpp"

namespace quadrl::orch {

using wire::MessageKind;

Actor::Actor(ActorOptions options)
    : opts_(std::move(options)),
      policy_rng_(sim::agent_stream(opts_.seed, 0)),
      spawn_rng_(sim::agent_stream(opts_.seed, 1)),
      current_(opts_.n_agents),
      episodes_(opts_.n_agents) {
  connect();
  refresh_params();
  if (params_.layers.empty()) throw std::runtime_error("trainer served no parameters");
  for (auto& e : episodes_) e.t_start_us = now_us();
}

void Actor::connect() {
  sim_ = std::make_unique<wire::Client>(opts_.sim_address);
  replay_ = std::make_unique<wire::Client>(opts_.replay_address);
  trainer_ = std::make_unique<wire::Client>(opts_.trainer_address);
}

std::uint64_t Actor::now_us() const {
  if (opts_.simulated_time) {
    return static_cast<std::uint64_t>(static_cast<double>(stats_.ticks) * opts_.action_period * 1e6 + 0.5);
  }
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - opts_.epoch)
          .count());
}

void Actor::refresh_params() {
  const auto reply = wire::get_params_client(*trainer_, params_.version);
  if (reply.up_to_date) return;
  params_ = nn::decode_params(reply.blob);
  stats_.param_refreshes += 1;
  stats_.params_version = params_.version;
}

void Actor::fetch_missing_states() {
  std::vector<std::uint32_t> ids;
  for (std::uint32_t i = 0; i < current_.size(); ++i) {
    if (!current_[i]) ids.push_back(i);
  }
  if (ids.empty()) return;
  auto reply = sim_->call<MessageKind::GetBatchStates>(wire::StateQuery{ids});
  for (std::size_t k = 0; k < ids.size(); ++k) current_[ids[k]] = std::move(reply.states[k]);
}

void Actor::reset_agent(std::uint32_t local) {
  const arena::Pose pose = arena::sample_spawn(opts_.arena, spawn_rng_);
  sim_->call<MessageKind::ResetVehicle>(wire::ResetVehicleRequest{
      local, static_cast<float>(pose.position.x), static_cast<float>(pose.position.y),
      static_cast<float>(pose.position.z), static_cast<float>(pose.yaw)});
}

void Actor::finish_episode(std::uint32_t local, double epsilon) {
  Episode& e = episodes_[local];
  wire::EpisodeRecord r;
  r.agent = opts_.agent_offset + local;
  r.episode = e.index;
  r.reward = static_cast<float>(e.reward);
  r.steps = e.steps;
  r.epsilon = static_cast<float>(epsilon);
  r.t_start_us = e.t_start_us;
  r.t_end_us = now_us();
  finished_.push_back(r);
  e = Episode{e.index + 1, 0.0, 0, r.t_end_us};
  stats_.episodes += 1;
}

void Actor::tick() {
  const auto started = std::chrono::steady_clock::now();
  if (last_tick_) {
    stats_.max_tick_gap_s =
        std::max(stats_.max_tick_gap_s, std::chrono::duration<double>(started - *last_tick_).count());
  }
  last_tick_ = started;

  const auto rs = replay_->call<MessageKind::ReplayStats>(wire::Empty{});
  const double epsilon = dqn::epsilon_schedule(rs.total_actions, rs.capacity);
  stats_.last_epsilon = epsilon;

  fetch_missing_states();
  const std::size_t n = current_.size();
  std::vector<StackedState> states;
  states.reserve(n);
  for (const auto& s : current_) states.push_back(*s);
  const auto q = dqn::q_values_batch(params_, states, opts_.max_range);

  wire::ActionList actions;
  for (std::uint32_t i = 0; i < n; ++i) {
    actions.actions.push_back({i, dqn::select_action(q[i], epsilon, policy_rng_)});
  }
  sim_->call<MessageKind::ApplyActions>(actions);
  const auto step = sim_->call<MessageKind::StepPeriod>(wire::Empty{});
  stats_.ticks += 1;

  // Terminal agents restart before the render so their fresh state arrives in the same batch.
  std::vector<bool> terminal(n, false);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto kind = static_cast<sim::TerminalKind>(step.results[i].kind);
    episodes_[i].reward += step.results[i].reward;
    episodes_[i].steps += 1;
    if (kind == sim::TerminalKind::Collision || kind == sim::TerminalKind::Goal) {
      terminal[i] = true;
      reset_agent(i);
    }
  }
  std::vector<std::uint32_t> all(n);
  for (std::uint32_t i = 0; i < n; ++i) all[i] = i;
  auto rendered = sim_->call<MessageKind::GetBatchStates>(wire::StateQuery{all});

  wire::ExperienceBatch batch;
  std::vector<std::uint32_t> agents;
  batch.items.reserve(n);
  bool episode_ended = false;
  for (std::uint32_t i = 0; i < n; ++i) {
    Experience e;
    e.s = states[i];
    e.a = actions.actions[i].action;
    e.r = step.results[i].reward;
    if (terminal[i]) {
      e.s_next = states[i];  // masked out of the target by done
      e.done = true;
      current_[i] = std::move(rendered.states[i]);
      finish_episode(i, epsilon);
      episode_ended = true;
    } else {
      e.s_next = rendered.states[i];
      e.done = false;
      if (episodes_[i].steps >= opts_.episode_step_cap) {
        // Truncated, not failed: the transition still bootstraps from s'.
        reset_agent(i);
        current_[i].reset();
        finish_episode(i, epsilon);
        episode_ended = true;
      } else {
        current_[i] = std::move(rendered.states[i]);
      }
    }
    batch.items.push_back(std::move(e));
    agents.push_back(opts_.agent_offset + i);
  }
  const auto pushed = replay_->call<MessageKind::PushExperiences>(batch);
  stats_.pushed += pushed.accepted;
  stats_.rejected += pushed.rejected.size();
  if (observer_) observer_(batch.items, agents);

  if (episode_ended) {
    for (const auto& r : finished_) trainer_->call<MessageKind::ReportEpisode>(r);
    finished_.clear();
    refresh_params();
  }
  if (opts_.delay_ms > 0.0) {
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(opts_.delay_ms));
  }
}

bool Actor::run(const std::atomic<bool>& stop, std::uint64_t max_ticks) {
  int failures = 0;
  while (!stop && (max_ticks == 0 || stats_.ticks < max_ticks)) {
    try {
      tick();
      failures = 0;
    } catch (const wire::RemoteError&) {
      throw;
    } catch (const wire::WireError& e) {
      if (e.code() != wire::ErrorCode::ConnectionReset && e.code() != wire::ErrorCode::Timeout &&
          e.code() != wire::ErrorCode::ConnectFailed) {
        throw;
      }
      if (++failures > opts_.max_retries) return false;
      std::this_thread::sleep_for(std::chrono::milliseconds(200 * failures));
      try {
        connect();
      } catch (const wire::WireError&) {
        continue;
      }
      // The interrupted tick may or may not have stepped the world; restart from fresh renders.
      for (auto& s : current_) s.reset();
      last_tick_.reset();
    }
  }
  return true;
}

}  // namespace quadrl::orch
