#include <algorithm>
#include <cmath>

#include "quadrl/dqn.hpp"

namespace quadrl::dqn {

Action greedy_action(const QValues& q) { return q[1] > q[0] ? Action::Right : Action::Left; }

Action select_action(const QValues& q, double epsilon, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double explore = unit(rng);
  const double pick = unit(rng);
  if (explore < epsilon) return pick < 0.5 ? Action::Left : Action::Right;
  return greedy_action(q);
}

double epsilon_schedule(std::uint64_t total_actions, std::uint64_t capacity) {
  if (capacity == 0) return 0.0;
  return std::max(0.0, 1.0 - static_cast<double>(total_actions) / static_cast<double>(capacity));
}

namespace {

std::vector<StackedState> states(std::span<const Experience> batch) {
  std::vector<StackedState> out;
  out.reserve(batch.size());
  for (const Experience& e : batch) out.push_back(e.s);
  return out;
}

}  // namespace

std::vector<float> td_targets(std::span<const Experience> batch, const nn::NetParams& target,
                              double gamma, float max_range) {
  if (batch.empty()) throw std::invalid_argument("td_targets needs a non-empty batch");
  std::vector<float> y(batch.size());
  // Only non-terminal transitions need the bootstrap forward pass.
  std::vector<StackedState> boot;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    y[i] = batch[i].r;
    if (!batch[i].done) {
      boot.push_back(batch[i].s_next);
      where.push_back(i);
    }
  }
  if (!boot.empty()) {
    const auto q = q_values_batch(target, boot, max_range);
    for (std::size_t j = 0; j < where.size(); ++j) {
      const double best = std::max(q[j][0], q[j][1]);
      y[where[j]] = static_cast<float>(batch[where[j]].r + gamma * best);
    }
  }
  return y;
}

TrainResult train_step(nn::NetParams& params, const nn::NetParams& target,
                       std::span<const Experience> batch, nn::AdamState<float>& adam,
                       const Hyperparams& hp, float max_range) {
  if (batch.empty()) throw std::invalid_argument("train_step needs a non-empty batch");
  const std::vector<float> y = td_targets(batch, target, hp.gamma, max_range);
  const auto s = states(batch);
  ForwardCache<float> cache;
  const nn::Tensor<float> q = forward(params, encode_inputs<float>(s, max_range), &cache);

  const std::size_t n = batch.size();
  nn::Tensor<float> grad_q({n, kNumActions});
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = static_cast<std::size_t>(batch[i].a);
    const double err = static_cast<double>(q[i * kNumActions + a]) - y[i];
    loss += err * err;
    grad_q[i * kNumActions + a] = static_cast<float>(2.0 * err / static_cast<double>(n));
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw nn::NonFiniteError("train_step: non-finite loss, update skipped");

  nn::NetParams grads = backward(params, cache, grad_q);
  TrainResult result;
  result.loss = loss;
  result.grad_norm = nn::clip_global_norm(grads, hp.grad_clip);
  if (!std::isfinite(result.grad_norm)) {
    throw nn::NonFiniteError("train_step: non-finite gradient, update skipped");
  }
  nn::adam_step(params, grads, adam);
  return result;
}

TdLossObjective::TdLossObjective(std::vector<Experience> batch, std::vector<double> targets,
                                 float max_range)
    : targets_(std::move(targets)) {
  if (batch.size() != targets_.size()) throw std::invalid_argument("one target per transition");
  inputs_ = encode_inputs<double>(states(batch), max_range);
  for (const Experience& e : batch) actions_.push_back(static_cast<std::size_t>(e.a));
}

double TdLossObjective::value(const nn::NetParams64& params) const {
  const nn::Tensor<double> q = forward(params, inputs_);
  double loss = 0.0;
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    const double err = q[i * kNumActions + actions_[i]] - targets_[i];
    loss += err * err;
  }
  return loss / static_cast<double>(targets_.size());
}

double TdLossObjective::value_and_grad(const nn::NetParams64& params, nn::NetParams64& grads) const {
  ForwardCache<double> cache;
  const nn::Tensor<double> q = forward(params, inputs_, &cache);
  const std::size_t n = targets_.size();
  nn::Tensor<double> grad_q({n, kNumActions});
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double err = q[i * kNumActions + actions_[i]] - targets_[i];
    loss += err * err;
    grad_q[i * kNumActions + actions_[i]] = 2.0 * err / static_cast<double>(n);
  }
  grads = backward(params, cache, grad_q);
  return loss / static_cast<double>(n);
}

std::vector<bool> TdLossObjective::kink_signature(const nn::NetParams64& params) const {
  ForwardCache<double> c;
  forward(params, inputs_, &c);
  std::vector<bool> sig;
  for (const nn::Tensor<double>* pre : {&c.conv1_pre, &c.conv2_pre, &c.vel_pre, &c.fc1_pre}) {
    for (double v : pre->values) sig.push_back(v > 0.0);
  }
  return sig;
}

}  // namespace quadrl::dqn
