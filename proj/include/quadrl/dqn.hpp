#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "quadrl/nn.hpp"
#include "quadrl/state.hpp"

namespace quadrl::dqn {

// Architecture table. Layer order in NetParams:
//   0 conv  2->16, 6x6, stride 2   (32 -> 14)
//   1 conv 16->8,  3x3, stride 1   (14 -> 12), flattened to 8*12*12 = 1152
//   2 velocity linear 3->16
//   3 linear 1168->256
//   4 linear 256->2
inline constexpr std::size_t kConv1Out = 16;
inline constexpr std::size_t kConv1Kernel = 6;
inline constexpr std::size_t kConv1Stride = 2;
inline constexpr std::size_t kConv2Out = 8;
inline constexpr std::size_t kConv2Kernel = 3;
inline constexpr std::size_t kConv2Stride = 1;
inline constexpr std::size_t kVelocityWidth = 16;
inline constexpr std::size_t kHiddenWidth = 256;
inline constexpr std::size_t kImageFlatWidth = 1152;
inline constexpr std::size_t kConcatWidth = kImageFlatWidth + kVelocityWidth;
inline constexpr std::size_t kNumLayers = 5;

inline constexpr float kDefaultMaxRange = 20.0f;

/// Action index -> commanded lateral increment (m/s).
inline constexpr std::array<double, kNumActions> kActionValues = {0.25, -0.25};

using QValues = std::array<float, kNumActions>;

struct Hyperparams {
  double gamma = 0.99;
  std::size_t replay_capacity = 15000;
  std::size_t batch_size = 32;
  std::size_t target_sync_every = 150;
  double train_hz = 50.0;
  nn::AdamConfig adam{};
  double grad_clip = 10.0;

  void validate() const;
};

nn::NetParams build_network(std::uint64_t seed);

/// Network inputs: images N x 2 x 32 x 32 scaled by 1/max_range, velocities N x 3.
template <typename T>
struct Inputs {
  nn::Tensor<T> images;
  nn::Tensor<T> velocity;
};

template <typename T>
Inputs<T> encode_inputs(std::span<const StackedState> states, float max_range = kDefaultMaxRange);

/// Intermediate activations kept for the backward pass.
template <typename T>
struct ForwardCache {
  Inputs<T> inputs;
  std::vector<T> conv1_cols, conv2_cols;
  nn::Tensor<T> conv1_pre, conv1_act;
  nn::Tensor<T> conv2_pre, conv2_act;
  nn::Tensor<T> vel_pre, vel_act;
  nn::Tensor<T> joined;
  nn::Tensor<T> fc1_pre, fc1_act;
  nn::Tensor<T> q;
};

/// N x 2 Q-values. `cache`, when given, receives the activations.
template <typename T>
nn::Tensor<T> forward(const nn::BasicNetParams<T>& params, const Inputs<T>& inputs,
                      ForwardCache<T>* cache = nullptr);

/// Gradient of sum(grad_q * Q) w.r.t. every parameter.
template <typename T>
nn::BasicNetParams<T> backward(const nn::BasicNetParams<T>& params, const ForwardCache<T>& cache,
                               const nn::Tensor<T>& grad_q);

QValues q_values(const nn::NetParams& params, const StackedState& s,
                 float max_range = kDefaultMaxRange);
std::vector<QValues> q_values_batch(const nn::NetParams& params,
                                    std::span<const StackedState> states,
                                    float max_range = kDefaultMaxRange);

/// Lowest index wins ties.
Action greedy_action(const QValues& q);
/// Always consumes exactly two uniform draws, so streams stay aligned across epsilons.
Action select_action(const QValues& q, double epsilon, std::mt19937_64& rng);

/// max(0, 1 - a_T / capacity).
double epsilon_schedule(std::uint64_t total_actions, std::uint64_t capacity);

/// y = r + gamma * max_a' Q_target(s', a'), or y = r when done.
std::vector<float> td_targets(std::span<const Experience> batch, const nn::NetParams& target,
                              double gamma, float max_range = kDefaultMaxRange);

struct TrainResult {
  double loss = 0.0;       // before the update
  double grad_norm = 0.0;  // before clipping
};

/// One Adam update on the mean squared TD error of the taken actions.
/// Throws nn::NonFiniteError (params untouched) if the loss or gradient is non-finite.
TrainResult train_step(nn::NetParams& params, const nn::NetParams& target,
                       std::span<const Experience> batch, nn::AdamState<float>& adam,
                       const Hyperparams& hp, float max_range = kDefaultMaxRange);

inline nn::NetParams sync_target(const nn::NetParams& params) { return params; }

/// Mean squared TD error against frozen targets, as a function of the parameters.
class TdLossObjective final : public nn::Objective<double> {
 public:
  TdLossObjective(std::vector<Experience> batch, std::vector<double> targets,
                  float max_range = kDefaultMaxRange);

  double value(const nn::NetParams64& params) const override;
  double value_and_grad(const nn::NetParams64& params, nn::NetParams64& grads) const override;
  std::vector<bool> kink_signature(const nn::NetParams64& params) const override;

 private:
  Inputs<double> inputs_;
  std::vector<std::size_t> actions_;
  std::vector<double> targets_;
};

}  // namespace quadrl::dqn
