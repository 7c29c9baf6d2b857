#include <algorithm>
#include <cmath>

#include "quadrl/dqn.hpp"

namespace quadrl::dqn {

using nn::Tensor;

void Hyperparams::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (replay_capacity == 0 || batch_size == 0 || target_sync_every == 0) {
    throw std::invalid_argument("replay_capacity, batch_size and target_sync_every must be > 0");
  }
  if (!(train_hz > 0.0)) throw std::invalid_argument("train_hz must be > 0");
  if (!(adam.lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
}

nn::NetParams build_network(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto he_uniform = [&](Tensor<float>& w, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (float& v : w.values) v = static_cast<float>(dist(rng));
  };
  auto conv = [&](std::size_t in, std::size_t out, std::size_t k, std::size_t stride) {
    nn::Layer<float> l;
    l.kind = nn::LayerKind::Conv2d;
    l.stride = static_cast<std::uint32_t>(stride);
    l.weight = Tensor<float>({out, in, k, k});
    l.bias = Tensor<float>({out});
    he_uniform(l.weight, in * k * k);
    return l;
  };
  auto linear = [&](std::size_t in, std::size_t out) {
    nn::Layer<float> l;
    l.kind = nn::LayerKind::Linear;
    l.weight = Tensor<float>({in, out});
    l.bias = Tensor<float>({out});
    he_uniform(l.weight, in);
    return l;
  };
  nn::NetParams p;
  p.layers.push_back(conv(2, kConv1Out, kConv1Kernel, kConv1Stride));
  p.layers.push_back(conv(kConv1Out, kConv2Out, kConv2Kernel, kConv2Stride));
  p.layers.push_back(linear(3, kVelocityWidth));
  p.layers.push_back(linear(kConcatWidth, kHiddenWidth));
  p.layers.push_back(linear(kHiddenWidth, kNumActions));
  return p;
}

template <typename T>
Inputs<T> encode_inputs(std::span<const StackedState> states, float max_range) {
  const std::size_t n = states.size();
  Inputs<T> in{Tensor<T>({n, 2, kImageSide, kImageSide}), Tensor<T>({n, 3})};
  const T scale = T{1} / static_cast<T>(max_range);
  for (std::size_t i = 0; i < n; ++i) {
    const StackedState& s = states[i];
    if (!s.finite()) throw nn::NonFiniteError("q-network input contains non-finite values");
    T* dst = in.images.values.data() + i * 2 * kImagePixels;
    for (std::size_t p = 0; p < kImagePixels; ++p) {
      dst[p] = static_cast<T>(s.image_now.depths[p]) * scale;
      dst[kImagePixels + p] = static_cast<T>(s.image_prev.depths[p]) * scale;
    }
    for (std::size_t k = 0; k < 3; ++k) in.velocity[i * 3 + k] = static_cast<T>(s.velocity[k]);
  }
  return in;
}

namespace {

template <typename T>
void check_architecture(const nn::BasicNetParams<T>& p) {
  if (p.layers.size() != kNumLayers || p.layers[0].kind != nn::LayerKind::Conv2d ||
      p.layers[1].kind != nn::LayerKind::Conv2d || p.layers[2].kind != nn::LayerKind::Linear ||
      p.layers[3].kind != nn::LayerKind::Linear || p.layers[4].kind != nn::LayerKind::Linear) {
    throw nn::ShapeError("parameters do not follow the q-network layer table");
  }
}

}  // namespace

template <typename T>
Tensor<T> forward(const nn::BasicNetParams<T>& params, const Inputs<T>& inputs,
                  ForwardCache<T>* cache) {
  check_architecture(params);
  const auto& L = params.layers;
  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  c.inputs = inputs;
  c.conv1_pre = nn::conv2d_forward(inputs.images, L[0].weight, L[0].bias, L[0].stride,
                                   cache ? &c.conv1_cols : nullptr);
  c.conv1_act = nn::relu_forward(c.conv1_pre);
  c.conv2_pre = nn::conv2d_forward(c.conv1_act, L[1].weight, L[1].bias, L[1].stride,
                                   cache ? &c.conv2_cols : nullptr);
  c.conv2_act = nn::relu_forward(c.conv2_pre);
  c.vel_pre = nn::linear_forward(inputs.velocity, L[2].weight, L[2].bias);
  c.vel_act = nn::relu_forward(c.vel_pre);
  c.joined = nn::concat(nn::flatten(c.conv2_act), c.vel_act);
  c.fc1_pre = nn::linear_forward(c.joined, L[3].weight, L[3].bias);
  c.fc1_act = nn::relu_forward(c.fc1_pre);
  c.q = nn::linear_forward(c.fc1_act, L[4].weight, L[4].bias);
  return c.q;
}

template <typename T>
nn::BasicNetParams<T> backward(const nn::BasicNetParams<T>& params, const ForwardCache<T>& c,
                               const Tensor<T>& grad_q) {
  check_architecture(params);
  const auto& L = params.layers;
  nn::BasicNetParams<T> g = params.zeros_like();

  auto head = nn::linear_backward(c.fc1_act, L[4].weight, grad_q);
  g.layers[4].weight = std::move(head.weight);
  g.layers[4].bias = std::move(head.bias);

  auto fc1 = nn::linear_backward(c.joined, L[3].weight, nn::relu_backward(c.fc1_pre, head.input));
  g.layers[3].weight = std::move(fc1.weight);
  g.layers[3].bias = std::move(fc1.bias);

  const std::size_t image_width = c.joined.dim(1) - c.vel_act.dim(1);
  auto [d_image, d_vel] = nn::concat_backward(fc1.input, image_width);

  auto vel = nn::linear_backward(c.inputs.velocity, L[2].weight, nn::relu_backward(c.vel_pre, d_vel));
  g.layers[2].weight = std::move(vel.weight);
  g.layers[2].bias = std::move(vel.bias);

  auto d_conv2 = nn::relu_backward(c.conv2_pre, nn::unflatten(std::move(d_image), c.conv2_act.shape));
  auto conv2 = nn::conv2d_backward(c.conv1_act, L[1].weight, d_conv2, L[1].stride, true,
                                   c.conv2_cols.empty() ? nullptr : &c.conv2_cols);
  g.layers[1].weight = std::move(conv2.weight);
  g.layers[1].bias = std::move(conv2.bias);

  auto d_conv1 = nn::relu_backward(c.conv1_pre, conv2.input);
  auto conv1 = nn::conv2d_backward(c.inputs.images, L[0].weight, d_conv1, L[0].stride, false,
                                   c.conv1_cols.empty() ? nullptr : &c.conv1_cols);
  g.layers[0].weight = std::move(conv1.weight);
  g.layers[0].bias = std::move(conv1.bias);
  return g;
}

template Inputs<float> encode_inputs(std::span<const StackedState>, float);
template Inputs<double> encode_inputs(std::span<const StackedState>, float);
template Tensor<float> forward(const nn::NetParams&, const Inputs<float>&, ForwardCache<float>*);
template Tensor<double> forward(const nn::NetParams64&, const Inputs<double>&, ForwardCache<double>*);
template nn::NetParams backward(const nn::NetParams&, const ForwardCache<float>&, const Tensor<float>&);
template nn::NetParams64 backward(const nn::NetParams64&, const ForwardCache<double>&,
                                  const Tensor<double>&);

std::vector<QValues> q_values_batch(const nn::NetParams& params,
                                    std::span<const StackedState> states, float max_range) {
  std::vector<QValues> out(states.size());
  if (states.empty()) return out;
  const Tensor<float> q = forward(params, encode_inputs<float>(states, max_range));
  for (std::size_t i = 0; i < states.size(); ++i) {
    out[i] = {q[i * kNumActions], q[i * kNumActions + 1]};
    if (!std::isfinite(out[i][0]) || !std::isfinite(out[i][1])) {
      throw nn::NonFiniteError("q-network produced a non-finite value");
    }
  }
  return out;
}

QValues q_values(const nn::NetParams& params, const StackedState& s, float max_range) {
  return q_values_batch(params, std::span(&s, 1), max_range).front();
}

}  // namespace quadrl::dqn
