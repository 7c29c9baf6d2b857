#pragma once

// Dense and convolutional kernels with hand-written reverse-mode gradients.
//
// Tensors are row-major. Kernels take a leading batch axis N:
//   conv input   N x C x H x W   (a 3-D C x H x W input is treated as N = 1)
//   conv weight  O x C x k x k
//   linear input N x in,  linear weight in x out  (note: input-major)
// Kernels are instantiated for float (runtime) and double (verification).

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace quadrl::nn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, T fill = T{0});

  std::size_t size() const { return values.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }
  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

enum class LayerKind : std::uint8_t { Conv2d = 1, Linear = 2 };

template <typename T>
struct Layer {
  LayerKind kind = LayerKind::Linear;
  std::uint32_t stride = 1;  // conv only
  Tensor<T> weight;
  Tensor<T> bias;

  bool operator==(const Layer&) const = default;
};

/// Versioned parameter set. Gradients use the same structure.
template <typename T>
struct BasicNetParams {
  std::uint64_t version = 0;
  std::vector<Layer<T>> layers;

  std::size_t parameter_count() const;
  /// Same shapes, zero values, version 0.
  BasicNetParams zeros_like() const;
  /// Flat views in layer order (weight then bias per layer).
  std::vector<std::span<T>> tensors();
  std::vector<std::span<const T>> tensors() const;

  bool operator==(const BasicNetParams&) const = default;
};

using NetParams = BasicNetParams<float>;
using NetParams64 = BasicNetParams<double>;

template <typename To, typename From>
BasicNetParams<To> cast_params(const BasicNetParams<From>& p) {
  BasicNetParams<To> out;
  out.version = p.version;
  out.layers.reserve(p.layers.size());
  for (const auto& l : p.layers) {
    Layer<To> nl;
    nl.kind = l.kind;
    nl.stride = l.stride;
    nl.weight.shape = l.weight.shape;
    nl.weight.values.assign(l.weight.values.begin(), l.weight.values.end());
    nl.bias.shape = l.bias.shape;
    nl.bias.values.assign(l.bias.values.begin(), l.bias.values.end());
    out.layers.push_back(std::move(nl));
  }
  return out;
}

// ---- kernels -------------------------------------------------------------

/// `cols_out`, when given, receives the (C*k*k) x (N*OH*OW) patch matrix so the
/// backward pass can skip recomputing it.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                         std::size_t stride, std::vector<T>* cols_out = nullptr);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;  // empty when not requested
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                               const Tensor<T>& grad_out, std::size_t stride,
                               bool want_input_grad = true,
                               const std::vector<T>* cached_cols = nullptr);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
/// `x` is the forward input (pre-activation).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight,
                               const Tensor<T>& grad_out);

/// N x ... -> N x F. Backward is the inverse reshape (`unflatten`).
template <typename T>
Tensor<T> flatten(Tensor<T> x);
template <typename T>
Tensor<T> unflatten(Tensor<T> grad, const std::vector<std::size_t>& shape);

/// Concatenates N x A and N x B along the feature axis.
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_backward(const Tensor<T>& grad, std::size_t width_a);

/// Keeps freed heap blocks in-process. The kernels allocate multi-megabyte
/// temporaries on every call; without this each one is a fresh mmap and pays
/// its page faults again. Process-wide; call once from main().
void tune_allocator();

// ---- optimisation ---------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t t = 0;
  AdamConfig config;

  static AdamState for_params(const BasicNetParams<T>& p, AdamConfig config = {});
};

/// Bias-corrected Adam. Rejects (throws NonFiniteError) before touching
/// anything if a gradient is non-finite. Bumps t and params.version.
template <typename T>
void adam_step(BasicNetParams<T>& params, const BasicNetParams<T>& grads, AdamState<T>& state);

/// Returns the pre-clip global L2 norm; scales grads in place when it exceeds max_norm.
template <typename T>
double clip_global_norm(BasicNetParams<T>& grads, double max_norm);

// ---- parameter blob -------------------------------------------------------

/// Little-endian: u64 version, u32 layer count, then per layer
/// u8 kind, u32 stride, u32 rank + u32 dims (weight), u32 rank + u32 dims (bias),
/// raw f32 weight values, raw f32 bias values.
std::vector<std::uint8_t> encode_params(const NetParams& params);
NetParams decode_params(std::span<const std::uint8_t> blob);

// ---- verification ---------------------------------------------------------

/// Scalar function of a parameter set with an analytic gradient.
template <typename T>
class Objective {
 public:
  virtual ~Objective() = default;
  virtual T value(const BasicNetParams<T>& params) const = 0;
  /// Writes d(value)/d(params) into `grads` (same shapes) and returns the value.
  virtual T value_and_grad(const BasicNetParams<T>& params, BasicNetParams<T>& grads) const = 0;
  /// Sign pattern of every ReLU pre-activation. A finite difference is only
  /// meaningful when the pattern agrees at both probe points. Empty = smooth.
  virtual std::vector<bool> kink_signature(const BasicNetParams<T>&) const { return {}; }
};

struct GradCheckOptions {
  std::size_t coordinates = 320;  // spread across every weight/bias tensor
  double step = 1e-4;
  // A probe pair that straddles a ReLU kink is retried with step / 10 this many times.
  int kink_retries = 2;
  // Denominator floor, so coordinates with (near-)zero gradient are judged absolutely.
  double floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t kinks_skipped = 0;  // still straddling a kink at the smallest step
  // The coordinate that produced max_rel_error.
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central differences against the analytic gradient on a random coordinate sample.
/// Coordinates that straddle a kink at every tried step are skipped, not judged.
GradCheckResult grad_check(const Objective<double>& objective, const NetParams64& at,
                           const GradCheckOptions& options = {});

}  // namespace quadrl::nn
