#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "quadrl/nn.hpp"

namespace quadrl::nn {

static_assert(std::endian::native == std::endian::little,
              "parameter blob encoding assumes a little-endian host");

template <typename T>
std::size_t BasicNetParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

template <typename T>
BasicNetParams<T> BasicNetParams<T>::zeros_like() const {
  BasicNetParams out;
  out.layers.reserve(layers.size());
  for (const auto& l : layers) {
    Layer<T> z;
    z.kind = l.kind;
    z.stride = l.stride;
    z.weight = Tensor<T>(l.weight.shape);
    z.bias = Tensor<T>(l.bias.shape);
    out.layers.push_back(std::move(z));
  }
  return out;
}

template <typename T>
std::vector<std::span<T>> BasicNetParams<T>::tensors() {
  std::vector<std::span<T>> out;
  for (auto& l : layers) {
    out.emplace_back(l.weight.values);
    out.emplace_back(l.bias.values);
  }
  return out;
}

template <typename T>
std::vector<std::span<const T>> BasicNetParams<T>::tensors() const {
  std::vector<std::span<const T>> out;
  for (const auto& l : layers) {
    out.emplace_back(l.weight.values);
    out.emplace_back(l.bias.values);
  }
  return out;
}

template <typename T>
AdamState<T> AdamState<T>::for_params(const BasicNetParams<T>& p, AdamConfig config) {
  AdamState s;
  s.m.assign(p.parameter_count(), T{0});
  s.v.assign(p.parameter_count(), T{0});
  s.config = config;
  return s;
}

template <typename T>
void adam_step(BasicNetParams<T>& params, const BasicNetParams<T>& grads, AdamState<T>& state) {
  const std::size_t count = params.parameter_count();
  if (grads.parameter_count() != count || state.m.size() != count || state.v.size() != count) {
    throw ShapeError("adam_step: gradients/state not aligned with parameters");
  }
  const auto gviews = grads.tensors();
  for (const auto& g : gviews) {
    if (!std::all_of(g.begin(), g.end(), [](T v) { return std::isfinite(v); })) {
      throw NonFiniteError("adam_step: non-finite gradient, update rejected");
    }
  }
  const AdamConfig& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T inv_corr1 = static_cast<T>(1.0 / corr1);
  const T inv_corr2 = static_cast<T>(1.0 / corr2);
  const T lr = static_cast<T>(c.lr);
  const T eps = static_cast<T>(c.eps);
  std::size_t k = 0;
  auto pviews = params.tensors();
  for (std::size_t ti = 0; ti < pviews.size(); ++ti) {
    T* p = pviews[ti].data();
    const T* g = gviews[ti].data();
    T* m = state.m.data() + k;
    T* v = state.v.data() + k;
    const std::size_t n = pviews[ti].size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      p[i] -= lr * (m[i] * inv_corr1) / (std::sqrt(v[i] * inv_corr2) + eps);
    }
    k += n;
  }
  params.version += 1;
}

template <typename T>
double clip_global_norm(BasicNetParams<T>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : std::as_const(grads).tensors()) {
    for (T v : g) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto g : grads.tensors()) {
      for (T& v : g) v *= scale;
    }
  }
  return norm;
}

template struct BasicNetParams<float>;
template struct BasicNetParams<double>;
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(NetParams&, const NetParams&, AdamState<float>&);
template void adam_step(NetParams64&, const NetParams64&, AdamState<double>&);
template double clip_global_norm(NetParams&, double);
template double clip_global_norm(NetParams64&, double);

// ---- blob -----------------------------------------------------------------

namespace {

class BlobWriter {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(U));
  }
  void put_floats(std::span<const float> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    out_.insert(out_.end(), p, p + values.size_bytes());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class BlobReader {
 public:
  explicit BlobReader(std::span<const std::uint8_t> in) : in_(in) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, in_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  void get_floats(std::vector<float>& values) {
    need(values.size() * sizeof(float));
    std::memcpy(values.data(), in_.data() + pos_, values.size() * sizeof(float));
    pos_ += values.size() * sizeof(float);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw std::invalid_argument("parameter blob truncated");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void put_shape(BlobWriter& w, const std::vector<std::size_t>& shape) {
  w.put(static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) w.put(static_cast<std::uint32_t>(d));
}

std::vector<std::size_t> get_shape(BlobReader& r) {
  const auto rank = r.get<std::uint32_t>();
  if (rank > 8) throw std::invalid_argument("parameter blob: implausible tensor rank");
  std::vector<std::size_t> shape(rank);
  std::uint64_t total = 1;
  for (auto& d : shape) {
    d = r.get<std::uint32_t>();
    total *= d;
    if (total > (1ull << 31)) throw std::invalid_argument("parameter blob: tensor too large");
  }
  return shape;
}

}  // namespace

std::vector<std::uint8_t> encode_params(const NetParams& params) {
  BlobWriter w;
  w.put(static_cast<std::uint64_t>(params.version));
  w.put(static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    w.put(static_cast<std::uint8_t>(l.kind));
    w.put(static_cast<std::uint32_t>(l.stride));
    put_shape(w, l.weight.shape);
    put_shape(w, l.bias.shape);
    w.put_floats(l.weight.values);
    w.put_floats(l.bias.values);
  }
  return w.take();
}

NetParams decode_params(std::span<const std::uint8_t> blob) {
  BlobReader r(blob);
  NetParams p;
  p.version = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  if (count > 1024) throw std::invalid_argument("parameter blob: implausible layer count");
  for (std::uint32_t i = 0; i < count; ++i) {
    Layer<float> l;
    const auto kind = r.get<std::uint8_t>();
    if (kind != static_cast<std::uint8_t>(LayerKind::Conv2d) &&
        kind != static_cast<std::uint8_t>(LayerKind::Linear)) {
      throw std::invalid_argument("parameter blob: unknown layer kind");
    }
    l.kind = static_cast<LayerKind>(kind);
    l.stride = r.get<std::uint32_t>();
    l.weight = Tensor<float>(get_shape(r));
    l.bias = Tensor<float>(get_shape(r));
    r.get_floats(l.weight.values);
    r.get_floats(l.bias.values);
    p.layers.push_back(std::move(l));
  }
  if (!r.done()) throw std::invalid_argument("parameter blob: trailing bytes");
  return p;
}

// ---- gradient check -------------------------------------------------------

GradCheckResult grad_check(const Objective<double>& objective, const NetParams64& at,
                           const GradCheckOptions& options) {
  NetParams64 analytic = at.zeros_like();
  objective.value_and_grad(at, analytic);
  const auto grad_views = std::as_const(analytic).tensors();

  NetParams64 probe = at;
  auto probe_views = probe.tensors();
  const std::size_t n_tensors = probe_views.size();

  // Every tensor gets its share of the budget, so small layers are never skipped.
  const std::size_t per_tensor = (options.coordinates + n_tensors - 1) / std::max<std::size_t>(n_tensors, 1);
  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (std::size_t t = 0; t < n_tensors; ++t) {
    auto values = probe_views[t];
    std::vector<std::size_t> idx(values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::size_t take = std::min(per_tensor, idx.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = idx[i];
      const double saved = values[j];
      double h = options.step;
      double numeric = 0.0;
      bool smooth = false;
      for (int attempt = 0; attempt <= options.kink_retries && !smooth; ++attempt, h /= 10.0) {
        values[j] = saved + h;
        const double up = objective.value(probe);
        const auto sig_up = objective.kink_signature(probe);
        values[j] = saved - h;
        const double down = objective.value(probe);
        const auto sig_down = objective.kink_signature(probe);
        values[j] = saved;
        numeric = (up - down) / (2.0 * h);
        smooth = sig_up == sig_down;
      }
      if (!smooth) {
        ++result.kinks_skipped;
        continue;
      }
      const double a = grad_views[t][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
      ++result.coordinates_checked;
    }
  }
  return result;
}

}  // namespace quadrl::nn
