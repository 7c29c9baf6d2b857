#include <algorithm>
#include <cmath>
#include <numeric>

#include <malloc.h>

#include <Eigen/Core>

#include "quadrl/nn.hpp"

namespace quadrl::nn {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> dims, T fill)
    : shape(std::move(dims)), values(shape_product(shape), fill) {}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

namespace {

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct ConvGeom {
  std::size_t n, c, h, w, o, k, stride, oh, ow;
  std::size_t ck() const { return c * k * k; }
  std::size_t pixels() const { return oh * ow; }
};

template <typename T>
ConvGeom conv_geom(const Tensor<T>& input, const Tensor<T>& weight, std::size_t stride) {
  ConvGeom g{};
  if (input.rank() == 3) {
    g.n = 1;
    g.c = input.dim(0);
    g.h = input.dim(1);
    g.w = input.dim(2);
  } else if (input.rank() == 4) {
    g.n = input.dim(0);
    g.c = input.dim(1);
    g.h = input.dim(2);
    g.w = input.dim(3);
  } else {
    throw ShapeError("conv2d input must be CxHxW or NxCxHxW, got " + shape_str(input.shape));
  }
  if (weight.rank() != 4 || weight.dim(1) != g.c || weight.dim(2) != weight.dim(3)) {
    throw ShapeError("conv2d weight " + shape_str(weight.shape) + " incompatible with input " +
                     shape_str(input.shape));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be >= 1");
  g.o = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  if (g.h < g.k || g.w < g.k) throw ShapeError("conv2d input smaller than kernel");
  g.oh = (g.h - g.k) / stride + 1;
  g.ow = (g.w - g.k) / stride + 1;
  return g;
}

// Writes one sample's patches into `cols`, whose rows are `row_stride` apart.
template <typename T>
void im2col(const T* in, const ConvGeom& g, T* cols, std::size_t row_stride) {
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((c * g.k + ky) * g.k + kx) * row_stride;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const T* src = in + (c * g.h + oy * g.stride + ky) * g.w + kx;
          T* dst = row + oy * g.ow;
          if (g.stride == 1) {
            std::copy_n(src, g.ow, dst);
          } else {
            for (std::size_t ox = 0; ox < g.ow; ++ox) dst[ox] = src[ox * g.stride];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* in, std::size_t row_stride) {
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((c * g.k + ky) * g.k + kx) * row_stride;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          T* dst = in + (c * g.h + oy * g.stride + ky) * g.w + kx;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
ConstMatMap<T> cmat(const T* p, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
MatMap<T> mat(T* p, std::size_t rows, std::size_t cols) {
  return MatMap<T>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Columns of every sample side by side: (C*k*k) x (N*OH*OW).
template <typename T>
std::vector<T> batch_im2col(const Tensor<T>& input, const ConvGeom& g) {
  const std::size_t np = g.n * g.pixels();
  std::vector<T> cols(g.ck() * np);
  const std::size_t in_stride = g.c * g.h * g.w;
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(input.values.data() + n * in_stride, g, cols.data() + n * g.pixels(), np);
  }
  return cols;
}

std::pair<std::size_t, std::size_t> matrix_dims(const std::vector<std::size_t>& shape,
                                                const char* what) {
  if (shape.size() != 2) throw ShapeError(std::string(what) + " must be 2-D, got " + shape_str(shape));
  return {shape[0], shape[1]};
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                         std::size_t stride, std::vector<T>* cols_out) {
  const ConvGeom g = conv_geom(input, weight, stride);
  if (bias.size() != g.o) throw ShapeError("conv2d bias length must equal output channels");
  const std::size_t np = g.n * g.pixels();
  std::vector<T> cols = batch_im2col(input, g);
  RowMat<T> prod = cmat(weight.values.data(), g.o, g.ck()) * cmat(cols.data(), g.ck(), np);
  if (cols_out) *cols_out = std::move(cols);
  Tensor<T> out({g.n, g.o, g.oh, g.ow});
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t o = 0; o < g.o; ++o) {
      const T* src = prod.data() + o * np + n * g.pixels();
      T* dst = out.values.data() + (n * g.o + o) * g.pixels();
      for (std::size_t p = 0; p < g.pixels(); ++p) dst[p] = src[p] + bias[o];
    }
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                               const Tensor<T>& grad_out, std::size_t stride,
                               bool want_input_grad, const std::vector<T>* cached_cols) {
  const ConvGeom g = conv_geom(input, weight, stride);
  if (grad_out.size() != g.n * g.o * g.pixels()) {
    throw ShapeError("conv2d grad_out " + shape_str(grad_out.shape) + " does not match forward");
  }
  const std::size_t np = g.n * g.pixels();
  // grad_out regrouped to O x (N*P), matching the column layout.
  RowMat<T> dout(static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(np));
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t o = 0; o < g.o; ++o) {
      std::copy_n(grad_out.values.data() + (n * g.o + o) * g.pixels(), g.pixels(),
                  dout.data() + o * np + n * g.pixels());
    }
  }
  std::vector<T> fresh;
  if (cached_cols && cached_cols->size() != g.ck() * np) {
    throw ShapeError("conv2d_backward: cached columns do not match the input");
  }
  if (!cached_cols) fresh = batch_im2col(input, g);
  const std::vector<T>& cols = cached_cols ? *cached_cols : fresh;
  Conv2dGrads<T> grads;
  grads.weight = Tensor<T>(weight.shape);
  grads.bias = Tensor<T>({g.o});
  mat(grads.weight.values.data(), g.o, g.ck()).noalias() =
      dout * cmat(cols.data(), g.ck(), np).transpose();
  for (std::size_t o = 0; o < g.o; ++o) grads.bias[o] = dout.row(static_cast<Eigen::Index>(o)).sum();
  if (want_input_grad) {
    grads.input = Tensor<T>(input.shape);
    RowMat<T> dcols = cmat(weight.values.data(), g.o, g.ck()).transpose() * dout;
    const std::size_t in_stride = g.c * g.h * g.w;
    for (std::size_t n = 0; n < g.n; ++n) {
      col2im_add(dcols.data() + n * g.pixels(), g, grads.input.values.data() + n * in_stride, np);
    }
  }
  return grads;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.values) v = v > T{0} ? v : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  if (x.size() != grad_out.size()) throw ShapeError("relu_backward size mismatch");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > T{0})) g[i] = T{0};
  }
  return g;
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const auto [n, in] = matrix_dims(x.shape, "linear input");
  const auto [win, out] = matrix_dims(weight.shape, "linear weight");
  if (win != in) {
    throw ShapeError("linear weight " + shape_str(weight.shape) + " incompatible with input " +
                     shape_str(x.shape));
  }
  if (bias.size() != out) throw ShapeError("linear bias length must equal output width");
  Tensor<T> y({n, out});
  auto ym = mat(y.values.data(), n, out);
  ym.noalias() = cmat(x.values.data(), n, in) * cmat(weight.values.data(), in, out);
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
      bias.values.data(), static_cast<Eigen::Index>(out));
  return y;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight,
                               const Tensor<T>& grad_out) {
  const auto [n, in] = matrix_dims(x.shape, "linear input");
  const auto [win, out] = matrix_dims(weight.shape, "linear weight");
  if (win != in || grad_out.size() != n * out) throw ShapeError("linear_backward shape mismatch");
  LinearGrads<T> g;
  g.input = Tensor<T>(x.shape);
  g.weight = Tensor<T>(weight.shape);
  g.bias = Tensor<T>({out});
  const auto dy = cmat(grad_out.values.data(), n, out);
  mat(g.input.values.data(), n, in).noalias() =
      dy * cmat(weight.values.data(), in, out).transpose();
  mat(g.weight.values.data(), in, out).noalias() = cmat(x.values.data(), n, in).transpose() * dy;
  mat(g.bias.values.data(), 1, out) = dy.colwise().sum();
  return g;
}

template <typename T>
Tensor<T> flatten(Tensor<T> x) {
  if (x.rank() < 1) throw ShapeError("flatten needs a batch axis");
  const std::size_t n = x.dim(0);
  x.shape = {n, n == 0 ? 0 : x.size() / n};
  return x;
}

template <typename T>
Tensor<T> unflatten(Tensor<T> grad, const std::vector<std::size_t>& shape) {
  if (shape_product(shape) != grad.size()) throw ShapeError("unflatten size mismatch");
  grad.shape = shape;
  return grad;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  const auto [na, wa] = matrix_dims(a.shape, "concat lhs");
  const auto [nb, wb] = matrix_dims(b.shape, "concat rhs");
  if (na != nb) throw ShapeError("concat batch sizes differ");
  Tensor<T> out({na, wa + wb});
  for (std::size_t r = 0; r < na; ++r) {
    std::copy_n(a.values.data() + r * wa, wa, out.values.data() + r * (wa + wb));
    std::copy_n(b.values.data() + r * wb, wb, out.values.data() + r * (wa + wb) + wa);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_backward(const Tensor<T>& grad, std::size_t width_a) {
  const auto [n, w] = matrix_dims(grad.shape, "concat grad");
  if (width_a > w) throw ShapeError("concat_backward split beyond width");
  const std::size_t width_b = w - width_a;
  Tensor<T> ga({n, width_a});
  Tensor<T> gb({n, width_b});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(grad.values.data() + r * w, width_a, ga.values.data() + r * width_a);
    std::copy_n(grad.values.data() + r * w + width_a, width_b, gb.values.data() + r * width_b);
  }
  return {std::move(ga), std::move(gb)};
}

void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
}

#define QUADRL_NN_INSTANTIATE(T)                                                              \
  template struct Tensor<T>;                                                                  \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                    std::size_t, std::vector<T>*);                            \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,                 \
                                          const Tensor<T>&, std::size_t, bool,                \
                                          const std::vector<T>*);                             \
  template Tensor<T> relu_forward(const Tensor<T>&);                                          \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> linear_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template LinearGrads<T> linear_backward(const Tensor<T>&, const Tensor<T>&,                 \
                                          const Tensor<T>&);                                  \
  template Tensor<T> flatten(Tensor<T>);                                                      \
  template Tensor<T> unflatten(Tensor<T>, const std::vector<std::size_t>&);                   \
  template Tensor<T> concat(const Tensor<T>&, const Tensor<T>&);                              \
  template std::pair<Tensor<T>, Tensor<T>> concat_backward(const Tensor<T>&, std::size_t);

QUADRL_NN_INSTANTIATE(float)
QUADRL_NN_INSTANTIATE(double)

#undef QUADRL_NN_INSTANTIATE

}  // namespace quadrl::nn
