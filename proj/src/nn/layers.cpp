#include "m2e/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace m2e::nn {
namespace {

std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T>
void add_bias(T* out, const T* bias, int channels, std::size_t plane) {
  for (int c = 0; c < channels; ++c) {
    const T b = bias[c];
    T* p = out + static_cast<std::size_t>(c) * plane;
#pragma omp simd
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
}

template <typename T>
void accumulate_bias_grad(T* grad_bias, const T* grad_out, int channels, std::size_t plane) {
  for (int c = 0; c < channels; ++c) {
    const T* p = grad_out + static_cast<std::size_t>(c) * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    grad_bias[c] += static_cast<T>(s);
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      weight_(Shape{out_channels, in_channels, kernel, kernel}, in_channels * kernel * kernel),
      bias_(Shape{1, out_channels, 1, 1}, 0) {}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  if (x.c() != in_) {
    throw std::invalid_argument("Conv2d expects " + std::to_string(in_) + " input channels, got " + std::to_string(x.c()));
  }
  const auto g = geometry(x.shape());
  if (g.out_h() <= 0 || g.out_w() <= 0) throw std::invalid_argument("Conv2d input smaller than kernel");
  input_ = x;
  Tensor<T> y(x.n(), out_, g.out_h(), g.out_w());
  cols_.resize(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
  for (int i = 0; i < x.n(); ++i) {
    kernels::im2col(x.sample(i), g, cols_.data());
    kernels::gemm(false, false, out_, g.col_cols(), g.col_rows(), weight_.value.data(), cols_.data(), y.sample(i), false);
    add_bias(y.sample(i), bias_.value.data(), out_, y.shape().plane());
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  const auto g = geometry(input_.shape());
  Tensor<T> dx(input_.shape());
  std::vector<T> dcols(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
  for (int i = 0; i < input_.n(); ++i) {
    const T* dy = grad_out.sample(i);
    if (weight_.requires_grad) {
      kernels::im2col(input_.sample(i), g, cols_.data());
      kernels::gemm(false, true, out_, g.col_rows(), g.col_cols(), dy, cols_.data(), weight_.grad.data(), true);
    }
    if (bias_.requires_grad) accumulate_bias_grad(bias_.grad.data(), dy, out_, grad_out.shape().plane());
    kernels::gemm(true, false, g.col_rows(), g.col_cols(), out_, weight_.value.data(), dy, dcols.data(), false);
    kernels::col2im(dcols.data(), g, dx.sample(i));
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) {
  out.push_back({join(prefix, "weight"), &weight_});
  out.push_back({join(prefix, "bias"), &bias_});
}

// ------------------------------------------------------- ConvTranspose2d

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int pad)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      weight_(Shape{in_channels, out_channels, kernel, kernel}, in_channels * kernel * kernel),
      bias_(Shape{1, out_channels, 1, 1}, 0) {}

template <typename T>
kernels::ConvGeometry ConvTranspose2d<T>::out_geometry(const Shape& in) const {
  const int oh = (in.h - 1) * stride_ - 2 * pad_ + kernel_;
  const int ow = (in.w - 1) * stride_ - 2 * pad_ + kernel_;
  return {out_, oh, ow, kernel_, stride_, pad_};
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x) {
  if (x.c() != in_) {
    throw std::invalid_argument("ConvTranspose2d expects " + std::to_string(in_) + " input channels, got " +
                                std::to_string(x.c()));
  }
  const auto g = out_geometry(x.shape());
  input_ = x;
  Tensor<T> y(x.n(), out_, g.height, g.width);
  const int hw = x.h() * x.w();
  cols_.resize(static_cast<std::size_t>(g.col_rows()) * hw);
  for (int i = 0; i < x.n(); ++i) {
    kernels::gemm(true, false, g.col_rows(), hw, in_, weight_.value.data(), x.sample(i), cols_.data(), false);
    kernels::col2im(cols_.data(), g, y.sample(i));
    add_bias(y.sample(i), bias_.value.data(), out_, y.shape().plane());
  }
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& grad_out) {
  const auto g = out_geometry(input_.shape());
  const int hw = input_.h() * input_.w();
  Tensor<T> dx(input_.shape());
  for (int i = 0; i < input_.n(); ++i) {
    const T* dy = grad_out.sample(i);
    kernels::im2col(dy, g, cols_.data());
    if (weight_.requires_grad) {
      kernels::gemm(false, true, in_, g.col_rows(), hw, input_.sample(i), cols_.data(), weight_.grad.data(), true);
    }
    if (bias_.requires_grad) accumulate_bias_grad(bias_.grad.data(), dy, out_, grad_out.shape().plane());
    kernels::gemm(false, false, in_, hw, g.col_rows(), weight_.value.data(), cols_.data(), dx.sample(i), false);
  }
  return dx;
}

template <typename T>
void ConvTranspose2d<T>::collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) {
  out.push_back({join(prefix, "weight"), &weight_});
  out.push_back({join(prefix, "bias"), &bias_});
}

// -------------------------------------------------------- InstanceNorm2d

template <typename T>
Tensor<T> InstanceNorm2d<T>::forward(const Tensor<T>& x) {
  normalized_ = Tensor<T>(x.shape());
  const std::size_t plane = x.shape().plane();
  const int planes = x.n() * x.c();
  inv_std_.assign(planes, 0.0);
#pragma omp parallel for schedule(static) if (planes > 1 && x.size() > 65536)
  for (int pi = 0; pi < planes; ++pi) {
    const T* src = x.data() + static_cast<std::size_t>(pi) * plane;
    T* dst = normalized_.data() + static_cast<std::size_t>(pi) * plane;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += src[i];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = src[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[pi] = inv;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>((src[i] - mean) * inv);
  }
  return normalized_;
}

template <typename T>
Tensor<T> InstanceNorm2d<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(grad_out.shape());
  const std::size_t plane = grad_out.shape().plane();
  const int planes = grad_out.n() * grad_out.c();
  const double n = static_cast<double>(plane);
#pragma omp parallel for schedule(static) if (planes > 1 && grad_out.size() > 65536)
  for (int pi = 0; pi < planes; ++pi) {
    const T* dy = grad_out.data() + static_cast<std::size_t>(pi) * plane;
    const T* xh = normalized_.data() + static_cast<std::size_t>(pi) * plane;
    T* out = dx.data() + static_cast<std::size_t>(pi) * plane;
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      sum_dy += dy[i];
      sum_dy_xh += static_cast<double>(dy[i]) * xh[i];
    }
    const double inv = inv_std_[pi];
    for (std::size_t i = 0; i < plane; ++i) {
      out[i] = static_cast<T>(inv / n * (n * dy[i] - sum_dy - xh[i] * sum_dy_xh));
    }
  }
  return dx;
}

// ----------------------------------------------------------- activations

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
  output_ = x;
  for (auto& v : output_.span()) v = v > T(0) ? v : T(0);
  return output_;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(output_[i] > T(0))) dx[i] = T(0);
  }
  return dx;
}

template <typename T>
Tensor<T> LeakyReLU<T>::forward(const Tensor<T>& x) {
  input_ = x;
  Tensor<T> y = x;
  for (auto& v : y.span()) v = v > T(0) ? v : v * slope_;
  return y;
}

template <typename T>
Tensor<T> LeakyReLU<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(input_[i] > T(0))) dx[i] *= slope_;
  }
  return dx;
}

template <typename T>
Tensor<T> Tanh<T>::forward(const Tensor<T>& x) {
  output_ = x;
  for (auto& v : output_.span()) v = std::tanh(v);
  return output_;
}

template <typename T>
Tensor<T> Tanh<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= T(1) - output_[i] * output_[i];
  return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x) {
  output_ = x;
  for (auto& v : output_.span()) {
    v = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  return output_;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= output_[i] * (T(1) - output_[i]);
  return dx;
}

// --------------------------------------------------------------- pooling

template <typename T>
Tensor<T> MaxPool2x2<T>::forward(const Tensor<T>& x) {
  in_shape_ = x.shape();
  const int oh = (x.h() + 1) / 2, ow = (x.w() + 1) / 2;
  Tensor<T> y(x.n(), x.c(), oh, ow);
  argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.channel(i, c);
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          T best = T(0);
          std::uint32_t arg = 0;
          bool first = true;
          for (int dy = 0; dy < 2; ++dy) {
            const int yy = 2 * oy + dy;
            if (yy >= x.h()) continue;
            for (int dx = 0; dx < 2; ++dx) {
              const int xx = 2 * ox + dx;
              if (xx >= x.w()) continue;
              const auto idx = static_cast<std::uint32_t>(yy * x.w() + xx);
              if (first || src[idx] > best) {
                best = src[idx];
                arg = idx;
                first = false;
              }
            }
          }
          y[o] = best;
          argmax_[o] = arg;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2x2<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(in_shape_);
  const std::size_t plane_out = grad_out.shape().plane();
  std::size_t o = 0;
  for (int i = 0; i < in_shape_.n; ++i) {
    for (int c = 0; c < in_shape_.c; ++c) {
      T* dst = dx.channel(i, c);
      for (std::size_t k = 0; k < plane_out; ++k, ++o) dst[argmax_[o]] += grad_out[o];
    }
  }
  return dx;
}

template <typename T>
Tensor<T> AdaptiveAvgPool2d<T>::forward(const Tensor<T>& x) {
  in_shape_ = x.shape();
  Tensor<T> y(x.n(), x.c(), out_h_, out_w_);
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.channel(i, c);
      for (int oy = 0; oy < out_h_; ++oy) {
        const int y0 = oy * x.h() / out_h_, y1 = ((oy + 1) * x.h() + out_h_ - 1) / out_h_;
        for (int ox = 0; ox < out_w_; ++ox) {
          const int x0 = ox * x.w() / out_w_, x1 = ((ox + 1) * x.w() + out_w_ - 1) / out_w_;
          double s = 0.0;
          for (int yy = y0; yy < y1; ++yy) {
            for (int xx = x0; xx < x1; ++xx) s += src[yy * x.w() + xx];
          }
          y.at(i, c, oy, ox) = static_cast<T>(s / ((y1 - y0) * (x1 - x0)));
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> AdaptiveAvgPool2d<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(in_shape_);
  const int h = in_shape_.h, w = in_shape_.w;
  for (int i = 0; i < in_shape_.n; ++i) {
    for (int c = 0; c < in_shape_.c; ++c) {
      T* dst = dx.channel(i, c);
      for (int oy = 0; oy < out_h_; ++oy) {
        const int y0 = oy * h / out_h_, y1 = ((oy + 1) * h + out_h_ - 1) / out_h_;
        for (int ox = 0; ox < out_w_; ++ox) {
          const int x0 = ox * w / out_w_, x1 = ((ox + 1) * w + out_w_ - 1) / out_w_;
          const T g = grad_out.at(i, c, oy, ox) / static_cast<T>((y1 - y0) * (x1 - x0));
          for (int yy = y0; yy < y1; ++yy) {
            for (int xx = x0; xx < x1; ++xx) dst[yy * w + xx] += g;
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& x) {
  in_shape_ = x.shape();
  Tensor<T> y = x;
  y.reshape({x.n(), static_cast<int>(x.shape().sample()), 1, 1});
  return y;
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  dx.reshape(in_shape_);
  return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(int in_features, int out_features)
    : in_(in_features),
      out_(out_features),
      weight_(Shape{out_features, in_features, 1, 1}, in_features),
      bias_(Shape{1, out_features, 1, 1}, 0) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  if (static_cast<int>(x.shape().sample()) != in_) {
    throw std::invalid_argument("Linear expects " + std::to_string(in_) + " features, got " +
                                std::to_string(x.shape().sample()));
  }
  input_ = x;
  Tensor<T> y(x.n(), out_, 1, 1);
  kernels::gemm(false, true, x.n(), out_, in_, x.data(), weight_.value.data(), y.data(), false);
  for (int i = 0; i < x.n(); ++i) {
    for (int o = 0; o < out_; ++o) y.sample(i)[o] += bias_.value[o];
  }
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  const int n = input_.n();
  Tensor<T> dx(input_.shape());
  kernels::gemm(false, false, n, in_, out_, grad_out.data(), weight_.value.data(), dx.data(), false);
  if (weight_.requires_grad) {
    kernels::gemm(true, false, out_, in_, n, grad_out.data(), input_.data(), weight_.grad.data(), true);
  }
  if (bias_.requires_grad) {
    for (int i = 0; i < n; ++i) {
      for (int o = 0; o < out_; ++o) bias_.grad[o] += grad_out.sample(i)[o];
    }
  }
  return dx;
}

template <typename T>
void Linear<T>::collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) {
  out.push_back({join(prefix, "weight"), &weight_});
  out.push_back({join(prefix, "bias"), &bias_});
}

// ------------------------------------------------------------ containers

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = x;
  for (auto& [name, layer] : layers_) h = layer->forward(h);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
  return g;
}

template <typename T>
void Sequential<T>::collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) {
  for (auto& [name, layer] : layers_) layer->collect_parameters(join(prefix, name), out);
}

template <typename T>
ResidualBlock<T>::ResidualBlock(int channels) {
  body_.template emplace<Conv2d<T>>("conv1", channels, channels, 3, 1, 1);
  body_.template emplace<InstanceNorm2d<T>>("norm1");
  body_.template emplace<ReLU<T>>("relu");
  body_.template emplace<Conv2d<T>>("conv2", channels, channels, 3, 1, 1);
  body_.template emplace<InstanceNorm2d<T>>("norm2");
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x) {
  Tensor<T> y = body_.forward(x);
  y += x;
  return y;
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = body_.backward(grad_out);
  g += grad_out;
  return g;
}

template <typename T>
void ResidualBlock<T>::collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) {
  body_.collect_parameters(prefix, out);
}

#define M2E_INSTANTIATE(T)             \
  template class Conv2d<T>;            \
  template class ConvTranspose2d<T>;   \
  template class InstanceNorm2d<T>;    \
  template class ReLU<T>;              \
  template class LeakyReLU<T>;         \
  template class Tanh<T>;              \
  template class Sigmoid<T>;           \
  template class MaxPool2x2<T>;        \
  template class AdaptiveAvgPool2d<T>; \
  template class Flatten<T>;           \
  template class Linear<T>;            \
  template class Sequential<T>;        \
  template class ResidualBlock<T>;

M2E_INSTANTIATE(float)
M2E_INSTANTIATE(double)

#undef M2E_INSTANTIATE

}  // namespace m2e::nn
