#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "m2e/nn/kernels.hpp"
#include "m2e/nn/tensor.hpp"

namespace m2e::nn {

template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
  int fan_in = 0;  // 0 marks a bias
  bool requires_grad = true;

  Parameter() = default;
  Parameter(Shape s, int fan) : value(s), grad(s), fan_in(fan) {}
  bool is_bias() const { return fan_in == 0; }
  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

/// Layer with explicit forward/backward. forward() caches what backward()
/// needs; backward() consumes the gradient of the most recent forward output,
/// accumulates parameter gradients (when required) and returns the input gradient.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) {
    (void)prefix;
    (void)out;
  }

  std::vector<NamedParameter<T>> named_parameters() {
    std::vector<NamedParameter<T>> out;
    collect_parameters("", out);
    return out;
  }
  void zero_grad() {
    for (auto& np : named_parameters()) np.param->zero_grad();
  }
  void set_requires_grad(bool on) {
    for (auto& np : named_parameters()) np.param->requires_grad = on;
  }
  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto& np : named_parameters()) n += np.param->value.size();
    return n;
  }
};

template <typename T>
using ModulePtr = std::unique_ptr<Module<T>>;

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  kernels::ConvGeometry geometry(const Shape& s) const { return {s.c, s.h, s.w, kernel_, stride_, pad_}; }

  int in_, out_, kernel_, stride_, pad_;
  Parameter<T> weight_;  // (out, in, k, k)
  Parameter<T> bias_;    // (1, out, 1, 1)
  Tensor<T> input_;
  std::vector<T> cols_;
};

/// Transposed convolution; weight is (in, out, k, k). Output side = (in - 1) * stride - 2 * pad + k.
template <typename T>
class ConvTranspose2d : public Module<T> {
 public:
  ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int pad);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  kernels::ConvGeometry out_geometry(const Shape& in) const;

  int in_, out_, kernel_, stride_, pad_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
  std::vector<T> cols_;
};

/// Per-sample, per-channel normalization without affine parameters.
template <typename T>
class InstanceNorm2d : public Module<T> {
 public:
  explicit InstanceNorm2d(double eps = 1e-5) : eps_(eps) {}
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  double eps_;
  Tensor<T> normalized_;
  std::vector<double> inv_std_;
};

template <typename T>
class ReLU : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> output_;
};

template <typename T>
class LeakyReLU : public Module<T> {
 public:
  explicit LeakyReLU(T slope = T(0.2)) : slope_(slope) {}
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  T slope_;
  Tensor<T> input_;
};

template <typename T>
class Tanh : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> output_;
};

template <typename T>
class Sigmoid : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> output_;
};

/// 2x2 max pooling, stride 2, ceil mode (a trailing odd row/column forms its own window).
template <typename T>
class MaxPool2x2 : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Shape in_shape_;
  std::vector<std::uint32_t> argmax_;
};

/// Averages over windows [floor(i*H/out), ceil((i+1)*H/out)) per output cell.
template <typename T>
class AdaptiveAvgPool2d : public Module<T> {
 public:
  AdaptiveAvgPool2d(int out_h, int out_w) : out_h_(out_h), out_w_(out_w) {}
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  int out_h_, out_w_;
  Shape in_shape_;
};

template <typename T>
class Flatten : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Shape in_shape_;
};

/// y = W x + b on (N, in, 1, 1) inputs; W is (out, in).
template <typename T>
class Linear : public Module<T> {
 public:
  Linear(int in_features, int out_features);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  int in_, out_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

template <typename T>
class Sequential : public Module<T> {
 public:
  Sequential() = default;
  Sequential& add(std::string name, ModulePtr<T> m) {
    layers_.emplace_back(std::move(name), std::move(m));
    return *this;
  }
  template <typename L, typename... Args>
  L& emplace(std::string name, Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.emplace_back(std::move(name), std::move(p));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override;

  std::size_t size() const { return layers_.size(); }
  Module<T>& layer(std::size_t i) { return *layers_[i].second; }
  const std::string& layer_name(std::size_t i) const { return layers_[i].first; }

 private:
  std::vector<std::pair<std::string, ModulePtr<T>>> layers_;
};

/// x + IN(conv(ReLU(IN(conv(x))))), 3x3 convolutions with unit padding.
template <typename T>
class ResidualBlock : public Module<T> {
 public:
  explicit ResidualBlock(int channels);
  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override;

 private:
  Sequential<T> body_;
};

}  // namespace m2e::nn
