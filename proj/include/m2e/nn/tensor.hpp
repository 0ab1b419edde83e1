#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace m2e::nn {

/// NCHW shape. Vectors are (N, C, 1, 1).
struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

/// Dense NCHW tensor with value semantics.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(int n, int c, int h, int w, T fill = T(0)) : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }

  T* sample(int i) { return data_.data() + static_cast<std::size_t>(i) * shape_.sample(); }
  const T* sample(int i) const { return data_.data() + static_cast<std::size_t>(i) * shape_.sample(); }
  T* channel(int i, int ch) { return sample(i) + static_cast<std::size_t>(ch) * shape_.plane(); }
  const T* channel(int i, int ch) const { return sample(i) + static_cast<std::size_t>(ch) * shape_.plane(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(int i, int ch, int y, int x) { return data_[index(i, ch, y, x)]; }
  const T& at(int i, int ch, int y, int x) const { return data_[index(i, ch, y, x)]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  void reshape(Shape s) {
    if (s.size() != data_.size()) throw std::invalid_argument("reshape changes element count");
    shape_ = s;
  }

  Tensor& operator+=(const Tensor& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator*=(T s) {
    for (auto& x : data_) x *= s;
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T x) { return std::isfinite(x); });
  }

  bool operator==(const Tensor& o) const = default;

 private:
  std::size_t index(int i, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(i) * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }
  void check_same(const Tensor& o) const {
    if (!(shape_ == o.shape_)) throw std::invalid_argument("tensor shape mismatch " + shape_.str() + " vs " + o.shape_.str());
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Concatenates along channels; all inputs share N, H, W.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  Shape s = parts[0]->shape();
  int channels = 0;
  for (const auto* p : parts) {
    const Shape& q = p->shape();
    if (q.n != s.n || q.h != s.h || q.w != s.w) throw std::invalid_argument("concat_channels: spatial/batch mismatch");
    channels += q.c;
  }
  s.c = channels;
  Tensor<T> out(s);
  for (int i = 0; i < s.n; ++i) {
    T* dst = out.sample(i);
    for (const auto* p : parts) {
      const std::size_t len = p->shape().sample();
      std::copy_n(p->sample(i), len, dst);
      dst += len;
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(std::initializer_list<const Tensor<T>*> parts) {
  std::vector<const Tensor<T>*> v(parts);
  return concat_channels<T>(std::span<const Tensor<T>* const>(v.data(), v.size()));
}

/// Channels [first, first + count) of every sample.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int first, int count) {
  Tensor<T> out(x.n(), count, x.h(), x.w());
  for (int i = 0; i < x.n(); ++i) std::copy_n(x.channel(i, first), out.shape().sample(), out.sample(i));
  return out;
}

/// Stacks single-sample tensors along N.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
  if (items.empty()) throw std::invalid_argument("stack_batch: no inputs");
  Shape s = items[0].shape();
  const int per = s.n;
  s.n = per * static_cast<int>(items.size());
  Tensor<T> out(s);
  T* dst = out.data();
  for (const auto& it : items) {
    if (it.shape().c != s.c || it.shape().h != s.h || it.shape().w != s.w) {
      throw std::invalid_argument("stack_batch: shape mismatch");
    }
    dst = std::copy(it.span().begin(), it.span().end(), dst);
  }
  return out;
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& x) {
  Tensor<To> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<To>(x[i]);
  return out;
}

}  // namespace m2e::nn
