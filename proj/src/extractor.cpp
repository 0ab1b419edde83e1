#include "m2e/extractor.hpp"

#include "m2e/error.hpp"
#include "m2e/nn/optim.hpp"
#include "m2e/nn/param_file.hpp"

namespace m2e {

using namespace nn;

const std::array<std::string, kFeatureTaps>& feature_tap_names() {
  static const std::array<std::string, kFeatureTaps> names{"relu1_2", "relu2_2", "relu3_3", "relu4_3",
                                                           "relu5_3", "fc6",     "fc7"};
  return names;
}

template <typename T>
FeatureExtractor<T>::FeatureExtractor(int width, std::uint64_t seed) : width_(width) {
  if (width < 1) throw DomainError("extractor width must be positive");
  const std::array<int, 5> channels{width, 2 * width, 4 * width, 8 * width, 8 * width};
  const std::array<int, 5> depth{2, 2, 3, 3, 3};
  int in = 3;
  for (int b = 0; b < 5; ++b) {
    auto& seg = segments_[b];
    if (b > 0) seg.template emplace<MaxPool2x2<T>>("pool" + std::to_string(b));
    for (int i = 0; i < depth[b]; ++i) {
      const std::string id = "conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1);
      seg.template emplace<Conv2d<T>>(id, in, channels[b], 3, 1, 1);
      seg.template emplace<ReLU<T>>("relu" + id.substr(4));
      in = channels[b];
    }
  }
  const int fc = 64 * width;
  segments_[5].template emplace<MaxPool2x2<T>>("pool5");
  segments_[5].template emplace<AdaptiveAvgPool2d<T>>("avgpool", 7, 7);
  segments_[5].template emplace<Flatten<T>>("flatten");
  segments_[5].template emplace<Linear<T>>("fc6", in * 49, fc);
  segments_[5].template emplace<ReLU<T>>("relu6");
  segments_[6].template emplace<Linear<T>>("fc7", fc, fc);
  segments_[6].template emplace<ReLU<T>>("relu7");

  for (std::size_t i = 0; i < segments_.size(); ++i) init_he(segments_[i], mix64(seed + i));
  for (auto& seg : segments_) seg.set_requires_grad(false);
}

template <typename T>
FeatureStack<T> FeatureExtractor<T>::forward(const Tensor<T>& x) {
  if (x.c() != 3) throw DomainError("extractor expects 3 channels, got " + std::to_string(x.c()));
  Tensor<T> h(x.shape());
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const T scale = T(0.5) / T(kStd[c]);
      const T shift = (T(0.5) - T(kMean[c])) / T(kStd[c]);
      const T* src = x.channel(i, c);
      T* dst = h.channel(i, c);
      for (std::size_t p = 0; p < x.shape().plane(); ++p) dst[p] = src[p] * scale + shift;
    }
  }
  FeatureStack<T> taps;
  taps.reserve(kFeatureTaps);
  for (auto& seg : segments_) {
    h = seg.forward(h);
    taps.push_back(h);
  }
  return taps;
}

template <typename T>
Tensor<T> FeatureExtractor<T>::backward(const FeatureStack<T>& tap_grads) {
  if (tap_grads.size() != kFeatureTaps) throw std::invalid_argument("extractor backward needs 7 tap gradients");
  Tensor<T> g;
  for (int i = kFeatureTaps - 1; i >= 0; --i) {
    const Tensor<T>& tap = tap_grads[i];
    if (!tap.empty()) {
      if (g.empty()) {
        g = tap;
      } else {
        g += tap;
      }
    }
    if (g.empty()) continue;
    g = segments_[i].backward(g);
  }
  if (g.empty()) throw std::invalid_argument("extractor backward with all-zero tap gradients");
  for (int i = 0; i < g.n(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const T scale = T(0.5) / T(kStd[c]);
      T* p = g.channel(i, c);
      for (std::size_t k = 0; k < g.shape().plane(); ++k) p[k] *= scale;
    }
  }
  return g;
}

template <typename T>
std::vector<NamedParameter<T>> FeatureExtractor<T>::named_parameters() {
  std::vector<NamedParameter<T>> out;
  for (auto& seg : segments_) seg.collect_parameters("", out);
  return out;
}

template <typename T>
void FeatureExtractor<T>::load_weights(const std::filesystem::path& path) {
  const ParamFile file = read_param_file(path);
  for (auto& np : named_parameters()) {
    const std::string key = "vgg/" + np.name;
    const Tensor<float>* t = file.find(key);
    if (!t) throw InputError("extractor weight file lacks " + key);
    if (!(t->shape() == np.param->value.shape())) {
      throw InputError("extractor weight " + key + " has shape " + t->shape().str() + ", expected " +
                       np.param->value.shape().str());
    }
    np.param->value = tensor_cast<T>(*t);
  }
}

template class FeatureExtractor<float>;
template class FeatureExtractor<double>;

}  // namespace m2e
