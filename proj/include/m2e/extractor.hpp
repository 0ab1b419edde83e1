#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m2e/nn/layers.hpp"

namespace m2e {

inline constexpr int kFeatureTaps = 7;
inline constexpr int kSpatialTaps = 5;

/// relu1_2, relu2_2, relu3_3, relu4_3, relu5_3, fc6, fc7.
const std::array<std::string, kFeatureTaps>& feature_tap_names();

/// Output of the extractor: one entry per tap in fixed order. The first five
/// are (N, C, h, w) maps; fc6 and fc7 are (N, F, 1, 1) vectors.
template <typename T>
using FeatureStack = std::vector<nn::Tensor<T>>;

/// VGG16 topology with a channel multiplier: conv widths w, 2w, 4w, 8w, 8w,
/// 2x2 max pooling (ceil mode) between blocks, adaptive average pooling to
/// 7x7 and two fully connected layers of 64w. w = 64 is the standard network.
/// Parameters are frozen; backward() only propagates to the input.
template <typename T>
class FeatureExtractor {
 public:
  /// Random He-initialized weights drawn from `seed`.
  FeatureExtractor(int width, std::uint64_t seed);

  int width() const { return width_; }

  /// Takes unit_signed RGB in (N, 3, H, W), applies ImageNet normalization and
  /// returns every tap. Caches activations for backward().
  FeatureStack<T> forward(const nn::Tensor<T>& x);

  /// Gradient with respect to the input of the last forward() given one
  /// gradient per tap. An empty tensor stands for a zero gradient.
  nn::Tensor<T> backward(const FeatureStack<T>& tap_grads);

  std::vector<nn::NamedParameter<T>> named_parameters();

  /// Loads weights from a parameter file with tensors named "vgg/<layer>.weight" and "vgg/<layer>.bias".
  void load_weights(const std::filesystem::path& path);

  static constexpr std::array<float, 3> kMean{0.485f, 0.456f, 0.406f};
  static constexpr std::array<float, 3> kStd{0.229f, 0.224f, 0.225f};

 private:
  int width_;
  std::array<nn::Sequential<T>, kFeatureTaps> segments_;
};

}  // namespace m2e
