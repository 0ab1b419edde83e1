#pragma once

#include <string>
#include <vector>

#include "m2e/extractor.hpp"
#include "m2e/image.hpp"
#include "m2e/networks.hpp"

namespace m2e {

/// A scalar loss and its gradient with respect to the prediction.
template <typename T>
struct LossGrad {
  double value = 0.0;
  nn::Tensor<T> grad;
};

// Every norm is reduced as a per-element mean.

/// mean |pred - target|
template <typename T>
LossGrad<T> l1_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& target);
/// mean (pred - target)^2
template <typename T>
LossGrad<T> l2_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& target);

struct Reconstruction {
  double l1 = 0.0;
  double l2 = 0.0;
};
/// Requires matching shapes and ranges.
Reconstruction reconstruction_loss(const ImageTensor& pred, const ImageTensor& target);

/// Binary cross-entropy on logits against an all-real or all-fake target:
/// mean softplus(-x) when `real`, mean softplus(x) otherwise.
template <typename T>
LossGrad<T> bce_logits(const nn::Tensor<T>& logits, bool real);

struct PganLoss {
  double d_loss = 0.0;  // -E[log s(D(real))] - E[log(1 - s(D(fake)))]
  double g_loss = 0.0;  // -E[log s(D(fake))]
};
PganLoss pgan_loss(const TensorF& real_logits, const TensorF& fake_logits);
/// Scores (real, real_iuv) and (fake, fake_iuv) with `disc`.
PganLoss pgan_loss(Discriminator& disc, const ImageTensor& real, const IuvMap& real_iuv, const ImageTensor& fake,
                   const IuvMap& fake_iuv);

/// Raw Gram matrix of one spatial feature map: G[c][c'] = sum over pixels of F_c F_c'.
struct GramMatrix {
  int channels = 0;
  std::vector<double> values;  // row-major channels x channels
  double at(int a, int b) const { return values[static_cast<std::size_t>(a) * channels + b]; }
};

/// Sample `n` of a (N, C, h, w) map. Throws DomainError on an empty map. Only
/// the five convolutional taps are spatial; the style loss never passes fc6/fc7.
template <typename T>
GramMatrix gram(const nn::Tensor<T>& feature, int n = 0);

/// Per-layer quantities shared by the perceptual and style losses:
///   perceptual_i = sqrt(mean over elements of (F_i(pred) - F_i(target))^2), i over all 7 taps
///   style_i      = sqrt(mean over C^2 of (G'_i(pred) - G'_i(target))^2),   i over the 5 spatial taps
/// with G' = G / (C h w) computed per sample; batch samples are averaged.
struct FeatureLoss {
  double perceptual = 0.0;
  double style = 0.0;
  std::vector<double> perceptual_layers;
  std::vector<double> style_layers;
};

/// Evaluates both losses in one extractor pass. When `with_grad`, the returned
/// gradient is d(w_perc * perceptual + w_style * style) / d pred.
template <typename T>
FeatureLoss feature_losses(FeatureExtractor<T>& extractor, const nn::Tensor<T>& pred, const nn::Tensor<T>& target,
                           double w_perc, double w_style, nn::Tensor<T>* grad);

template <typename T>
LossGrad<T> perceptual_loss(FeatureExtractor<T>& extractor, const nn::Tensor<T>& pred, const nn::Tensor<T>& target);
template <typename T>
LossGrad<T> style_loss(FeatureExtractor<T>& extractor, const nn::Tensor<T>& pred, const nn::Tensor<T>& target);

struct LossWeights {
  double gan = 1.0;
  double l1 = 10.0;
  double l2 = 0.0;
  double perc = 1.0;
  double style = 50.0;

  /// Throws DomainError unless every weight is finite and non-negative and at least one is positive.
  void validate() const;
};

struct PairedTerms {
  double gan = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double perc = 0.0;
  double style = 0.0;
};

/// Weighted sum of the paired generator objective. Throws TrainingError on a non-finite term.
double total_paired_loss(const PairedTerms& terms, const LossWeights& weights);

enum class Branch { Paired, Unpaired };

/// Names of the terms each training branch reports, in report order. The
/// unpaired branch carries only the adversarial pair.
const std::vector<std::string>& branch_terms(Branch branch);

}  // namespace m2e
