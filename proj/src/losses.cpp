#include "m2e/losses.hpp"

#include <cmath>

#include "m2e/error.hpp"
#include "m2e/nn/kernels.hpp"

namespace m2e {

using nn::Tensor;

namespace {

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw InputError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

template <typename T>
LossGrad<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same(pred, target, "l1 loss");
  LossGrad<T> out;
  out.grad = Tensor<T>(pred.shape());
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += std::abs(d);
    out.grad[i] = static_cast<T>(d > 0 ? 1.0 / n : (d < 0 ? -1.0 / n : 0.0));
  }
  out.value = sum / n;
  return out;
}

template <typename T>
LossGrad<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same(pred, target, "l2 loss");
  LossGrad<T> out;
  out.grad = Tensor<T>(pred.shape());
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += d * d;
    out.grad[i] = static_cast<T>(2.0 * d / n);
  }
  out.value = sum / n;
  return out;
}

Reconstruction reconstruction_loss(const ImageTensor& pred, const ImageTensor& target) {
  if (!pred.same_shape(target)) throw InputError("reconstruction loss: dimension mismatch");
  if (pred.range() != target.range()) throw DomainError("reconstruction loss: range mismatch");
  double s1 = 0.0, s2 = 0.0;
  const auto a = pred.values(), b = target.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s1 += std::abs(d);
    s2 += d * d;
  }
  const double n = static_cast<double>(a.size());
  return {s1 / n, s2 / n};
}

template <typename T>
LossGrad<T> bce_logits(const Tensor<T>& logits, bool real) {
  if (!logits.all_finite()) throw TrainingError("discriminator produced non-finite logits");
  LossGrad<T> out;
  out.grad = Tensor<T>(logits.shape());
  const double n = static_cast<double>(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    if (real) {
      sum += softplus(-x);
      out.grad[i] = static_cast<T>((sigmoid(x) - 1.0) / n);
    } else {
      sum += softplus(x);
      out.grad[i] = static_cast<T>(sigmoid(x) / n);
    }
  }
  out.value = sum / n;
  return out;
}

PganLoss pgan_loss(const TensorF& real_logits, const TensorF& fake_logits) {
  PganLoss out;
  out.d_loss = bce_logits(real_logits, true).value + bce_logits(fake_logits, false).value;
  out.g_loss = bce_logits(fake_logits, true).value;
  return out;
}

PganLoss pgan_loss(Discriminator& disc, const ImageTensor& real, const IuvMap& real_iuv, const ImageTensor& fake,
                   const IuvMap& fake_iuv) {
  const TensorF r = disc_forward(disc, real, real_iuv);
  const TensorF f = disc_forward(disc, fake, fake_iuv);
  return pgan_loss(r, f);
}

template <typename T>
GramMatrix gram(const Tensor<T>& feature, int n) {
  if (feature.empty() || feature.c() < 1) throw DomainError("gram of an empty feature map");
  const int c = feature.c();
  const std::size_t hw = feature.shape().plane();
  GramMatrix g{c, std::vector<double>(static_cast<std::size_t>(c) * c, 0.0)};
  for (int a = 0; a < c; ++a) {
    const T* fa = feature.channel(n, a);
    for (int b = a; b < c; ++b) {
      const T* fb = feature.channel(n, b);
      double s = 0.0;
      for (std::size_t p = 0; p < hw; ++p) s += static_cast<double>(fa[p]) * static_cast<double>(fb[p]);
      g.values[static_cast<std::size_t>(a) * c + b] = s;
      g.values[static_cast<std::size_t>(b) * c + a] = s;
    }
  }
  return g;
}

template <typename T>
FeatureLoss feature_losses(FeatureExtractor<T>& extractor, const Tensor<T>& pred, const Tensor<T>& target,
                           double w_perc, double w_style, Tensor<T>* grad) {
  require_same(pred, target, "feature loss");
  // Target first so the cached activations belong to the prediction.
  const FeatureStack<T> ft = extractor.forward(target);
  const FeatureStack<T> fp = extractor.forward(pred);
  const int batch = pred.n();
  FeatureLoss out;
  out.perceptual_layers.assign(kFeatureTaps, 0.0);
  out.style_layers.assign(kSpatialTaps, 0.0);
  FeatureStack<T> taps(kFeatureTaps);
  if (grad) {
    for (int i = 0; i < kFeatureTaps; ++i) taps[i] = Tensor<T>(fp[i].shape());
  }

  for (int i = 0; i < kFeatureTaps; ++i) {
    const std::size_t per = fp[i].shape().sample();
    for (int s = 0; s < batch; ++s) {
      const T* a = fp[i].sample(s);
      const T* b = ft[i].sample(s);
      double sum = 0.0;
      for (std::size_t k = 0; k < per; ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        sum += d * d;
      }
      const double value = std::sqrt(sum / static_cast<double>(per));
      out.perceptual_layers[i] += value / batch;
      if (grad && value > 0.0 && w_perc != 0.0) {
        const double scale = w_perc / (batch * static_cast<double>(per) * value);
        T* g = taps[i].sample(s);
        for (std::size_t k = 0; k < per; ++k) {
          g[k] += static_cast<T>(scale * (static_cast<double>(a[k]) - static_cast<double>(b[k])));
        }
      }
    }
  }

  for (int i = 0; i < kSpatialTaps; ++i) {
    const int c = fp[i].c();
    const int hw = static_cast<int>(fp[i].shape().plane());
    const double norm = static_cast<double>(c) * hw;
    std::vector<T> gp(static_cast<std::size_t>(c) * c), gt(gp.size());
    std::vector<T> e(gp.size());
    for (int s = 0; s < batch; ++s) {
      kernels::gemm(false, true, c, c, hw, fp[i].sample(s), fp[i].sample(s), gp.data(), false);
      kernels::gemm(false, true, c, c, hw, ft[i].sample(s), ft[i].sample(s), gt.data(), false);
      double sum = 0.0;
      for (std::size_t k = 0; k < gp.size(); ++k) {
        const double d = (static_cast<double>(gp[k]) - static_cast<double>(gt[k])) / norm;
        e[k] = static_cast<T>(d);
        sum += d * d;
      }
      const double cc = static_cast<double>(c) * c;
      const double value = std::sqrt(sum / cc);
      out.style_layers[i] += value / batch;
      if (grad && value > 0.0 && w_style != 0.0) {
        // dL/dF = 2 (dL/dG') F / (C h w), dL/dG' = E / (C^2 L)
        const double scale = w_style * 2.0 / (batch * cc * value * norm);
        for (auto& x : e) x = static_cast<T>(x * scale);
        kernels::gemm(false, false, c, hw, c, e.data(), fp[i].sample(s), taps[i].sample(s), true);
      }
    }
  }

  for (double v : out.perceptual_layers) out.perceptual += v;
  for (double v : out.style_layers) out.style += v;
  if (grad) *grad = extractor.backward(taps);
  return out;
}

template <typename T>
LossGrad<T> perceptual_loss(FeatureExtractor<T>& extractor, const Tensor<T>& pred, const Tensor<T>& target) {
  LossGrad<T> out;
  out.value = feature_losses(extractor, pred, target, 1.0, 0.0, &out.grad).perceptual;
  return out;
}

template <typename T>
LossGrad<T> style_loss(FeatureExtractor<T>& extractor, const Tensor<T>& pred, const Tensor<T>& target) {
  LossGrad<T> out;
  out.value = feature_losses(extractor, pred, target, 0.0, 1.0, &out.grad).style;
  return out;
}

void LossWeights::validate() const {
  bool positive = false;
  for (double w : {gan, l1, l2, perc, style}) {
    if (!std::isfinite(w) || w < 0.0) throw DomainError("loss weights must be finite and non-negative");
    positive = positive || w > 0.0;
  }
  if (!positive) throw DomainError("at least one loss weight must be positive");
}

double total_paired_loss(const PairedTerms& t, const LossWeights& w) {
  const std::pair<const char*, double> named[] = {
      {"g_gan", t.gan}, {"l1", t.l1}, {"l2", t.l2}, {"perc", t.perc}, {"style", t.style}};
  for (const auto& [name, v] : named) {
    if (!std::isfinite(v)) throw TrainingError(std::string("non-finite loss term ") + name);
  }
  return w.gan * t.gan + w.l1 * t.l1 + w.l2 * t.l2 + w.perc * t.perc + w.style * t.style;
}

const std::vector<std::string>& branch_terms(Branch branch) {
  static const std::vector<std::string> paired{"d_loss", "g_gan", "l1", "l2", "perc", "style"};
  static const std::vector<std::string> unpaired{"d_loss", "g_gan"};
  return branch == Branch::Paired ? paired : unpaired;
}

#define M2E_LOSSES(T)                                                                                       \
  template LossGrad<T> l1_loss<T>(const Tensor<T>&, const Tensor<T>&);                                      \
  template LossGrad<T> l2_loss<T>(const Tensor<T>&, const Tensor<T>&);                                      \
  template LossGrad<T> bce_logits<T>(const Tensor<T>&, bool);                                               \
  template GramMatrix gram<T>(const Tensor<T>&, int);                                                       \
  template FeatureLoss feature_losses<T>(FeatureExtractor<T>&, const Tensor<T>&, const Tensor<T>&, double, \
                                         double, Tensor<T>*);                                               \
  template LossGrad<T> perceptual_loss<T>(FeatureExtractor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template LossGrad<T> style_loss<T>(FeatureExtractor<T>&, const Tensor<T>&, const Tensor<T>&);

M2E_LOSSES(float)
M2E_LOSSES(double)

}  // namespace m2e
