#include "m2e/nn/optim.hpp"

#include <cmath>

namespace m2e::nn {

Adam::Adam(std::vector<NamedParameter<float>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& np : params_) {
    m_.emplace_back(np.param->value.shape());
    v_.emplace_back(np.param->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
  const float step = static_cast<float>(cfg_.learning_rate / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(cfg_.eps);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter<float>& p = *params_[k].param;
    if (!p.requires_grad) continue;
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    const std::size_t n = p.value.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& np : params_) np.param->zero_grad();
}

template <typename T>
void init_normal(Module<T>& module, std::uint64_t seed, double stddev) {
  Rng rng(seed);
  for (auto& np : module.named_parameters()) {
    auto& value = np.param->value;
    if (np.param->is_bias()) {
      value.fill(T(0));
      continue;
    }
    for (auto& x : value.span()) x = static_cast<T>(rng.normal(0.0, stddev));
  }
}

template <typename T>
void init_he(Module<T>& module, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& np : module.named_parameters()) {
    auto& value = np.param->value;
    if (np.param->is_bias()) {
      value.fill(T(0));
      continue;
    }
    const double stddev = std::sqrt(2.0 / np.param->fan_in);
    for (auto& x : value.span()) x = static_cast<T>(rng.normal(0.0, stddev));
  }
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
std::uint64_t parameter_checksum(Module<T>& module) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto& np : module.named_parameters()) {
    h = fnv1a(np.name.data(), np.name.size(), h);
    h = fnv1a(np.param->value.data(), np.param->value.size() * sizeof(T), h);
  }
  return h;
}

template void init_normal<float>(Module<float>&, std::uint64_t, double);
template void init_normal<double>(Module<double>&, std::uint64_t, double);
template void init_he<float>(Module<float>&, std::uint64_t);
template void init_he<double>(Module<double>&, std::uint64_t);
template std::uint64_t parameter_checksum<float>(Module<float>&);
template std::uint64_t parameter_checksum<double>(Module<double>&);

}  // namespace m2e::nn
