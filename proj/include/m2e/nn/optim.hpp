#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m2e/nn/layers.hpp"
#include "m2e/rng.hpp"

namespace m2e::nn {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// Adam over a fixed set of named parameters. Parameters with
/// requires_grad == false are skipped.
class Adam {
 public:
  Adam(std::vector<NamedParameter<float>> params, AdamConfig cfg);

  void step();
  void zero_grad();

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<NamedParameter<float>>& params() const { return params_; }

  // Moment buffers, exposed for checkpointing. Index-aligned with params().
  std::vector<Tensor<float>>& first_moments() { return m_; }
  std::vector<Tensor<float>>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<NamedParameter<float>> params_;
  AdamConfig cfg_;
  std::vector<Tensor<float>> m_, v_;
  std::int64_t t_ = 0;
};

/// Weights ~ N(0, stddev), biases zero. Visits parameters in collection order.
template <typename T>
void init_normal(Module<T>& module, std::uint64_t seed, double stddev);

/// Weights ~ N(0, sqrt(2 / fan_in)), biases zero.
template <typename T>
void init_he(Module<T>& module, std::uint64_t seed);

/// FNV-1a 64 over parameter names and value bytes, in collection order.
template <typename T>
std::uint64_t parameter_checksum(Module<T>& module);

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace m2e::nn
