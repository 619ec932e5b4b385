#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "sigma/autograd/nn.hpp"

namespace sigma::training {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// Decoupled weight decay applied to every parameter:
// p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // One update with learning rate `lr` using the gradients held by `params`.
  // Parameters without a gradient are left untouched but still counted.
  void step(nn::ParamStore& params, double lr);

  const AdamWConfig& config() const noexcept { return config_; }
  std::size_t steps() const noexcept { return steps_; }
  const std::map<std::string, Tensor>& first_moment() const noexcept { return m_; }
  const std::map<std::string, Tensor>& second_moment() const noexcept { return v_; }
  // Restores state saved in a checkpoint.
  void restore(std::size_t steps, std::map<std::string, Tensor> m, std::map<std::string, Tensor> v);

 private:
  AdamWConfig config_;
  std::size_t steps_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

// base * (1 + cos(pi * step / (total - 1))) / 2 for step in [0, total): the
// first step uses `base`, the last uses 0.
double cosine_lr(double base, std::size_t step, std::size_t total);

// shadow <- decay * shadow + (1 - decay) * student for every parameter.
// Throws ShapeMismatch when names or shapes differ.
void ema_update(nn::ParamStore& shadow, const nn::ParamStore& student, double decay);

}  // namespace sigma::training
