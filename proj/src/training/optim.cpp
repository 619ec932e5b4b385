#include "sigma/training/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sigma/core/errors.hpp"

namespace sigma::training {

void AdamW::step(nn::ParamStore& params, double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (const auto& [name, p] : params.all()) {
    if (!p.has_grad()) continue;
    Tensor& value = p.mutable_value();
    const Tensor& g = p.grad();
    auto [mi, fresh_m] = m_.try_emplace(name, value.rows(), value.cols());
    auto [vi, fresh_v] = v_.try_emplace(name, value.rows(), value.cols());
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    if (!m.same_shape(value)) throw ShapeMismatch("optimizer state for " + name + " has the wrong shape");
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      value[i] -= lr * (update + config_.weight_decay * value[i]);
    }
  }
}

void AdamW::restore(std::size_t steps, std::map<std::string, Tensor> m, std::map<std::string, Tensor> v) {
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total <= 1) return base;
  const double t = static_cast<double>(std::min(step, total - 1)) / static_cast<double>(total - 1);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void ema_update(nn::ParamStore& shadow, const nn::ParamStore& student, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw InvalidSpec("EMA decay must lie in [0, 1]");
  if (shadow.count() != student.count()) throw ShapeMismatch("EMA teacher and student differ in size");
  auto s = student.all().begin();
  for (const auto& [name, t] : shadow.all()) {
    if (s->first != name || !s->second.value().same_shape(t.value()))
      throw ShapeMismatch("EMA teacher and student differ at " + name);
    Tensor& tv = t.mutable_value();
    const Tensor& sv = s->second.value();
    for (std::size_t i = 0; i < tv.size(); ++i) tv[i] = decay * tv[i] + (1.0 - decay) * sv[i];
    ++s;
  }
}

}  // namespace sigma::training
