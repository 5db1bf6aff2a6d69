#include <cmath>
#include <string>

#include "oodkit/errors.hpp"
#include "oodkit/train.hpp"

namespace oodkit {

double cyclic_lr(std::size_t step, std::size_t total_steps, double base_lr, double max_lr) {
  if (total_steps == 0 || step >= total_steps) {
    throw ContractError("cyclic_lr: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(total_steps) + ")");
  }
  const double half = static_cast<double>(total_steps) / 2.0;
  const double s = static_cast<double>(step);
  const double frac = s <= half ? s / half : (static_cast<double>(total_steps) - s) / half;
  return base_lr + (max_lr - base_lr) * frac;
}

template <typename T>
void sgd_step(const std::vector<NamedParam<T>>& params, T lr, T weight_decay) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw ContractError("sgd_step: parameter '" + p.name + "' has no gradient");
  }
  for (const auto& p : params) {
    auto w = p.tensor.mutable_data();
    auto g = p.tensor.grad();
    const T wd = p.decay ? weight_decay : T(0);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (g[i] + wd * w[i]);
  }
}

template <typename T>
Sgd<T>::Sgd(std::vector<NamedParam<T>> params, T weight_decay, T momentum)
    : params_(std::move(params)), weight_decay_(weight_decay), momentum_(momentum) {
  if (momentum_ < 0 || momentum_ >= 1) throw ConfigError("momentum must be in [0, 1)");
  if (momentum_ > 0) {
    for (const auto& p : params_) velocity_.emplace_back(p.tensor.size(), T(0));
  }
}

template <typename T>
void Sgd<T>::step(T lr) {
  if (momentum_ == 0) {
    sgd_step(params_, lr, weight_decay_);
    return;
  }
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) throw ContractError("sgd: parameter '" + p.name + "' has no gradient");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& p = params_[k];
    auto w = p.tensor.mutable_data();
    auto g = p.tensor.grad();
    auto& v = velocity_[k];
    const T wd = p.decay ? weight_decay_ : T(0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i] + wd * w[i];
      w[i] -= lr * v[i];
    }
  }
}

template void sgd_step(const std::vector<NamedParam<float>>&, float, float);
template void sgd_step(const std::vector<NamedParam<double>>&, double, double);
template class Sgd<float>;
template class Sgd<double>;

}  // namespace oodkit
