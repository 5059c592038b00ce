#include "htdn/optim.hpp"

#include <cmath>
#include <string>

namespace htdn {

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const auto& p : params_) {
    first_moment_.emplace_back(p.numel(), T{0});
    second_moment_.emplace_back(p.numel(), T{0});
  }
}

template <typename T>
void Adam<T>::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (!params_[k].has_grad()) {
      throw ContractError("adam step: parameter " + std::to_string(k) + " " +
                          shape_string(params_[k].shape()) + " has no gradient");
    }
  }
  ++step_;
  const double lr = config_.learning_rate;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto values = params_[k].mutable_values();
    auto grad = params_[k].grad();
    auto& m = first_moment_[k];
    auto& v = second_moment_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * g);
      v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * g * g);
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] = static_cast<T>(values[i] - lr * m_hat / (std::sqrt(v_hat) + config_.epsilon));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace htdn
