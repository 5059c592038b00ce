#pragma once

#include <cstdint>
#include <vector>

#include "htdn/tensor.hpp"

namespace htdn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Holds references (shared storage) to the
// parameters it updates; moment buffers mirror their shapes.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig config = {});

  // Applies one update in place. Every parameter must carry a gradient.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> first_moment_;
  std::vector<std::vector<T>> second_moment_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
};

}  // namespace htdn
