#pragma once

#include <string>
#include <vector>

#include "htdn/tensor.hpp"

namespace htdn {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedTensor<T>>;

template <typename T>
std::vector<Tensor<T>> tensors_of(const ParamList<T>& params) {
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

// Values of every parameter, in order; used for snapshots and equality checks.
template <typename T>
std::vector<std::vector<T>> snapshot(const ParamList<T>& params) {
  std::vector<std::vector<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

template <typename T>
void restore(ParamList<T>& params, const std::vector<std::vector<T>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_values();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace htdn
