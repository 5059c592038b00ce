#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "htdn/errors.hpp"
#include "htdn/prng.hpp"

namespace htdn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

// One vertex of the dynamic computation graph. `backward` reads this node's
// gradient and accumulates into the parents that track gradients.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T{0});
    return grad;
  }
};

}  // namespace detail

// Dense row-major array that optionally records how it was computed so that
// gradients can flow back to the leaves it depends on. Copies share storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;
  using BackwardFn = std::function<void(detail::Node<T>&)>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  // Result of a differentiable operation. When no parent tracks gradients the
  // graph is not recorded and `backward` is dropped.
  static Tensor from_op(Shape shape, std::vector<T> values,
                        std::vector<Tensor> parents, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node().value.size(); }

  std::span<const T> values() const { return node().value; }
  // Direct write access, intended for initializers and optimizers on leaves.
  std::span<T> mutable_values() { return node().value; }
  T item() const;
  T operator[](std::size_t flat_index) const { return node().value[flat_index]; }

  bool requires_grad() const { return node().requires_grad; }
  bool has_grad() const { return !node().grad.empty(); }
  std::span<const T> grad() const { return node().grad; }
  std::span<T> mutable_grad() { return node().ensure_grad(); }
  void zero_grad();

  // Reverse-mode sweep from this scalar. Intermediate gradients are reset at
  // the start of every sweep; leaf gradients accumulate across sweeps.
  void backward() const;

  // Copy of the values with no graph attached.
  Tensor detach() const;

  const NodePtr& node_ptr() const { return node_; }

 private:
  detail::Node<T>& node() const;

  NodePtr node_;
};

using Tensor32 = Tensor<float>;

// While alive, operations on this thread do not record the graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

using Tensor64 = Tensor<double>;

// ---------------------------------------------------------------------------
// Differentiable operations. All validate shapes before computing.

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

// (m x k) * (k x n)
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// x: (n x in) or (in), weight: (in x out), bias: (out). Result (n x out) or (out).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
// (t x d) -> (d), the average of the rows.
template <typename T> Tensor<T> mean_rows(const Tensor<T>& a);

// Concatenation along the leading axis; trailing dimensions must agree.
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// input (C_in x H x W), kernels (C_out x C_in x k x k), optional bias (C_out).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, std::size_t stride,
                 std::size_t padding);
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);

// Gradient goes to the first maximum of each window in row-major order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, std::size_t window, std::size_t stride);

// Inverted dropout; identity when !training or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Prng& prng);

// Numerically stable binary cross-entropy on a single logit; target in {0, 1}.
template <typename T> Tensor<T> bce_with_logits(const Tensor<T>& logit, T target);

// ---------------------------------------------------------------------------
// Initialization.

// Glorot-uniform samples in [-b, b], b = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_init(Shape shape, std::size_t fan_in, std::size_t fan_out, Prng& prng,
                      bool requires_grad = true);

// Converts between precisions, dropping the graph.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& source, bool requires_grad) {
  std::vector<To> values(source.values().begin(), source.values().end());
  return Tensor<To>(source.shape(), std::move(values), requires_grad);
}

}  // namespace htdn
