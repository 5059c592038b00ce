#include "htdn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "htdn/linalg.hpp"

namespace htdn {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("empty tensor rejected: shape " + shape_string(shape));
  }
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(a.shape()));
  }
}

template <typename T>
using NodeT = detail::Node<T>;

// Parent i when it tracks gradients, otherwise nullptr.
template <typename T>
NodeT<T>* grad_parent(NodeT<T>& self, std::size_t i) {
  NodeT<T>* p = self.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

// `derivative` receives the input and output of the element.
template <typename T, typename F>
Tensor<T> unary_map(const Tensor<T>& a, F&& forward, T (*derivative)(T input, T output)) {
  std::vector<T> out(a.numel());
  auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return Tensor<T>::from_op(a.shape(), std::move(out), {a}, [derivative](NodeT<T>& self) {
    NodeT<T>* p = grad_parent(self, 0);
    if (!p) return;
    auto& g = p->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * derivative(p->value[i], self.value[i]);
    }
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_string(shape));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  check_shape(shape);
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                             BackwardFn backward) {
  Tensor result(std::move(shape), std::move(values), false);
  const bool tracks = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                  [](const Tensor& p) { return p.requires_grad(); });
  if (tracks) {
    result.node_->requires_grad = true;
    result.node_->parents.reserve(parents.size());
    for (auto& p : parents) result.node_->parents.push_back(p.node_);
    result.node_->backward = std::move(backward);
  }
  return result;
}

template <typename T>
detail::Node<T>& Tensor<T>::node() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("axis out of range for shape " + shape_string(shape()));
  return shape()[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar " + shape_string(shape()));
  return node().value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto& g = node().grad;
  std::fill(g.begin(), g.end(), T{0});
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got " + shape_string(shape()));
  }
  if (!requires_grad()) {
    throw ContractError("backward() on a tensor that does not track gradients");
  }
  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> visited;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T{0});
  }
  node_->ensure_grad()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>* n = *it;
    if (n->backward) n->backward(*n);
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), node().value, false);
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](NodeT<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* p = grad_parent(self, k)) {
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](NodeT<T>& self) {
    if (auto* p = grad_parent(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (auto* p = grad_parent(self, 1)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](NodeT<T>& self) {
    NodeT<T>* pa = self.parents[0].get();
    NodeT<T>* pb = self.parents[1].get();
    if (pa->requires_grad) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return Tensor<T>::from_op(a.shape(), std::move(out), {a}, [factor](NodeT<T>& self) {
    if (auto* p = grad_parent(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary_map(
      a,
      [](T x) {
        return x >= T{0} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
      },
      +[](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary_map(
      a, [](T x) { return std::tanh(x); }, +[](T, T y) { return T{1} - y * y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary_map(
      a, [](T x) { return x > T{0} ? x : T{0}; },
      +[](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " * " +
                     shape_string(b.shape()));
  }
  std::vector<T> out(m * n, T{0});
  linalg::gemm_nn(m, n, k, a.values().data(), b.values().data(), out.data());
  return Tensor<T>::from_op({m, n}, std::move(out), {a, b}, [m, n, k](NodeT<T>& self) {
    NodeT<T>* pa = self.parents[0].get();
    NodeT<T>* pb = self.parents[1].get();
    if (pa->requires_grad) {
      linalg::gemm_nt(m, k, n, self.grad.data(), pb->value.data(), pa->ensure_grad().data());
    }
    if (pb->requires_grad) {
      linalg::gemm_tn(k, n, m, pa->value.data(), self.grad.data(), pb->ensure_grad().data());
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("linear weight", weight, 2);
  require_rank("linear bias", bias, 1);
  const std::size_t in = weight.dim(0), out_dim = weight.dim(1);
  if (bias.dim(0) != out_dim) {
    throw ShapeError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                     shape_string(weight.shape()));
  }
  std::size_t n = 1;
  Shape out_shape;
  if (x.rank() == 1) {
    if (x.dim(0) != in) {
      throw ShapeError("linear: input " + shape_string(x.shape()) + " vs weight " +
                       shape_string(weight.shape()));
    }
    out_shape = {out_dim};
  } else if (x.rank() == 2) {
    if (x.dim(1) != in) {
      throw ShapeError("linear: input " + shape_string(x.shape()) + " vs weight " +
                       shape_string(weight.shape()));
    }
    n = x.dim(0);
    out_shape = {n, out_dim};
  } else {
    throw ShapeError("linear: input must be rank 1 or 2, got " + shape_string(x.shape()));
  }
  std::vector<T> out(n * out_dim);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy(bias.values().begin(), bias.values().end(), out.begin() + r * out_dim);
  }
  linalg::gemm_nn(n, out_dim, in, x.values().data(), weight.values().data(), out.data());
  return Tensor<T>::from_op(
      std::move(out_shape), std::move(out), {x, weight, bias}, [n, in, out_dim](NodeT<T>& self) {
        NodeT<T>* px = self.parents[0].get();
        NodeT<T>* pw = self.parents[1].get();
        NodeT<T>* pb = self.parents[2].get();
        if (px->requires_grad) {
          linalg::gemm_nt(n, in, out_dim, self.grad.data(), pw->value.data(),
                          px->ensure_grad().data());
        }
        if (pw->requires_grad) {
          linalg::gemm_tn(in, out_dim, n, px->value.data(), self.grad.data(),
                          pw->ensure_grad().data());
        }
        if (pb->requires_grad) {
          auto& g = pb->ensure_grad();
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < out_dim; ++j) g[j] += self.grad[r * out_dim + j];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions and structure

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total{0};
  for (T v : a.values()) total += v;
  return Tensor<T>::from_op({1}, {total}, {a}, [](NodeT<T>& self) {
    if (auto* p = grad_parent(self, 0)) {
      auto& g = p->ensure_grad();
      for (auto& v : g) v += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  require_rank("mean_rows", a, 2);
  const std::size_t t = a.dim(0), d = a.dim(1);
  std::vector<T> out(d, T{0});
  auto in = a.values();
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t j = 0; j < d; ++j) out[j] += in[r * d + j];
  }
  const T inv = T{1} / static_cast<T>(t);
  for (auto& v : out) v *= inv;
  return Tensor<T>::from_op({d}, std::move(out), {a}, [t, d, inv](NodeT<T>& self) {
    if (auto* p = grad_parent(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t r = 0; r < t; ++r) {
        for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[j] * inv;
      }
    }
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape trailing(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t leading = 0, flat = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != trailing) {
      throw ShapeError("concat: trailing dimensions differ, " + shape_string(parts[0].shape()) +
                       " vs " + shape_string(p.shape()));
    }
    offsets.push_back(flat);
    flat += p.numel();
    leading += p.dim(0);
  }
  Shape out_shape = parts[0].shape();
  out_shape[0] = leading;
  std::vector<T> out;
  out.reserve(shape_numel(out_shape));
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor<T>::from_op(std::move(out_shape), std::move(out), parts,
                            [offsets](NodeT<T>& self) {
                              for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                auto* p = grad_parent(self, k);
                                if (!p) continue;
                                auto& g = p->ensure_grad();
                                for (std::size_t i = 0; i < g.size(); ++i) {
                                  g[i] += self.grad[offsets[k] + i];
                                }
                              }
                            });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  check_shape(shape);
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                     shape_string(shape));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  return Tensor<T>::from_op(std::move(shape), std::move(out), {a}, [](NodeT<T>& self) {
    if (auto* p = grad_parent(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution and pooling

namespace {

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, k, stride, pad, h_out, w_out;
  std::size_t rows() const { return c_in * k * k; }
  std::size_t cols() const { return h_out * w_out; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& kernels, std::size_t stride,
                           std::size_t padding) {
  require_rank("conv2d input", input, 3);
  require_rank("conv2d kernels", kernels, 4);
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.c_in = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.c_out = kernels.dim(0);
  g.k = kernels.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (kernels.dim(1) != g.c_in || kernels.dim(3) != g.k) {
    throw ShapeError("conv2d: kernels " + shape_string(kernels.shape()) +
                     " do not match input " + shape_string(input.shape()));
  }
  if (g.h + 2 * padding < g.k || g.w + 2 * padding < g.k) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.k) + " larger than padded input " +
                     shape_string(input.shape()) + " with padding " + std::to_string(padding));
  }
  g.h_out = (g.h + 2 * padding - g.k) / stride + 1;
  g.w_out = (g.w + 2 * padding - g.k) / stride + 1;
  return g;
}

template <typename T>
void im2col(const ConvGeometry& g, const T* in, T* cols) {
  const std::size_t p_count = g.cols();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = cols + ((c * g.k + ki) * g.k + kj) * p_count;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) &&
                                ix < static_cast<long>(g.w);
            row[oy * g.w_out + ox] = inside ? in[(c * g.h + iy) * g.w + ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* in_grad) {
  const std::size_t p_count = g.cols();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = cols + ((c * g.k + ki) * g.k + kj) * p_count;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            in_grad[(c * g.h + iy) * g.w + ix] += row[oy * g.w_out + ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv2d_impl(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>* bias,
                      std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input, kernels, stride, padding);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.c_out)) {
    throw ShapeError("conv2d: bias " + shape_string(bias->shape()) + " does not match " +
                     std::to_string(g.c_out) + " output channels");
  }
  auto cols = std::make_shared<std::vector<T>>(g.rows() * g.cols());
  im2col(g, input.values().data(), cols->data());
  std::vector<T> out(g.c_out * g.cols(), T{0});
  if (bias) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      std::fill_n(out.begin() + co * g.cols(), g.cols(), (*bias)[co]);
    }
  }
  linalg::gemm_nn(g.c_out, g.cols(), g.rows(), kernels.values().data(), cols->data(), out.data());
  std::vector<Tensor<T>> parents{input, kernels};
  if (bias) parents.push_back(*bias);
  return Tensor<T>::from_op(
      {g.c_out, g.h_out, g.w_out}, std::move(out), std::move(parents),
      [g, cols](NodeT<T>& self) {
        NodeT<T>* pin = self.parents[0].get();
        NodeT<T>* pk = self.parents[1].get();
        if (pk->requires_grad) {
          linalg::gemm_nt(g.c_out, g.rows(), g.cols(), self.grad.data(), cols->data(),
                          pk->ensure_grad().data());
        }
        if (pin->requires_grad) {
          std::vector<T> dcols(g.rows() * g.cols(), T{0});
          linalg::gemm_tn(g.rows(), g.cols(), g.c_out, pk->value.data(), self.grad.data(),
                          dcols.data());
          col2im(g, dcols.data(), pin->ensure_grad().data());
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& gb = self.parents[2]->ensure_grad();
          for (std::size_t co = 0; co < g.c_out; ++co) {
            T acc{0};
            for (std::size_t p = 0; p < g.cols(); ++p) acc += self.grad[co * g.cols() + p];
            gb[co] += acc;
          }
        }
      });
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, std::size_t stride,
                 std::size_t padding) {
  return conv2d_impl<T>(input, kernels, nullptr, stride, padding);
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  return conv2d_impl<T>(input, kernels, &bias, stride, padding);
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, std::size_t window, std::size_t stride) {
  require_rank("maxpool2d", input, 3);
  if (window == 0 || stride == 0) throw ShapeError("maxpool2d: window and stride must be positive");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h < window || w < window) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " exceeds input " +
                     shape_string(input.shape()));
  }
  const std::size_t ho = (h - window) / stride + 1, wo = (w - window) / stride + 1;
  std::vector<T> out(c * ho * wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  auto in = input.values();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (ch * h + oy * stride) * w + ox * stride;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = (ch * h + oy * stride + dy) * w + ox * stride + dx;
            if (in[idx] > in[best]) best = idx;  // strict: first occurrence wins ties
          }
        }
        const std::size_t o = (ch * ho + oy) * wo + ox;
        out[o] = in[best];
        (*argmax)[o] = best;
      }
    }
  }
  return Tensor<T>::from_op({c, ho, wo}, std::move(out), {input}, [argmax](NodeT<T>& self) {
    if (auto* p = grad_parent(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t o = 0; o < argmax->size(); ++o) g[(*argmax)[o]] += self.grad[o];
    }
  });
}

// ---------------------------------------------------------------------------
// Regularization and losses

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Prng& prng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ContractError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = prng.uniform() < p ? T{0} : keep_scale;
    out[i] = x[i] * (*mask)[i];
  }
  return Tensor<T>::from_op(x.shape(), std::move(out), {x}, [mask](NodeT<T>& self) {
    if (auto* p = grad_parent(self, 0)) {
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
    }
  });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logit, T target) {
  if (logit.numel() != 1) throw ShapeError("bce_with_logits: expected a single logit");
  if (target != T{0} && target != T{1}) throw ContractError("bce_with_logits: target must be 0 or 1");
  const T z = logit[0];
  const T loss = std::max(z, T{0}) - z * target + std::log1p(std::exp(-std::abs(z)));
  return Tensor<T>::from_op({1}, {loss}, {logit}, [z, target](NodeT<T>& self) {
    if (auto* p = grad_parent(self, 0)) {
      const T s = z >= T{0} ? T{1} / (T{1} + std::exp(-z)) : std::exp(z) / (T{1} + std::exp(z));
      p->ensure_grad()[0] += self.grad[0] * (s - target);
    }
  });
}

template <typename T>
Tensor<T> xavier_init(Shape shape, std::size_t fan_in, std::size_t fan_out, Prng& prng,
                      bool requires_grad) {
  if (fan_in == 0 || fan_out == 0) throw ContractError("xavier_init: fans must be positive");
  check_shape(shape);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(prng.uniform(-bound, bound));
  return Tensor<T>(std::move(shape), std::move(values), requires_grad);
}

// ---------------------------------------------------------------------------

#define HTDN_INSTANTIATE(T)                                                                      \
  template class Tensor<T>;                                                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
  template Tensor<T> tanh(const Tensor<T>&);                                                     \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> mean_rows(const Tensor<T>&);                                                \
  template Tensor<T> concat(const std::vector<Tensor<T>>&);                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,    \
                            std::size_t);                                                        \
  template Tensor<T> maxpool2d(const Tensor<T>&, std::size_t, std::size_t);                      \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Prng&);                             \
  template Tensor<T> bce_with_logits(const Tensor<T>&, T);                                       \
  template Tensor<T> xavier_init(Shape, std::size_t, std::size_t, Prng&, bool);

HTDN_INSTANTIATE(float)
HTDN_INSTANTIATE(double)

#undef HTDN_INSTANTIATE

}  // namespace htdn
