#include "htdn/language.hpp"

#include <cmath>
#include <memory>

#include "htdn/linalg.hpp"

namespace htdn {

namespace {

template <typename T>
T logistic(T z) {
  return T{1} / (T{1} + std::exp(-z));
}

// Activations kept from the forward sweep for back-propagation through time.
template <typename T>
struct LstmTape {
  std::size_t t, in, h;
  std::vector<T> gates;  // t x 4H, post-activation i, f, g, o
  std::vector<T> cells;  // t x H
  std::vector<T> cell_tanh;
};

}  // namespace

template <typename T>
Tensor<T> lstm(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh, const Tensor<T>& bias) {
  if (x.rank() != 2) throw ShapeError("lstm: input must be t x features, got " + shape_string(x.shape()));
  if (w_hh.rank() != 2 || w_hh.dim(1) != 4 * w_hh.dim(0)) {
    throw ShapeError("lstm: recurrent weights must be H x 4H, got " + shape_string(w_hh.shape()));
  }
  const std::size_t t = x.dim(0), in = x.dim(1), h = w_hh.dim(0), g4 = 4 * h;
  if (w_ih.rank() != 2 || w_ih.dim(0) != in || w_ih.dim(1) != g4) {
    throw ShapeError("lstm: input weights " + shape_string(w_ih.shape()) + " do not match input " +
                     shape_string(x.shape()) + " and hidden size " + std::to_string(h));
  }
  if (bias.rank() != 1 || bias.dim(0) != g4) {
    throw ShapeError("lstm: bias must have 4H = " + std::to_string(g4) + " entries");
  }

  auto tape = std::make_shared<LstmTape<T>>();
  tape->t = t;
  tape->in = in;
  tape->h = h;
  tape->gates.assign(t * g4, T{0});
  tape->cells.assign(t * h, T{0});
  tape->cell_tanh.assign(t * h, T{0});
  std::vector<T> out(t * h, T{0});

  for (std::size_t s = 0; s < t; ++s) {
    std::copy(bias.values().begin(), bias.values().end(), tape->gates.begin() + s * g4);
  }
  linalg::gemm_nn(t, g4, in, x.values().data(), w_ih.values().data(), tape->gates.data());

  for (std::size_t s = 0; s < t; ++s) {
    T* z = tape->gates.data() + s * g4;
    if (s > 0) linalg::gemm_nn(1, g4, h, out.data() + (s - 1) * h, w_hh.values().data(), z);
    for (std::size_t j = 0; j < h; ++j) {
      const T i_gate = logistic(z[j]);
      const T f_gate = logistic(z[h + j]);
      const T cand = std::tanh(z[2 * h + j]);
      const T o_gate = logistic(z[3 * h + j]);
      z[j] = i_gate;
      z[h + j] = f_gate;
      z[2 * h + j] = cand;
      z[3 * h + j] = o_gate;
      const T prev_c = s > 0 ? tape->cells[(s - 1) * h + j] : T{0};
      const T c = f_gate * prev_c + i_gate * cand;
      tape->cells[s * h + j] = c;
      tape->cell_tanh[s * h + j] = std::tanh(c);
      out[s * h + j] = o_gate * tape->cell_tanh[s * h + j];
    }
  }

  return Tensor<T>::from_op({t, h}, std::move(out), {x, w_ih, w_hh, bias}, [tape](detail::Node<T>& self) {
    const std::size_t t = tape->t, in = tape->in, h = tape->h, g4 = 4 * h;
    const auto& hidden = self.value;
    const auto& w_hh_v = self.parents[2]->value;
    std::vector<T> dz(t * g4, T{0});
    std::vector<T> dh_next(h, T{0}), dc_next(h, T{0});
    for (std::size_t s = t; s-- > 0;) {
      const T* gate = tape->gates.data() + s * g4;
      T* d = dz.data() + s * g4;
      for (std::size_t j = 0; j < h; ++j) {
        const T i_gate = gate[j], f_gate = gate[h + j], cand = gate[2 * h + j], o_gate = gate[3 * h + j];
        const T tc = tape->cell_tanh[s * h + j];
        const T prev_c = s > 0 ? tape->cells[(s - 1) * h + j] : T{0};
        const T dh = self.grad[s * h + j] + dh_next[j];
        const T dc = dh * o_gate * (T{1} - tc * tc) + dc_next[j];
        d[j] = dc * cand * i_gate * (T{1} - i_gate);
        d[h + j] = dc * prev_c * f_gate * (T{1} - f_gate);
        d[2 * h + j] = dc * i_gate * (T{1} - cand * cand);
        d[3 * h + j] = dh * tc * o_gate * (T{1} - o_gate);
        dc_next[j] = dc * f_gate;
      }
      std::fill(dh_next.begin(), dh_next.end(), T{0});
      if (s > 0) linalg::gemm_nt(1, h, g4, d, w_hh_v.data(), dh_next.data());
    }
    auto* px = self.parents[0].get();
    auto* pih = self.parents[1].get();
    auto* phh = self.parents[2].get();
    auto* pb = self.parents[3].get();
    if (px->requires_grad) linalg::gemm_nt(t, in, g4, dz.data(), pih->value.data(), px->ensure_grad().data());
    if (pih->requires_grad) linalg::gemm_tn(in, g4, t, px->value.data(), dz.data(), pih->ensure_grad().data());
    if (phh->requires_grad && t > 1) {
      // Row s of the previous-state matrix is h_{s-1}; h_{-1} = 0 contributes nothing.
      linalg::gemm_tn(h, g4, t - 1, hidden.data(), dz.data() + g4, phh->ensure_grad().data());
    }
    if (pb->requires_grad) {
      auto& gb = pb->ensure_grad();
      for (std::size_t s = 0; s < t; ++s) {
        for (std::size_t k = 0; k < g4; ++k) gb[k] += dz[s * g4 + k];
      }
    }
  });
}

template <typename T>
LanguageNet<T> LanguageNet<T>::init(const LanguageDims& d, Prng& prng) {
  LanguageNet net;
  net.w_ih = xavier_init<T>({d.embedding_dim, 4 * d.hidden}, d.embedding_dim, 4 * d.hidden, prng);
  net.w_hh = xavier_init<T>({d.hidden, 4 * d.hidden}, d.hidden, 4 * d.hidden, prng);
  net.lstm_bias = Tensor<T>::zeros({4 * d.hidden}, true);
  net.fc_w = xavier_init<T>({d.hidden, d.repr_dim}, d.hidden, d.repr_dim, prng);
  net.fc_b = Tensor<T>::zeros({d.repr_dim}, true);
  net.head_w = xavier_init<T>({d.repr_dim, 1}, d.repr_dim, 1, prng);
  net.head_b = Tensor<T>::zeros({1}, true);
  return net;
}

template <typename T>
Tensor<T> LanguageNet<T>::lstm_forward(const Tensor<T>& words) const {
  if (words.rank() != 2 || words.dim(1) != w_ih.dim(0)) {
    throw ShapeError("language net: expected t x " + std::to_string(w_ih.dim(0)) + " word vectors, got " +
                     shape_string(words.shape()));
  }
  return lstm(words, w_ih, w_hh, lstm_bias);
}

template <typename T>
Tensor<T> LanguageNet<T>::repr(const Tensor<T>& u, bool training, double dropout_p, Prng& prng) const {
  if (!u.defined()) throw ContractError("language repr: empty LSTM output");
  return dropout(relu(linear(mean_rows(u), fc_w, fc_b)), dropout_p, training, prng);
}

template <typename T>
Tensor<T> LanguageNet<T>::head_logit(const Tensor<T>& h_l) const {
  return linear(h_l, head_w, head_b);
}

template <typename T>
ParamList<T> LanguageNet<T>::params(bool with_head) const {
  ParamList<T> out{{"lstm.w_ih", w_ih}, {"lstm.w_hh", w_hh}, {"lstm.bias", lstm_bias},
                   {"fc.w", fc_w},      {"fc.b", fc_b}};
  if (with_head) {
    out.push_back({"head.w", head_w});
    out.push_back({"head.b", head_b});
  }
  return out;
}

template Tensor<float> lstm(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> lstm(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                             const Tensor<double>&);
template struct LanguageNet<float>;
template struct LanguageNet<double>;

}  // namespace htdn
