#pragma once

#include <cstddef>

#include "htdn/params.hpp"
#include "htdn/prng.hpp"
#include "htdn/profile.hpp"
#include "htdn/tensor.hpp"

namespace htdn {

// Single-layer LSTM with zero initial state, run over the rows of x (t x in).
// Gate blocks in w_ih (in x 4H), w_hh (H x 4H) and bias (4H) are ordered
// input, forget, candidate, output. Returns the t x H hidden states.
template <typename T>
Tensor<T> lstm(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh, const Tensor<T>& bias);

struct LanguageDims {
  std::size_t embedding_dim = 100;
  std::size_t hidden = 300;
  std::size_t repr_dim = 300;

  static LanguageDims of(const ModelProfile& p) { return {p.embedding_dim, p.lstm_hidden, p.language_dim}; }
};

// F_l: word vectors -> LSTM -> temporal mean -> FC + rectifier + dropout -> h_l.
// The single-unit head is only used when F_l is trained on its own.
template <typename T>
struct LanguageNet {
  Tensor<T> w_ih, w_hh, lstm_bias;
  Tensor<T> fc_w, fc_b;
  Tensor<T> head_w, head_b;

  static LanguageNet init(const LanguageDims& dims, Prng& prng);
  LanguageDims dims() const { return {w_ih.dim(0), w_hh.dim(0), fc_w.dim(1)}; }

  // t x embedding_dim -> t x hidden.
  Tensor<T> lstm_forward(const Tensor<T>& words) const;
  // t x hidden -> repr_dim.
  Tensor<T> repr(const Tensor<T>& u, bool training, double dropout_p, Prng& prng) const;
  // repr_dim -> single logit.
  Tensor<T> head_logit(const Tensor<T>& h_l) const;
  Tensor<T> logit(const Tensor<T>& words, bool training, double dropout_p, Prng& prng) const {
    return head_logit(repr(lstm_forward(words), training, dropout_p, prng));
  }

  ParamList<T> params(bool with_head) const;
};

}  // namespace htdn
