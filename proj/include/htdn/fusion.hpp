#pragma once

#include "htdn/language.hpp"
#include "htdn/params.hpp"
#include "htdn/profile.hpp"
#include "htdn/vision.hpp"

namespace htdn {

// h_m[s][i][k] = h_v[s][i] * h_l[k]; h_l has d_l entries, h_v is slots x d_v.
template <typename T>
Tensor<T> fuse(const Tensor<T>& h_l, const Tensor<T>& h_v);

// F_d. The slots act as input channels over the (d_v, d_l) plane:
// two rounds of same-padded conv + rectifier + 2x2 pool + dropout, then a
// rectified FC layer with dropout, then one output unit (a logit).
template <typename T>
struct DecisionNet {
  Tensor<T> conv1_w, conv1_b, conv2_w, conv2_b;
  Tensor<T> fc_w, fc_b, out_w, out_b;

  static DecisionNet init(const ModelProfile& profile, Prng& prng);
  Tensor<T> logit(const Tensor<T>& h_m, const ModelProfile& profile, bool training, Prng& prng) const;
  ParamList<T> params() const;
};

template <typename T>
T probability(const Tensor<T>& logit);

// Everything needed to score an ad, apart from the frozen embedding table.
template <typename T>
struct HtdnModel {
  ModelProfile profile;
  LanguageNet<T> language;
  VisionNet<T> vision;
  DecisionNet<T> decision;

  static HtdnModel init(const ModelProfile& profile, Prng& prng);
  // words: t x embedding_dim, slots: profile.slots images.
  Tensor<T> logit(const Tensor<T>& words, const std::vector<Tensor<T>>& slots, bool training, Prng& prng) const;
  // Joint parameters in a fixed order (no standalone heads).
  ParamList<T> params() const;
};

}  // namespace htdn
