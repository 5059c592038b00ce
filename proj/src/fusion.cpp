#include "htdn/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace htdn {

template <typename T>
Tensor<T> fuse(const Tensor<T>& h_l, const Tensor<T>& h_v) {
  if (h_l.rank() != 1) throw ShapeError("fuse: h_l must be a vector, got " + shape_string(h_l.shape()));
  if (h_v.rank() != 2) throw ShapeError("fuse: h_v must be slots x d_v, got " + shape_string(h_v.shape()));
  const std::size_t slots = h_v.dim(0), d_v = h_v.dim(1), d_l = h_l.dim(0);
  // A (slots*d_v) x 1 by 1 x d_l product has a single term per entry, so it
  // is the exact outer product.
  auto column = reshape(h_v, {slots * d_v, 1});
  auto row = reshape(h_l, {1, d_l});
  return reshape(matmul(column, row), {slots, d_v, d_l});
}

template <typename T>
DecisionNet<T> DecisionNet<T>::init(const ModelProfile& p, Prng& prng) {
  const std::size_t k2 = p.decision_kernel * p.decision_kernel;
  DecisionNet d;
  d.conv1_w = xavier_init<T>({p.decision_channels1, p.slots, p.decision_kernel, p.decision_kernel}, p.slots * k2,
                             p.decision_channels1 * k2, prng);
  d.conv1_b = Tensor<T>::zeros({p.decision_channels1}, true);
  d.conv2_w = xavier_init<T>({p.decision_channels2, p.decision_channels1, p.decision_kernel, p.decision_kernel},
                             p.decision_channels1 * k2, p.decision_channels2 * k2, prng);
  d.conv2_b = Tensor<T>::zeros({p.decision_channels2}, true);
  const std::size_t flat = p.decision_flat_dim();
  d.fc_w = xavier_init<T>({flat, p.decision_fc}, flat, p.decision_fc, prng);
  d.fc_b = Tensor<T>::zeros({p.decision_fc}, true);
  d.out_w = xavier_init<T>({p.decision_fc, 1}, p.decision_fc, 1, prng);
  d.out_b = Tensor<T>::zeros({1}, true);
  return d;
}

template <typename T>
Tensor<T> DecisionNet<T>::logit(const Tensor<T>& h_m, const ModelProfile& p, bool training, Prng& prng) const {
  if (h_m.shape() != Shape{p.slots, p.vision_dim, p.language_dim}) {
    throw ShapeError("decision: fusion tensor " + shape_string(h_m.shape()) + " does not match profile '" + p.name +
                     "' (" + shape_string({p.slots, p.vision_dim, p.language_dim}) + ")");
  }
  const std::size_t pad = p.decision_kernel / 2;
  auto x = maxpool2d(relu(conv2d(h_m, conv1_w, conv1_b, 1, pad)), 2, 2);
  x = dropout(x, p.dropout, training, prng);
  x = maxpool2d(relu(conv2d(x, conv2_w, conv2_b, 1, pad)), 2, 2);
  x = dropout(x, p.dropout, training, prng);
  x = dropout(relu(linear(reshape(x, {x.numel()}), fc_w, fc_b)), p.dropout, training, prng);
  return linear(x, out_w, out_b);
}

template <typename T>
ParamList<T> DecisionNet<T>::params() const {
  return {{"conv1.w", conv1_w}, {"conv1.b", conv1_b}, {"conv2.w", conv2_w}, {"conv2.b", conv2_b},
          {"fc.w", fc_w},       {"fc.b", fc_b},       {"out.w", out_w},     {"out.b", out_b}};
}

template <typename T>
T probability(const Tensor<T>& logit) {
  const T z = logit.item();
  const T p = z >= T{0} ? T{1} / (T{1} + std::exp(-z)) : std::exp(z) / (T{1} + std::exp(z));
  // Saturated logits would otherwise round to exactly 0 or 1.
  return std::clamp(p, std::numeric_limits<T>::min(), std::nextafter(T{1}, T{0}));
}

template <typename T>
HtdnModel<T> HtdnModel<T>::init(const ModelProfile& profile, Prng& prng) {
  profile.validate();
  HtdnModel m;
  m.profile = profile;
  Prng lang = prng.split(1), vis = prng.split(2), dec = prng.split(3);
  m.language = LanguageNet<T>::init(LanguageDims::of(profile), lang);
  m.vision = VisionNet<T>::init(profile, vis);
  m.decision = DecisionNet<T>::init(profile, dec);
  return m;
}

template <typename T>
Tensor<T> HtdnModel<T>::logit(const Tensor<T>& words, const std::vector<Tensor<T>>& slots, bool training,
                              Prng& prng) const {
  auto h_l = language.repr(language.lstm_forward(words), training, profile.dropout, prng);
  auto h_v = vision.repr(slots, profile, training, prng);
  return decision.logit(fuse(h_l, h_v), profile, training, prng);
}

template <typename T>
ParamList<T> HtdnModel<T>::params() const {
  ParamList<T> out;
  for (auto& p : language.params(false)) out.push_back({"language." + p.name, p.tensor});
  for (auto& p : vision.params(false)) out.push_back({"vision." + p.name, p.tensor});
  for (auto& p : decision.params()) out.push_back({"decision." + p.name, p.tensor});
  return out;
}

template Tensor<float> fuse(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> fuse(const Tensor<double>&, const Tensor<double>&);
template float probability(const Tensor<float>&);
template double probability(const Tensor<double>&);
template struct DecisionNet<float>;
template struct DecisionNet<double>;
template struct HtdnModel<float>;
template struct HtdnModel<double>;

}  // namespace htdn
