#pragma once

#include <vector>

#include "htdn/dataset.hpp"
#include "htdn/params.hpp"
#include "htdn/prng.hpp"
#include "htdn/profile.hpp"
#include "htdn/tensor.hpp"

namespace htdn {

// The fixed five image slots of one ad: real images first, zero images after.
struct PreparedImages {
  std::vector<Tensor<float>> slots;  // each 3 x S x S in [0, 1]
  std::vector<bool> mask;            // true where a real image sits
};

// First `profile.slots` images in record order, bilinearly resized; the rest
// of the slots are zero images.
PreparedImages prepare_images(const AdRecord& ad, const Dataset& data, const ModelProfile& profile);
PreparedImages prepare_images(const std::vector<const RgbImage*>& images, const ModelProfile& profile);

// One (image, inherited ad label) pair per stored image, uncapped.
struct ImagePair {
  const RgbImage* image;
  int label;
};
std::vector<ImagePair> pretrain_pairs(const Dataset& data, const BinarizationRule& rule = {});

// Conv stack plus its fully connected layers (the T-VGG analogue).
template <typename T>
struct Backbone {
  std::vector<Tensor<T>> conv_w, conv_b, fc_w, fc_b;

  static Backbone init(const BackboneProfile& profile, Prng& prng);
  // 3 x S x S image -> feature vector of profile.feature_dim() entries.
  Tensor<T> features(const Tensor<T>& image, const BackboneProfile& profile) const;
  ParamList<T> params() const;
};

// F_v: each slot runs through the shared backbone, then three rectified FC
// layers with dropout. Row i of the result is slot i.
template <typename T>
struct VisionNet {
  Backbone<T> backbone;
  std::vector<Tensor<T>> head_w, head_b;
  // Single sigmoid unit on the flattened h_v, for standalone use.
  Tensor<T> solo_w, solo_b;

  static VisionNet init(const ModelProfile& profile, Prng& prng);
  Tensor<T> repr(const std::vector<Tensor<T>>& slots, const ModelProfile& profile, bool training,
                 Prng& prng) const;
  // Same as repr, starting from already computed backbone features (slots x F).
  Tensor<T> repr_from_features(const Tensor<T>& features, bool training, double dropout_p, Prng& prng) const;
  Tensor<T> solo_logit(const Tensor<T>& h_v) const;

  ParamList<T> params(bool with_solo_head) const;
};

}  // namespace htdn
