#include "htdn/vision.hpp"

namespace htdn {

PreparedImages prepare_images(const std::vector<const RgbImage*>& images, const ModelProfile& profile) {
  const std::size_t s = profile.backbone.image_size;
  PreparedImages out;
  for (std::size_t k = 0; k < profile.slots; ++k) {
    if (k < images.size()) {
      out.slots.emplace_back(Shape{3, s, s}, resize_bilinear(*images[k], s));
      out.mask.push_back(true);
    } else {
      out.slots.push_back(Tensor<float>::zeros({3, s, s}));
      out.mask.push_back(false);
    }
  }
  return out;
}

PreparedImages prepare_images(const AdRecord& ad, const Dataset& data, const ModelProfile& profile) {
  std::vector<const RgbImage*> images;
  for (std::size_t k = 0; k < ad.images.size() && k < profile.slots; ++k) {
    images.push_back(&data.image(ad.images[k]));
  }
  return prepare_images(images, profile);
}

std::vector<ImagePair> pretrain_pairs(const Dataset& data, const BinarizationRule& rule) {
  std::vector<ImagePair> pairs;
  for (const auto& ad : data.ads) {
    const int label = rule.apply(ad.label7);
    for (const auto& ref : ad.images) pairs.push_back({&data.image(ref), label});
  }
  return pairs;
}

template <typename T>
Backbone<T> Backbone<T>::init(const BackboneProfile& profile, Prng& prng) {
  profile.conv_output_shape();  // validates the stack
  Backbone b;
  std::size_t c_in = 3;
  for (const ConvSpec& spec : profile.convs) {
    const std::size_t k2 = spec.kernel * spec.kernel;
    b.conv_w.push_back(
        xavier_init<T>({spec.channels, c_in, spec.kernel, spec.kernel}, c_in * k2, spec.channels * k2, prng));
    b.conv_b.push_back(Tensor<T>::zeros({spec.channels}, true));
    c_in = spec.channels;
  }
  std::size_t in = shape_numel(profile.conv_output_shape());
  for (std::size_t width : profile.fc_widths) {
    b.fc_w.push_back(xavier_init<T>({in, width}, in, width, prng));
    b.fc_b.push_back(Tensor<T>::zeros({width}, true));
    in = width;
  }
  return b;
}

template <typename T>
Tensor<T> Backbone<T>::features(const Tensor<T>& image, const BackboneProfile& profile) const {
  const std::size_t s = profile.image_size;
  if (image.shape() != Shape{3, s, s}) {
    throw ShapeError("backbone: expected a 3x" + std::to_string(s) + "x" + std::to_string(s) + " image, got " +
                     shape_string(image.shape()));
  }
  Tensor<T> x = image;
  for (std::size_t i = 0; i < conv_w.size(); ++i) {
    const ConvSpec& spec = profile.convs[i];
    x = relu(conv2d(x, conv_w[i], conv_b[i], spec.stride, spec.padding));
    if (spec.pool_after) x = maxpool2d(x, profile.pool_window, profile.pool_window);
  }
  x = reshape(x, {x.numel()});
  for (std::size_t i = 0; i < fc_w.size(); ++i) x = relu(linear(x, fc_w[i], fc_b[i]));
  return x;
}

template <typename T>
ParamList<T> Backbone<T>::params() const {
  ParamList<T> out;
  for (std::size_t i = 0; i < conv_w.size(); ++i) {
    out.push_back({"conv" + std::to_string(i) + ".w", conv_w[i]});
    out.push_back({"conv" + std::to_string(i) + ".b", conv_b[i]});
  }
  for (std::size_t i = 0; i < fc_w.size(); ++i) {
    out.push_back({"fc" + std::to_string(i) + ".w", fc_w[i]});
    out.push_back({"fc" + std::to_string(i) + ".b", fc_b[i]});
  }
  return out;
}

template <typename T>
VisionNet<T> VisionNet<T>::init(const ModelProfile& profile, Prng& prng) {
  VisionNet v;
  v.backbone = Backbone<T>::init(profile.backbone, prng);
  std::size_t in = profile.backbone.feature_dim();
  for (std::size_t i = 0; i < profile.vision_fc_layers; ++i) {
    v.head_w.push_back(xavier_init<T>({in, profile.vision_dim}, in, profile.vision_dim, prng));
    v.head_b.push_back(Tensor<T>::zeros({profile.vision_dim}, true));
    in = profile.vision_dim;
  }
  const std::size_t flat = profile.slots * profile.vision_dim;
  v.solo_w = xavier_init<T>({flat, 1}, flat, 1, prng);
  v.solo_b = Tensor<T>::zeros({1}, true);
  return v;
}

template <typename T>
Tensor<T> VisionNet<T>::repr_from_features(const Tensor<T>& features, bool training, double dropout_p,
                                           Prng& prng) const {
  Tensor<T> x = features;
  for (std::size_t i = 0; i < head_w.size(); ++i) {
    x = dropout(relu(linear(x, head_w[i], head_b[i])), dropout_p, training, prng);
  }
  return x;
}

template <typename T>
Tensor<T> VisionNet<T>::repr(const std::vector<Tensor<T>>& slots, const ModelProfile& profile, bool training,
                             Prng& prng) const {
  if (slots.size() != profile.slots) {
    throw ContractError("vision repr: expected " + std::to_string(profile.slots) + " image slots, got " +
                        std::to_string(slots.size()));
  }
  std::vector<Tensor<T>> rows;
  rows.reserve(slots.size());
  for (const auto& slot : slots) rows.push_back(backbone.features(slot, profile.backbone));
  const std::size_t f = rows.front().numel();
  return repr_from_features(reshape(concat(rows), {slots.size(), f}), training, profile.dropout, prng);
}

template <typename T>
Tensor<T> VisionNet<T>::solo_logit(const Tensor<T>& h_v) const {
  return linear(reshape(h_v, {h_v.numel()}), solo_w, solo_b);
}

template <typename T>
ParamList<T> VisionNet<T>::params(bool with_solo_head) const {
  ParamList<T> out;
  for (auto& p : backbone.params()) out.push_back({"backbone." + p.name, p.tensor});
  for (std::size_t i = 0; i < head_w.size(); ++i) {
    out.push_back({"head" + std::to_string(i) + ".w", head_w[i]});
    out.push_back({"head" + std::to_string(i) + ".b", head_b[i]});
  }
  if (with_solo_head) {
    out.push_back({"solo.w", solo_w});
    out.push_back({"solo.b", solo_b});
  }
  return out;
}

template struct Backbone<float>;
template struct Backbone<double>;
template struct VisionNet<float>;
template struct VisionNet<double>;

}  // namespace htdn
