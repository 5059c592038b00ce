#pragma once

// Small in-memory fixtures shared by the model tests.

#include <algorithm>
#include <string>
#include <vector>

#include "htdn/dataset.hpp"
#include "htdn/params.hpp"
#include "htdn/prng.hpp"
#include "htdn/profile.hpp"
#include "htdn/text.hpp"

namespace htdn::testing {

// Random table over `tokens`, values in [-0.5, 0.5].
inline EmbeddingTable random_table(const std::vector<std::string>& tokens, std::size_t dim, Prng& prng) {
  std::vector<float> values(tokens.size() * dim);
  for (auto& v : values) v = static_cast<float>(prng.uniform(-0.5, 0.5));
  return EmbeddingTable(tokens, dim, std::move(values));
}

// Solid image whose brightness encodes the label, with a little noise.
inline RgbImage label_image(int label, std::size_t size, Prng& prng) {
  RgbImage img;
  img.width = img.height = size;
  img.pixels.resize(size * size * 3);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const bool stripe = label ? (x / 2) % 2 == 0 : (y / 4) % 2 == 0;
        const double base = label ? 190.0 : 70.0;
        const double v = base + (stripe ? 30.0 : -30.0) + prng.uniform(-15.0, 15.0);
        img.pixels[(y * size + x) * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return img;
}

// n ads; positives carry the token "marker" and bright images when `images`
// is set. Labels alternate so both classes are always present.
inline Dataset separable_ads(std::size_t n, std::size_t image_size, bool images, Prng& prng) {
  const std::vector<std::string> fillers{"the", "call", "new", "town", "visit", "today", "sweet", "girl"};
  Dataset data;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    AdRecord ad;
    ad.id = "ad" + std::to_string(i);
    const std::size_t len = 4 + prng.below(6);
    for (std::size_t k = 0; k < len; ++k) ad.text += fillers[prng.below(fillers.size())] + " ";
    ad.text += label ? "marker" : "plain";
    ad.label7 = label ? Label7::kLikelyYes : Label7::kLikelyNo;
    if (images) {
      const std::size_t count = 1 + prng.below(3);
      for (std::size_t k = 0; k < count; ++k) {
        const std::string ref = "images/" + ad.id + "_" + std::to_string(k) + ".ppm";
        ad.images.push_back(ref);
        data.images.emplace(ref, label_image(label, image_size, prng));
      }
    }
    data.ads.push_back(std::move(ad));
  }
  return data;
}

inline std::vector<std::string> separable_vocabulary() {
  return {"the", "call", "new", "town", "visit", "today", "sweet", "girl", "marker", "plain"};
}

// Every stage present, every width tiny: finite-difference checks stay cheap.
inline ModelProfile toy_profile() {
  ModelProfile p;
  p.name = "toy";
  p.embedding_dim = 4;
  p.lstm_hidden = 3;
  p.language_dim = 4;
  p.backbone.image_size = 8;
  p.backbone.convs = {ConvSpec{2, 3, 1, 1, true}, ConvSpec{3, 3, 1, 1, true}};
  p.backbone.fc_widths = {5};
  p.vision_dim = 4;
  p.slots = 2;
  p.decision_channels1 = 2;
  p.decision_channels2 = 2;
  p.decision_kernel = 3;
  p.decision_fc = 3;
  return p;
}

// Gives every bias a random value so rectifiers sit away from their kink.
template <typename T>
void randomize_biases(ParamList<T>& params, Prng& prng) {
  for (auto& p : params) {
    if (p.name.ends_with(".b") || p.name.ends_with("bias")) {
      for (auto& v : p.tensor.mutable_values()) v = static_cast<T>(prng.uniform(-0.3, 0.3));
    }
  }
}

}  // namespace htdn::testing
