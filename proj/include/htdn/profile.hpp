#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "htdn/tensor.hpp"

namespace htdn {

struct ConvSpec {
  std::size_t channels = 8;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  bool pool_after = true;

  bool operator==(const ConvSpec&) const = default;
};

// Convolutional image backbone: conv + rectifier layers with optional 2x2
// max pooling, then fully connected rectifier layers.
struct BackboneProfile {
  std::size_t image_size = 64;
  std::vector<ConvSpec> convs;
  std::size_t pool_window = 2;
  std::vector<std::size_t> fc_widths;

  // C x H x W after the last conv/pool stage. Throws ShapeError if the stack
  // does not fit the image size.
  Shape conv_output_shape() const;
  std::size_t feature_dim() const;
  bool operator==(const BackboneProfile&) const = default;
};

// Every size the model needs. "full" mirrors the published architecture;
// smaller profiles keep the topology and shrink widths.
struct ModelProfile {
  std::string name = "reduced";
  std::size_t max_tokens = 184;
  std::size_t embedding_dim = 100;
  std::size_t lstm_hidden = 32;
  std::size_t language_dim = 32;
  BackboneProfile backbone;
  std::size_t vision_dim = 16;
  std::size_t vision_fc_layers = 3;
  std::size_t slots = 5;
  std::size_t decision_channels1 = 8;
  std::size_t decision_channels2 = 16;
  std::size_t decision_kernel = 5;
  std::size_t decision_fc = 150;
  double dropout = 0.5;

  static ModelProfile full();
  static ModelProfile reduced();
  // Tiny stack used for quick experiments on 16 x 16 images.
  static ModelProfile small();
  static ModelProfile by_name(std::string_view name);

  // Plane the decision convolutions see after both pooling stages.
  std::size_t decision_flat_dim() const;
  void validate() const;

  // Canonical "key = value" lines; equality of profiles is equality of text.
  std::string to_text() const;
  static ModelProfile from_text(std::string_view text);
  bool operator==(const ModelProfile& other) const { return to_text() == other.to_text(); }
};

}  // namespace htdn
