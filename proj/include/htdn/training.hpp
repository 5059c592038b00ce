#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "htdn/dataset.hpp"
#include "htdn/fusion.hpp"
#include "htdn/optim.hpp"
#include "htdn/text.hpp"

namespace htdn {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  AdamConfig adam;
  std::uint64_t seed = 1;
  // Stop once an epoch ends with training accuracy at or above this value.
  std::optional<double> stop_at_train_accuracy;
  // Keep the parameters of the epoch with the best validation score.
  bool select_best_validation = true;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // evaluation-mode mean cross-entropy
  double train_accuracy = 0.0;
  std::optional<double> val_score;  // weighted accuracy, or accuracy if one class is missing
  bool operator==(const EpochStats&) const = default;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::optional<std::size_t> best_epoch;
  bool operator==(const TrainHistory&) const = default;
};

// An ad reduced to what the networks read: embedding rows (-1 = unknown
// token), up to `slots` image pointers, and the binary label.
struct EncodedAd {
  std::vector<std::int32_t> token_rows;
  std::vector<const RgbImage*> images;
  int label = 0;
};

std::vector<EncodedAd> encode_ads(const Dataset& data, const EmbeddingTable& table, const ModelProfile& profile,
                                  const BinarizationRule& rule = {});
std::vector<int> labels_of(std::span<const EncodedAd> ads);

// t x dim word vectors; missing text is a contract error.
template <typename T>
Tensor<T> word_matrix(const EncodedAd& ad, const EmbeddingTable& table);
template <typename T>
std::vector<Tensor<T>> slot_tensors(const EncodedAd& ad, const ModelProfile& profile);

using LogitFn = std::function<Tensor<float>(std::size_t index, bool training, Prng& prng)>;

// Mini-batch Adam on binary cross-entropy. `logit(i, ...)` scores training
// example i; `val_logit` scores validation example i.
TrainHistory fit_binary(const ParamList<float>& params, std::span<const int> train_labels, const LogitFn& logit,
                        std::span<const int> val_labels, const LogitFn& val_logit, const TrainConfig& config);

// Requires both classes among the labels.
void require_both_classes(std::span<const int> labels, const char* what);

struct LanguageResult {
  LanguageNet<float> net;
  TrainHistory history;
};
LanguageResult train_language_unimodal(std::span<const EncodedAd> train, std::span<const EncodedAd> val,
                                       const EmbeddingTable& table, const ModelProfile& profile,
                                       const TrainConfig& config);

struct BackboneResult {
  Backbone<float> backbone;
  TrainHistory history;
};
// Per-image pretraining with a temporary sigmoid head that is then dropped.
BackboneResult pretrain_backbone(std::span<const ImagePair> pairs, const ModelProfile& profile,
                                 const TrainConfig& config);

struct VisionResult {
  VisionNet<float> net;
  TrainHistory history;
};
VisionResult train_vision_unimodal(std::span<const EncodedAd> train, std::span<const EncodedAd> val,
                                   const ModelProfile& profile, const TrainConfig& config,
                                   const Backbone<float>* pretrained = nullptr);

struct HtdnResult {
  HtdnModel<float> model;
  TrainHistory history;
};
HtdnResult train_htdn(std::span<const EncodedAd> train, std::span<const EncodedAd> val, const EmbeddingTable& table,
                      const ModelProfile& profile, const TrainConfig& config,
                      const Backbone<float>* pretrained = nullptr);

// Evaluation-mode scores in (0, 1).
float predict_htdn(const HtdnModel<float>& model, const EncodedAd& ad, const EmbeddingTable& table);
float predict_language(const LanguageNet<float>& net, const EncodedAd& ad, const EmbeddingTable& table);
float predict_vision(const VisionNet<float>& net, const EncodedAd& ad, const ModelProfile& profile);

inline int decide(float score) { return score >= 0.5f ? 1 : 0; }

}  // namespace htdn
