#include "htdn/training.hpp"

#include <algorithm>
#include <numeric>

#include "htdn/metrics.hpp"

namespace htdn {

std::vector<EncodedAd> encode_ads(const Dataset& data, const EmbeddingTable& table, const ModelProfile& profile,
                                  const BinarizationRule& rule) {
  if (table.dim() != profile.embedding_dim) {
    throw ShapeError("embedding table has " + std::to_string(table.dim()) + "-d vectors but profile '" +
                     profile.name + "' expects " + std::to_string(profile.embedding_dim));
  }
  std::vector<EncodedAd> out;
  out.reserve(data.ads.size());
  for (const auto& ad : data.ads) {
    EncodedAd e;
    for (const auto& tok : tokenize(ad.text, profile.max_tokens).tokens) {
      auto row = table.find(tok);
      e.token_rows.push_back(row ? static_cast<std::int32_t>(*row) : -1);
    }
    for (std::size_t k = 0; k < ad.images.size() && k < profile.slots; ++k) {
      e.images.push_back(&data.image(ad.images[k]));
    }
    e.label = rule.apply(ad.label7);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<int> labels_of(std::span<const EncodedAd> ads) {
  std::vector<int> out;
  out.reserve(ads.size());
  for (const auto& ad : ads) out.push_back(ad.label);
  return out;
}

template <typename T>
Tensor<T> word_matrix(const EncodedAd& ad, const EmbeddingTable& table) {
  if (ad.token_rows.empty()) throw ContractError("ad has no text tokens");
  const std::size_t dim = table.dim();
  std::vector<T> values(ad.token_rows.size() * dim, T{0});
  for (std::size_t i = 0; i < ad.token_rows.size(); ++i) {
    if (ad.token_rows[i] < 0) continue;
    auto row = table.row(static_cast<std::size_t>(ad.token_rows[i]));
    std::copy(row.begin(), row.end(), values.begin() + i * dim);
  }
  return Tensor<T>({ad.token_rows.size(), dim}, std::move(values));
}

template <typename T>
std::vector<Tensor<T>> slot_tensors(const EncodedAd& ad, const ModelProfile& profile) {
  auto prepared = prepare_images(ad.images, profile);
  if constexpr (std::is_same_v<T, float>) {
    return prepared.slots;
  } else {
    std::vector<Tensor<T>> out;
    for (const auto& s : prepared.slots) out.push_back(cast<T>(s, false));
    return out;
  }
}

template Tensor<float> word_matrix(const EncodedAd&, const EmbeddingTable&);
template Tensor<double> word_matrix(const EncodedAd&, const EmbeddingTable&);
template std::vector<Tensor<float>> slot_tensors(const EncodedAd&, const ModelProfile&);
template std::vector<Tensor<double>> slot_tensors(const EncodedAd&, const ModelProfile&);

void require_both_classes(std::span<const int> labels, const char* what) {
  const bool pos = std::any_of(labels.begin(), labels.end(), [](int y) { return y != 0; });
  const bool neg = std::any_of(labels.begin(), labels.end(), [](int y) { return y == 0; });
  if (!pos || !neg) throw ContractError(std::string(what) + ": training data must contain both classes");
}

namespace {

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  double score = 0.0;
};

EvalResult evaluate(std::span<const int> labels, const LogitFn& logit, Prng& prng) {
  NoGradGuard no_grad;
  std::vector<int> preds(labels.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto z = logit(i, false, prng);
    loss += bce_with_logits(z, static_cast<float>(labels[i])).item();
    preds[i] = z.item() >= 0.0f ? 1 : 0;
  }
  EvalResult r;
  r.loss = loss / static_cast<double>(labels.size());
  const auto counts = confusion(preds, labels);
  r.accuracy = *accuracy(counts).value;
  const auto wacc = weighted_accuracy(counts);
  r.score = wacc.defined() ? *wacc.value : r.accuracy;
  return r;
}

}  // namespace

TrainHistory fit_binary(const ParamList<float>& params, std::span<const int> train_labels, const LogitFn& logit,
                        std::span<const int> val_labels, const LogitFn& val_logit, const TrainConfig& config) {
  if (train_labels.empty()) throw ContractError("training set is empty");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  const auto tensors = tensors_of(params);
  Adam<float> adam(tensors, config.adam);
  Prng root(config.seed);
  Prng noise = root.split(0x6e6f697365);
  Prng eval_prng = root.split(0x6576616c);  // unused by evaluation-mode passes
  std::vector<std::size_t> order(train_labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  std::optional<double> best_score;
  std::vector<std::vector<float>> best_values;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Prng shuffle = root.split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      adam.zero_grad();
      const float weight = 1.0f / static_cast<float>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        auto loss = bce_with_logits(logit(i, true, noise), static_cast<float>(train_labels[i]));
        scale(loss, weight).backward();
      }
      for (auto t : tensors) t.mutable_grad();  // parameters unreachable this batch get zero gradients
      adam.step();
    }
    EpochStats stats;
    stats.epoch = epoch;
    const auto train_eval = evaluate(train_labels, logit, eval_prng);
    stats.train_loss = train_eval.loss;
    stats.train_accuracy = train_eval.accuracy;
    if (!val_labels.empty()) {
      stats.val_score = evaluate(val_labels, val_logit, eval_prng).score;
      if (config.select_best_validation && (!best_score || *stats.val_score > *best_score)) {
        best_score = stats.val_score;
        best_values = snapshot(params);
        history.best_epoch = epoch;
      }
    }
    history.epochs.push_back(stats);
    if (config.stop_at_train_accuracy && stats.train_accuracy >= *config.stop_at_train_accuracy) break;
  }
  if (!best_values.empty()) {
    ParamList<float> writable = params;
    restore(writable, best_values);
  }
  return history;
}

LanguageResult train_language_unimodal(std::span<const EncodedAd> train, std::span<const EncodedAd> val,
                                       const EmbeddingTable& table, const ModelProfile& profile,
                                       const TrainConfig& config) {
  const auto train_labels = labels_of(train);
  require_both_classes(train_labels, "language network");
  Prng init = Prng(config.seed).split(0x4c414e47);
  LanguageResult r{LanguageNet<float>::init(LanguageDims::of(profile), init), {}};
  const auto& net = r.net;
  const double p = profile.dropout;
  LogitFn train_fn = [&](std::size_t i, bool training, Prng& prng) {
    return net.logit(word_matrix<float>(train[i], table), training, p, prng);
  };
  LogitFn val_fn = [&](std::size_t i, bool training, Prng& prng) {
    return net.logit(word_matrix<float>(val[i], table), training, p, prng);
  };
  r.history = fit_binary(net.params(true), train_labels, train_fn, labels_of(val), val_fn, config);
  return r;
}

BackboneResult pretrain_backbone(std::span<const ImagePair> pairs, const ModelProfile& profile,
                                 const TrainConfig& config) {
  std::vector<int> labels;
  for (const auto& pair : pairs) labels.push_back(pair.label);
  require_both_classes(labels, "backbone pretraining");
  Prng init = Prng(config.seed).split(0x56495331);
  BackboneResult r{Backbone<float>::init(profile.backbone, init), {}};
  const std::size_t f = profile.backbone.feature_dim();
  auto head_w = xavier_init<float>({f, 1}, f, 1, init);
  auto head_b = Tensor<float>::zeros({1}, true);
  const std::size_t s = profile.backbone.image_size;
  LogitFn fn = [&](std::size_t i, bool, Prng&) {
    Tensor<float> image({3, s, s}, resize_bilinear(*pairs[i].image, s));
    return linear(r.backbone.features(image, profile.backbone), head_w, head_b);
  };
  auto params = r.backbone.params();
  params.push_back({"pretrain_head.w", head_w});
  params.push_back({"pretrain_head.b", head_b});
  r.history = fit_binary(params, labels, fn, {}, fn, config);
  return r;
}

VisionResult train_vision_unimodal(std::span<const EncodedAd> train, std::span<const EncodedAd> val,
                                   const ModelProfile& profile, const TrainConfig& config,
                                   const Backbone<float>* pretrained) {
  const auto train_labels = labels_of(train);
  require_both_classes(train_labels, "vision network");
  Prng init = Prng(config.seed).split(0x56495332);
  VisionResult r{VisionNet<float>::init(profile, init), {}};
  if (pretrained) {
    auto dst = r.net.backbone.params();
    restore(dst, snapshot(pretrained->params()));
  }
  const auto& net = r.net;
  LogitFn train_fn = [&](std::size_t i, bool training, Prng& prng) {
    return net.solo_logit(net.repr(slot_tensors<float>(train[i], profile), profile, training, prng));
  };
  LogitFn val_fn = [&](std::size_t i, bool training, Prng& prng) {
    return net.solo_logit(net.repr(slot_tensors<float>(val[i], profile), profile, training, prng));
  };
  r.history = fit_binary(net.params(true), train_labels, train_fn, labels_of(val), val_fn, config);
  return r;
}

HtdnResult train_htdn(std::span<const EncodedAd> train, std::span<const EncodedAd> val, const EmbeddingTable& table,
                      const ModelProfile& profile, const TrainConfig& config, const Backbone<float>* pretrained) {
  if (train.empty() || val.empty()) throw ContractError("HTDN training needs non-empty training and validation splits");
  const auto train_labels = labels_of(train);
  require_both_classes(train_labels, "HTDN");
  Prng init = Prng(config.seed).split(0x4854444e);
  HtdnResult r{HtdnModel<float>::init(profile, init), {}};
  if (pretrained) {
    auto dst = r.model.vision.backbone.params();
    restore(dst, snapshot(pretrained->params()));
  }
  const auto& model = r.model;
  LogitFn train_fn = [&](std::size_t i, bool training, Prng& prng) {
    return model.logit(word_matrix<float>(train[i], table), slot_tensors<float>(train[i], profile), training, prng);
  };
  LogitFn val_fn = [&](std::size_t i, bool training, Prng& prng) {
    return model.logit(word_matrix<float>(val[i], table), slot_tensors<float>(val[i], profile), training, prng);
  };
  r.history = fit_binary(model.params(), train_labels, train_fn, labels_of(val), val_fn, config);
  return r;
}

float predict_htdn(const HtdnModel<float>& model, const EncodedAd& ad, const EmbeddingTable& table) {
  NoGradGuard no_grad;
  Prng unused(0);
  return probability(model.logit(word_matrix<float>(ad, table), slot_tensors<float>(ad, model.profile), false, unused));
}

float predict_language(const LanguageNet<float>& net, const EncodedAd& ad, const EmbeddingTable& table) {
  NoGradGuard no_grad;
  Prng unused(0);
  return probability(net.logit(word_matrix<float>(ad, table), false, 0.0, unused));
}

float predict_vision(const VisionNet<float>& net, const EncodedAd& ad, const ModelProfile& profile) {
  NoGradGuard no_grad;
  Prng unused(0);
  return probability(net.solo_logit(net.repr(slot_tensors<float>(ad, profile), profile, false, unused)));
}

}  // namespace htdn
