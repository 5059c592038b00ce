#include <gtest/gtest.h>

#include <set>

#include "gradcheck.hpp"
#include "htdn/fusion.hpp"
#include "htdn/training.hpp"
#include "test_support.hpp"

namespace htdn {
namespace {

using testing::grad_check;
using testing::random_projection;
using testing::random_tensor;

TEST(Fuse, HandMultipliedToyExample) {
  Tensor64 h_l({2}, {1, 2});
  Tensor64 h_v({2, 1}, {3, 5});
  auto h_m = fuse(h_l, h_v);
  EXPECT_EQ(h_m.shape(), (Shape{2, 1, 2}));
  EXPECT_EQ(std::vector<double>(h_m.values().begin(), h_m.values().end()), (std::vector<double>{3, 6, 5, 10}));
}

TEST(Fuse, FullProfileShape) {
  auto h_m = fuse(Tensor32::full({300}, 1.0f), Tensor32::full({5, 200}, 2.0f));
  EXPECT_EQ(h_m.shape(), (Shape{5, 200, 300}));
  EXPECT_THROW(fuse(Tensor32::full({300}, 1.0f), Tensor32::full({5, 200, 1}, 2.0f)), ShapeError);
}

TEST(Fuse, ZeroLanguageAnnihilates) {
  Prng prng(1);
  auto h_m = fuse(Tensor64::zeros({7}), random_tensor({5, 3}, prng));
  for (double v : h_m.values()) EXPECT_EQ(v, 0.0);
}

TEST(Fuse, EveryIndexTripleIsTheProduct) {
  Prng prng(2);
  auto h_l = random_tensor({6}, prng, -1, 1, false);
  auto h_v = random_tensor({5, 4}, prng, -1, 1, false);
  auto h_m = fuse(h_l, h_v);
  std::set<std::size_t> seen;
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t k = 0; k < 6; ++k) {
        const std::size_t flat = (s * 4 + i) * 6 + k;
        EXPECT_EQ(h_m[flat], h_v[s * 4 + i] * h_l[k]);
        seen.insert(flat);
      }
    }
  }
  EXPECT_EQ(seen.size(), h_m.numel());
}

TEST(Fuse, Bilinear) {
  Prng prng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor({6}, prng, -1, 1, false);
    auto b = random_tensor({6}, prng, -1, 1, false);
    auto v = random_tensor({5, 4}, prng, -1, 1, false);
    auto w = random_tensor({5, 4}, prng, -1, 1, false);
    const double alpha = prng.uniform(-3, 3);
    auto scaled = fuse(scale(a, alpha), v);
    auto base = fuse(a, v);
    auto sum_l = fuse(add(a, b), v);
    auto sum_v = fuse(a, add(v, w));
    auto fb = fuse(b, v), fw = fuse(a, w);
    for (std::size_t i = 0; i < base.numel(); ++i) {
      EXPECT_NEAR(scaled[i], alpha * base[i], 1e-14);
      EXPECT_NEAR(sum_l[i], base[i] + fb[i], 1e-14);
      EXPECT_NEAR(sum_v[i], base[i] + fw[i], 1e-14);
    }
  }
}

TEST(Fuse, GradientsMatchFiniteDifferences) {
  Prng prng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto h_l = random_tensor({4}, prng);
    auto h_v = random_tensor({3, 2}, prng);
    auto proj = random_tensor({3, 2, 4}, prng, -1, 1, false);
    auto r = grad_check({h_l, h_v}, [&] { return random_projection(fuse(h_l, h_v), proj); });
    EXPECT_LT(r.max_relative_error, 1e-4);
  }
}

TEST(Decide, ZeroTensorAndZeroBiasesGiveOneHalf) {
  const auto profile = ModelProfile::reduced();
  Prng prng(5);
  auto d = DecisionNet<double>::init(profile, prng);
  auto h_m = Tensor64::zeros({5, profile.vision_dim, profile.language_dim});
  EXPECT_EQ(probability(d.logit(h_m, profile, false, prng)), 0.5);
}

TEST(Decide, OutputStrictlyInsideUnitInterval) {
  const auto profile = testing::toy_profile();
  Prng prng(6);
  auto d = DecisionNet<double>::init(profile, prng);
  for (double magnitude : {1.0, 1e3, 1e8}) {
    auto h_m = random_tensor({2, 4, 4}, prng, -magnitude, magnitude, false);
    const double p = probability(d.logit(h_m, profile, false, prng));
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_GT(probability(Tensor64::scalar(-1e6)), 0.0);
  EXPECT_LT(probability(Tensor64::scalar(1e6)), 1.0);
}

TEST(Decide, ProfileMismatchRejected) {
  const auto profile = testing::toy_profile();
  Prng prng(7);
  auto d = DecisionNet<double>::init(profile, prng);
  EXPECT_THROW(d.logit(Tensor64::zeros({2, 4, 5}), profile, false, prng), ShapeError);
}

TEST(Decide, GradientsMatchFiniteDifferences) {
  const auto profile = testing::toy_profile();
  Prng prng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto d = DecisionNet<double>::init(profile, prng);
    auto params = d.params();
    testing::randomize_biases(params, prng);
    auto h_m = random_tensor({2, 4, 4}, prng);
    std::vector<Tensor64> leaves{h_m};
    for (auto& p : params) leaves.push_back(p.tensor);
    auto r = grad_check(leaves, [&] { return bce_with_logits(d.logit(h_m, profile, false, prng), 0.0); });
    EXPECT_LT(r.max_relative_error, 1e-4) << "trial " << trial;
  }
}

TEST(HtdnModel, FullToyStackGradients) {
  const auto profile = testing::toy_profile();
  Prng prng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto model = HtdnModel<double>::init(profile, prng);
    auto params = model.params();
    testing::randomize_biases(params, prng);
    auto words = random_tensor({3, 4}, prng);
    std::vector<Tensor64> slots{random_tensor({3, 8, 8}, prng, 0, 1), Tensor64::zeros({3, 8, 8}, true)};
    std::vector<Tensor64> leaves{words, slots[0]};
    for (auto& p : params) leaves.push_back(p.tensor);
    Prng unused(0);
    auto r = grad_check(leaves, [&] { return bce_with_logits(model.logit(words, slots, false, unused), 1.0); });
    EXPECT_LT(r.max_relative_error, 1e-4) << "trial " << trial;
  }
}

TEST(HtdnModel, OneBackwardReachesEveryParameter) {
  const auto profile = testing::toy_profile();
  Prng prng(10);
  auto model = HtdnModel<double>::init(profile, prng);
  auto params = model.params();
  testing::randomize_biases(params, prng);
  std::vector<Tensor64> slots{random_tensor({3, 8, 8}, prng, 0, 1, false), random_tensor({3, 8, 8}, prng, 0, 1, false)};
  bce_with_logits(model.logit(random_tensor({5, 4}, prng, -1, 1, false), slots, false, prng), 1.0).backward();
  for (const auto& p : params) EXPECT_TRUE(p.tensor.has_grad()) << p.name;
}

class HtdnTraining : public ::testing::Test {
 protected:
  void SetUp() override {
    Prng prng(11);
    profile_ = ModelProfile::small();
    data_ = testing::separable_ads(24, 16, true, prng);
    table_ = testing::random_table(testing::separable_vocabulary(), 100, prng);
    ads_ = encode_ads(data_, table_, profile_);
    train_.assign(ads_.begin(), ads_.begin() + 16);
    val_.assign(ads_.begin() + 16, ads_.end());
  }
  ModelProfile profile_;
  Dataset data_;
  EmbeddingTable table_;
  std::vector<EncodedAd> ads_, train_, val_;
};

TEST_F(HtdnTraining, OverfitsSeparableAds) {
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 4;
  cfg.stop_at_train_accuracy = 1.0;
  cfg.select_best_validation = false;
  auto r = train_htdn(train_, val_, table_, profile_, cfg);
  ASSERT_FALSE(r.history.epochs.empty());
  EXPECT_GE(r.history.epochs.back().train_accuracy, 0.95);
  int correct = 0;
  for (const auto& ad : train_) correct += decide(predict_htdn(r.model, ad, table_)) == ad.label;
  EXPECT_GE(correct, 16 * 95 / 100);
}

TEST_F(HtdnTraining, ZeroLearningRateKeepsEverything) {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.adam.learning_rate = 0.0;
  auto r = train_htdn(train_, val_, table_, profile_, cfg);
  Prng init = Prng(cfg.seed).split(0x4854444e);
  auto fresh = HtdnModel<float>::init(profile_, init);
  EXPECT_EQ(snapshot(r.model.params()), snapshot(fresh.params()));
  ASSERT_EQ(r.history.epochs.size(), 3u);
  EXPECT_EQ(r.history.epochs[0].train_loss, r.history.epochs[1].train_loss);
  EXPECT_EQ(r.history.epochs[0].train_loss, r.history.epochs[2].train_loss);
}

TEST_F(HtdnTraining, DeterministicPerSeed) {
  TrainConfig cfg;
  cfg.epochs = 2;
  auto a = train_htdn(train_, val_, table_, profile_, cfg);
  auto b = train_htdn(train_, val_, table_, profile_, cfg);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(snapshot(a.model.params()), snapshot(b.model.params()));
}

TEST_F(HtdnTraining, RejectsDegenerateSplits) {
  std::vector<EncodedAd> negatives;
  for (const auto& ad : train_) {
    if (!ad.label) negatives.push_back(ad);
  }
  EXPECT_THROW(train_htdn(negatives, val_, table_, profile_, TrainConfig{}), ContractError);
  EXPECT_THROW(train_htdn(train_, {}, table_, profile_, TrainConfig{}), ContractError);
}

TEST_F(HtdnTraining, PretrainedBackboneIsCopiedBitwise) {
  TrainConfig cfg;
  cfg.epochs = 1;
  auto pre = pretrain_backbone(pretrain_pairs(data_), profile_, cfg);
  cfg.epochs = 0;
  auto r = train_htdn(train_, val_, table_, profile_, cfg, &pre.backbone);
  EXPECT_EQ(snapshot(r.model.vision.backbone.params()), snapshot(pre.backbone.params()));
}

TEST_F(HtdnTraining, PredictionIsStagedComposition) {
  Prng prng(12);
  auto model = HtdnModel<float>::init(profile_, prng);
  for (const auto& ad : ads_) {
    const float once = predict_htdn(model, ad, table_);
    EXPECT_EQ(once, predict_htdn(model, ad, table_));
    Prng unused(0);
    auto h_l = model.language.repr(model.language.lstm_forward(word_matrix<float>(ad, table_)), false, 0.5, unused);
    auto prepared = prepare_images(ad.images, profile_);
    auto h_v = model.vision.repr(prepared.slots, profile_, false, unused);
    auto z = model.decision.logit(fuse(h_l, h_v), profile_, false, unused);
    EXPECT_EQ(once, probability(z));
  }
}

TEST_F(HtdnTraining, AdWithoutImagesStillScores) {
  Prng prng(13);
  auto model = HtdnModel<float>::init(profile_, prng);
  EncodedAd ad = ads_[0];
  ad.images.clear();
  const float p = predict_htdn(model, ad, table_);
  EXPECT_GT(p, 0.0f);
  EXPECT_LT(p, 1.0f);
  ad.token_rows.clear();
  EXPECT_THROW(predict_htdn(model, ad, table_), ContractError);
}

TEST(ModelProfile, TextRoundTrip) {
  for (const auto& p : {ModelProfile::full(), ModelProfile::reduced(), ModelProfile::small()}) {
    const auto back = ModelProfile::from_text(p.to_text());
    EXPECT_EQ(back.to_text(), p.to_text());
    EXPECT_EQ(back.backbone.convs, p.backbone.convs);
    EXPECT_EQ(back.backbone.fc_widths, p.backbone.fc_widths);
    EXPECT_EQ(back.dropout, p.dropout);
  }
  EXPECT_THROW(ModelProfile::from_text("name = small\n"), ConfigError);
}

}  // namespace
}  // namespace htdn
