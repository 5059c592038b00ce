#include <gtest/gtest.h>

#include <filesystem>

#include "gradcheck.hpp"
#include "htdn/binary_io.hpp"
#include "htdn/training.hpp"
#include "htdn/vision.hpp"
#include "test_support.hpp"

namespace htdn {
namespace {

using testing::grad_check;
using testing::random_projection;
using testing::random_tensor;

RgbImage solid(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RgbImage img;
  img.width = w;
  img.height = h;
  for (std::size_t i = 0; i < w * h; ++i) img.pixels.insert(img.pixels.end(), {r, g, b});
  return img;
}

TEST(Ppm, RoundTripAndHeaderBytes) {
  RgbImage img = solid(2, 1, 1, 2, 3);
  img.pixels[3] = 250;
  const auto bytes = encode_ppm(img);
  const std::string header(bytes.begin(), bytes.begin() + 11);
  EXPECT_EQ(header, "P6\n2 1\n255\n");
  EXPECT_EQ(decode_ppm(bytes, "x"), img);
}

TEST(Ppm, AcceptsCommentsInHeader) {
  const std::string text = std::string("P6\n# made by hand\n1 1\n255\n") + "\x05\x06\x07";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  EXPECT_EQ(decode_ppm(bytes, "x").pixels, (std::vector<std::uint8_t>{5, 6, 7}));
}

TEST(Ppm, CorruptFilesNameTheFile) {
  const std::string truncated = "P6\n2 2\n255\nabc";
  const std::string wrong_magic = "P3\n1 1\n255\n1 2 3";
  const std::string deep = "P6\n1 1\n65535\n123456";
  for (const auto& text : {truncated, wrong_magic, deep}) {
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    try {
      decode_ppm(bytes, "broken.ppm");
      FAIL() << "accepted " << text;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find("broken.ppm"), std::string::npos);
    }
  }
}

TEST(Resize, ConstantImageStaysConstant) {
  auto out = resize_bilinear(solid(7, 5, 51, 102, 255), 4);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_FLOAT_EQ(out[i], 0.2f);
    EXPECT_FLOAT_EQ(out[16 + i], 0.4f);
    EXPECT_FLOAT_EQ(out[32 + i], 1.0f);
  }
}

TEST(Resize, SameSizeIsIdentity) {
  Prng prng(1);
  auto img = testing::label_image(1, 6, prng);
  auto out = resize_bilinear(img, 6);
  for (std::size_t y = 0; y < 6; ++y) {
    for (std::size_t x = 0; x < 6; ++x) {
      for (std::size_t c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(out[(c * 6 + y) * 6 + x], img.at(y, x, c) / 255.0f);
    }
  }
}

TEST(Resize, HandComputedDownAndUpSampling) {
  // 2x2 -> 1x1 samples the centre, the mean of the four pixels.
  RgbImage img = solid(2, 2, 0, 0, 0);
  const std::uint8_t reds[] = {0, 100, 200, 60};
  for (int i = 0; i < 4; ++i) img.pixels[i * 3] = reds[i];
  EXPECT_FLOAT_EQ(resize_bilinear(img, 1)[0], 90.0f / 255.0f);
  // 2x1 row [0, 200] -> 4 wide: centres at -0.25, 0.25, 0.75, 1.25 (clamped).
  RgbImage row = solid(2, 1, 0, 0, 0);
  row.pixels[3] = 200;
  auto out = resize_bilinear(row, 4);
  const float expected[] = {0.0f, 50.0f, 150.0f, 200.0f};
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) EXPECT_FLOAT_EQ(out[y * 4 + x], expected[x] / 255.0f);
  }
}

class VisionData : public ::testing::Test {
 protected:
  void SetUp() override {
    ad_.id = "a";
    ad_.label7 = Label7::kCertainlyYes;
    for (int k = 0; k < 7; ++k) {
      const std::string ref = "img" + std::to_string(k);
      ad_.images.push_back(ref);
      const auto v = static_cast<std::uint8_t>(10 * (k + 1));
      data_.images.emplace(ref, solid(4, 4, v, v, v));
    }
    profile_ = ModelProfile::small();
  }
  AdRecord ad_;
  Dataset data_;
  ModelProfile profile_;
};

TEST_F(VisionData, NoImagesGiveFiveZeroSlots) {
  AdRecord empty = ad_;
  empty.images.clear();
  auto p = prepare_images(empty, data_, profile_);
  ASSERT_EQ(p.slots.size(), 5u);
  for (bool m : p.mask) EXPECT_FALSE(m);
  for (const auto& s : p.slots) {
    EXPECT_EQ(s.shape(), (Shape{3, 16, 16}));
    for (float v : s.values()) EXPECT_EQ(v, 0.0f);
  }
}

TEST_F(VisionData, SevenImagesKeepFirstFiveInOrder) {
  auto p = prepare_images(ad_, data_, profile_);
  ASSERT_EQ(p.slots.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_TRUE(p.mask[k]);
    EXPECT_FLOAT_EQ(p.slots[k][0], 10.0f * (k + 1) / 255.0f);
  }
}

TEST_F(VisionData, ThreeImagesArePadded) {
  AdRecord three = ad_;
  three.images.resize(3);
  auto p = prepare_images(three, data_, profile_);
  EXPECT_EQ(p.mask, (std::vector<bool>{true, true, true, false, false}));
  for (float v : p.slots[3].values()) EXPECT_EQ(v, 0.0f);
  for (float v : p.slots[4].values()) EXPECT_EQ(v, 0.0f);
}

TEST_F(VisionData, PretrainPairsInheritAdLabels) {
  Dataset d = data_;
  AdRecord five = ad_;
  five.images.resize(5);
  AdRecord none = ad_;
  none.id = "b";
  none.images.clear();
  none.label7 = Label7::kCertainlyNo;
  AdRecord seven = ad_;
  seven.id = "c";
  seven.label7 = Label7::kUnsure;
  d.ads = {five, none, seven};
  auto pairs = pretrain_pairs(d);
  ASSERT_EQ(pairs.size(), 12u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(pairs[i].label, 1);
  for (std::size_t i = 5; i < 12; ++i) EXPECT_EQ(pairs[i].label, 0);
}

TEST(VisionNet, ReprShapeForEveryProfile) {
  NoGradGuard guard;
  for (const auto& profile : {ModelProfile::small(), ModelProfile::reduced()}) {
    Prng prng(2);
    auto net = VisionNet<float>::init(profile, prng);
    const std::size_t s = profile.backbone.image_size;
    std::vector<Tensor32> slots(profile.slots, Tensor32::full({3, s, s}, 0.5f));
    EXPECT_EQ(net.repr(slots, profile, false, prng).shape(), (Shape{profile.slots, profile.vision_dim}));
  }
}

TEST(VisionNet, FullProfileHeadShape) {
  // The full backbone is too large to run here; its output width is 4096 by
  // construction and the 200-wide head is exercised on constructed features.
  const auto profile = ModelProfile::full();
  EXPECT_EQ(profile.backbone.convs.size(), 13u);
  EXPECT_EQ(profile.backbone.fc_widths.size(), 2u);
  EXPECT_EQ(profile.backbone.conv_output_shape(), (Shape{512, 7, 7}));
  EXPECT_EQ(profile.backbone.feature_dim(), 4096u);
  Prng prng(3);
  VisionNet<float> net;
  std::size_t in = 4096;
  for (int i = 0; i < 3; ++i) {
    net.head_w.push_back(xavier_init<float>({in, 200}, in, 200, prng));
    net.head_b.push_back(Tensor32::zeros({200}, true));
    in = 200;
  }
  NoGradGuard guard;
  auto h_v = net.repr_from_features(Tensor32::full({5, 4096}, 0.01f), false, 0.5, prng);
  EXPECT_EQ(h_v.shape(), (Shape{5, 200}));
}

TEST(VisionNet, SharedWeightsAcrossSlots) {
  const auto profile = ModelProfile::small();
  Prng prng(4);
  auto net = VisionNet<float>::init(profile, prng);
  std::vector<Tensor32> slots;
  for (int k = 0; k < 5; ++k) {
    auto img = testing::label_image(k % 2, 16, prng);
    slots.emplace_back(Shape{3, 16, 16}, resize_bilinear(img, 16));
  }
  slots[3] = slots[1];
  auto h = net.repr(slots, profile, false, prng);
  const std::size_t d = profile.vision_dim;
  for (std::size_t j = 0; j < d; ++j) EXPECT_EQ(h[1 * d + j], h[3 * d + j]);

  // Permuting slots permutes rows.
  std::vector<Tensor32> rotated{slots[4], slots[0], slots[1], slots[2], slots[3]};
  auto hr = net.repr(rotated, profile, false, prng);
  for (std::size_t k = 0; k < 5; ++k) {
    for (std::size_t j = 0; j < d; ++j) EXPECT_EQ(hr[((k + 1) % 5) * d + j], h[k * d + j]);
  }
  EXPECT_THROW(net.repr(std::vector<Tensor32>(4, slots[0]), profile, false, prng), ContractError);
}

TEST(VisionNet, ZeroSlotsGiveIdenticalRows) {
  const auto profile = ModelProfile::small();
  Prng prng(5);
  auto net = VisionNet<float>::init(profile, prng);
  auto prepared = prepare_images({}, profile);
  auto h = net.repr(prepared.slots, profile, false, prng);
  for (std::size_t k = 1; k < 5; ++k) {
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(h[k * 8 + j], h[j]);
  }
}

TEST(VisionNet, ToyBackboneGradients) {
  auto profile = testing::toy_profile();
  profile.slots = 1;
  Prng prng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto net = VisionNet<double>::init(profile, prng);
    auto params = net.params(true);
    testing::randomize_biases(params, prng);
    auto image = random_tensor({3, 8, 8}, prng, 0, 1);
    std::vector<Tensor64> leaves{image};
    for (auto& p : params) leaves.push_back(p.tensor);
    auto proj = random_tensor({1, profile.vision_dim}, prng, -1, 1, false);
    Prng unused(0);
    auto r = grad_check(leaves, [&] {
      return add(random_projection(net.repr({image}, profile, false, unused), proj),
                 net.solo_logit(net.repr({image}, profile, false, unused)));
    });
    EXPECT_LT(r.max_relative_error, 1e-4) << "trial " << trial;
  }
}

class Pretraining : public ::testing::Test {
 protected:
  void SetUp() override {
    Prng prng(7);
    data_ = testing::separable_ads(24, 64, true, prng);
    pairs_ = pretrain_pairs(data_);
  }
  Dataset data_;
  std::vector<ImagePair> pairs_;
};

double pair_accuracy(const Backbone<float>& backbone, const std::vector<ImagePair>& pairs, const ModelProfile& p) {
  // The pretraining head is dropped after phase 1, so the features are judged
  // with a nearest-class-mean readout.
  NoGradGuard guard;
  std::vector<std::vector<float>> feats;
  for (const auto& pair : pairs) {
    Tensor32 img({3, 64, 64}, resize_bilinear(*pair.image, 64));
    auto f = backbone.features(img, p.backbone);
    feats.emplace_back(f.values().begin(), f.values().end());
  }
  const std::size_t d = feats[0].size();
  std::vector<double> mean[2] = {std::vector<double>(d), std::vector<double>(d)};
  int count[2] = {0, 0};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ++count[pairs[i].label];
    for (std::size_t j = 0; j < d; ++j) mean[pairs[i].label][j] += feats[i][j];
  }
  for (int c = 0; c < 2; ++c) {
    for (auto& v : mean[c]) v /= count[c];
  }
  int correct = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double dist[2] = {0, 0};
    for (int c = 0; c < 2; ++c) {
      for (std::size_t j = 0; j < d; ++j) dist[c] += (feats[i][j] - mean[c][j]) * (feats[i][j] - mean[c][j]);
    }
    correct += (dist[1] < dist[0] ? 1 : 0) == pairs[i].label;
  }
  return static_cast<double>(correct) / pairs.size();
}

TEST_F(Pretraining, SeparableImagesReachNinetyPercent) {
  const auto profile = ModelProfile::reduced();
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.stop_at_train_accuracy = 0.95;
  auto r = pretrain_backbone(pairs_, profile, cfg);
  ASSERT_FALSE(r.history.epochs.empty());
  EXPECT_GE(r.history.epochs.back().train_accuracy, 0.9);
  EXPECT_GE(pair_accuracy(r.backbone, pairs_, profile), 0.9);
}

TEST_F(Pretraining, ZeroEpochsAndDeterminism) {
  const auto profile = ModelProfile::small();
  std::vector<ImagePair> small_pairs;
  for (const auto& p : pairs_) small_pairs.push_back(p);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto untouched = pretrain_backbone(small_pairs, profile, cfg);
  Prng init = Prng(cfg.seed).split(0x56495331);
  EXPECT_EQ(snapshot(untouched.backbone.params()), snapshot(Backbone<float>::init(profile.backbone, init).params()));
  cfg.epochs = 2;
  auto a = pretrain_backbone(small_pairs, profile, cfg);
  auto b = pretrain_backbone(small_pairs, profile, cfg);
  EXPECT_EQ(snapshot(a.backbone.params()), snapshot(b.backbone.params()));
  EXPECT_NE(snapshot(a.backbone.params()), snapshot(untouched.backbone.params()));
}

TEST_F(Pretraining, RejectsSingleClassPairs) {
  std::vector<ImagePair> positives;
  for (const auto& p : pairs_) {
    if (p.label) positives.push_back(p);
  }
  EXPECT_THROW(pretrain_backbone(positives, ModelProfile::small(), TrainConfig{}), ContractError);
}

}  // namespace
}  // namespace htdn
