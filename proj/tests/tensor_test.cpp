#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "htdn/optim.hpp"
#include "htdn/tensor.hpp"
#include "htdn/tensor_io.hpp"

namespace htdn {
namespace {

using testing::grad_check;
using testing::random_projection;
using testing::random_tensor;

Tensor64 t64(Shape shape, std::vector<double> values, bool grad = false) {
  return Tensor64(std::move(shape), std::move(values), grad);
}

std::vector<double> to_vec(const Tensor64& t) { return {t.values().begin(), t.values().end()}; }

TEST(TensorOps, MatmulIdentityReturnsOperand) {
  Prng prng(1);
  auto m = random_tensor({3, 3}, prng, -5, 5, false);
  auto eye = t64({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(to_vec(matmul(eye, m)), to_vec(m));
}

TEST(TensorOps, MatmulHandExample) {
  auto a = t64({2, 2}, {1, 2, 3, 4});
  auto b = t64({2, 1}, {5, 6});
  auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(to_vec(c), (std::vector<double>{17, 39}));
}

TEST(TensorOps, SigmoidOfZeroIsHalf) {
  auto s = sigmoid(Tensor64::zeros({2, 3}));
  for (double v : s.values()) EXPECT_EQ(v, 0.5);
}

TEST(TensorOps, ShapeMismatchIsReported) {
  auto a = Tensor64::zeros({2, 3});
  auto b = Tensor64::zeros({2, 2});
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(matmul(a, b), ShapeError);
  EXPECT_THROW(mul(a, b), ShapeError);
  try {
    matmul(a, b);
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
}

TEST(TensorOps, EmptyTensorRejected) {
  EXPECT_THROW(Tensor64::zeros({0, 3}), ShapeError);
  EXPECT_THROW(Tensor64(Shape{2}, {1.0}), ShapeError);
}

TEST(TensorOps, ConcatAndReshape) {
  auto a = t64({1, 2}, {1, 2});
  auto b = t64({2, 2}, {3, 4, 5, 6});
  auto c = concat<double>({a, b});
  EXPECT_EQ(c.shape(), (Shape{3, 2}));
  EXPECT_EQ(to_vec(c), (std::vector<double>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(reshape(c, {6}).shape(), (Shape{6}));
  EXPECT_THROW(reshape(c, {4}), ShapeError);
  EXPECT_THROW(concat<double>({a, Tensor64::zeros({1, 3})}), ShapeError);
}

TEST(TensorOps, MeanRowsAndReductions) {
  auto a = t64({2, 3}, {1, 2, 3, 5, 6, 7});
  EXPECT_EQ(to_vec(mean_rows(a)), (std::vector<double>{3, 4, 5}));
  EXPECT_EQ(sum(a).item(), 24.0);
  EXPECT_EQ(mean(a).item(), 4.0);
}

TEST(Conv2d, OnesKernelSumsWindow) {
  auto in = Tensor64::full({1, 3, 3}, 1.0);
  auto k = Tensor64::full({1, 1, 3, 3}, 1.0);
  auto out = conv2d(in, k, 1, 0);
  EXPECT_EQ(out.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(out.item(), 9.0);
}

TEST(Conv2d, UnitOneByOneKernelIsIdentity) {
  Prng prng(3);
  auto in = random_tensor({1, 4, 5}, prng, -2, 2, false);
  auto k = Tensor64::full({1, 1, 1, 1}, 1.0);
  EXPECT_EQ(to_vec(conv2d(in, k, 1, 0)), to_vec(in));
}

TEST(Conv2d, OutputGeometry) {
  auto in = Tensor64::zeros({2, 7, 9});
  auto k = Tensor64::zeros({4, 2, 3, 3});
  EXPECT_EQ(conv2d(in, k, 2, 1).shape(), (Shape{4, 4, 5}));
  EXPECT_THROW(conv2d(Tensor64::zeros({2, 2, 2}), k, 1, 0), ShapeError);
  EXPECT_THROW(conv2d(Tensor64::zeros({3, 7, 7}), k, 1, 0), ShapeError);
}

TEST(Conv2d, KernelGradientMatchesFiniteDifferences) {
  Prng prng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto in = random_tensor({2, 5, 6}, prng);
    auto k = random_tensor({3, 2, 3, 3}, prng);
    auto b = random_tensor({3}, prng);
    const std::size_t stride = 1 + trial % 2, pad = trial % 3;
    auto probe = random_tensor(conv2d(in, k, b, stride, pad).shape(), prng, -1, 1, false);
    auto r = grad_check({in, k, b}, [&] { return random_projection(conv2d(in, k, b, stride, pad), probe); });
    EXPECT_LT(r.max_relative_error, 1e-4) << "trial " << trial;
  }
}

TEST(MaxPool, PicksMaximum) {
  auto in = t64({1, 2, 2}, {1, 2, 3, 4});
  auto out = maxpool2d(in, 2, 2);
  EXPECT_EQ(out.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(out.item(), 4.0);
  EXPECT_THROW(maxpool2d(in, 3, 1), ShapeError);
}

TEST(MaxPool, TiesRouteGradientToFirstOccurrence) {
  auto in = Tensor64::full({1, 4, 4}, 2.5, true);
  auto out = maxpool2d(in, 2, 2);
  for (double v : out.values()) EXPECT_EQ(v, 2.5);
  sum(out).backward();
  const std::vector<double> expected{1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
  EXPECT_EQ(std::vector<double>(in.grad().begin(), in.grad().end()), expected);
}

TEST(MaxPool, MatchesBruteForceScan) {
  Prng prng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto in = random_tensor({1, 4, 4}, prng, -3, 3, false);
    auto out = maxpool2d(in, 2, 2);
    for (std::size_t oy = 0; oy < 2; ++oy) {
      for (std::size_t ox = 0; ox < 2; ++ox) {
        double best = -1e300;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx)
            best = std::max(best, in[(oy * 2 + dy) * 4 + ox * 2 + dx]);
        EXPECT_EQ(out[oy * 2 + ox], best);
      }
    }
  }
}

TEST(Backward, SquareSumGivesTwiceInput) {
  Prng prng(2);
  auto x = random_tensor({3, 4}, prng);
  sum(mul(x, x)).backward();
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x[i]);
}

TEST(Backward, IndependentParameterHasZeroGradient) {
  Prng prng(2);
  auto x = random_tensor({3}, prng);
  auto p = random_tensor({3}, prng);
  // p joins the graph but contributes nothing to the loss value.
  auto loss = add(sum(mul(x, x)), scale(sum(p), 0.0));
  loss.backward();
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
  auto unrelated = random_tensor({2}, prng);
  EXPECT_FALSE(unrelated.has_grad());
}

TEST(Backward, RepeatedCallsAccumulate) {
  auto x = t64({2}, {1.5, -2.0}, true);
  auto loss = sum(mul(x, x));
  loss.backward();
  loss.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -8.0);
}

TEST(Backward, NonScalarIsContractError) {
  auto x = Tensor64::zeros({2}, true);
  EXPECT_THROW(relu(x).backward(), ContractError);
}

TEST(Backward, ThreeLayerCompositeMatchesFiniteDifferences) {
  Prng prng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({4, 5}, prng);
    auto w1 = random_tensor({5, 6}, prng);
    auto b1 = random_tensor({6}, prng);
    auto w2 = random_tensor({6, 3}, prng);
    auto b2 = random_tensor({3}, prng);
    auto w3 = random_tensor({3, 1}, prng);
    auto b3 = random_tensor({1}, prng);
    auto f = [&] {
      auto h1 = tanh(linear(x, w1, b1));
      auto h2 = sigmoid(linear(h1, w2, b2));
      auto h3 = linear(mean_rows(h2), w3, b3);
      return bce_with_logits(h3, 1.0);
    };
    auto r = grad_check({x, w1, b1, w2, b2, w3, b3}, f);
    EXPECT_LT(r.max_relative_error, 1e-4) << "trial " << trial;
  }
}

// Every differentiable primitive, 20 random instances each.
TEST(Backward, EveryPrimitiveMatchesFiniteDifferences) {
  Prng prng(13);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor({3, 4}, prng);
    auto b = random_tensor({3, 4}, prng);
    auto c = random_tensor({4, 2}, prng);
    auto p34 = random_tensor({3, 4}, prng, -1, 1, false);
    auto p32 = random_tensor({3, 2}, prng, -1, 1, false);
    auto p4 = random_tensor({4}, prng, -1, 1, false);
    auto p24 = random_tensor({2, 3, 2}, prng, -1, 1, false);
    std::vector<std::pair<const char*, std::function<Tensor64()>>> cases{
        {"add", [&] { return random_projection(add(a, b), p34); }},
        {"sub", [&] { return random_projection(sub(a, b), p34); }},
        {"mul", [&] { return random_projection(mul(a, b), p34); }},
        {"scale", [&] { return random_projection(scale(a, 1.7), p34); }},
        {"matmul", [&] { return random_projection(matmul(a, c), p32); }},
        {"sigmoid", [&] { return random_projection(sigmoid(a), p34); }},
        {"tanh", [&] { return random_projection(tanh(a), p34); }},
        {"relu", [&] { return random_projection(relu(a), p34); }},
        {"mean", [&] { return scale(mean(mul(a, b)), 3.0); }},
        {"mean_rows", [&] { return random_projection(mean_rows(a), p4); }},
        {"concat", [&] {
           return random_projection(concat<double>({a, b}), concat<double>({p34, p34}));
         }},
        {"reshape", [&] { return random_projection(reshape(a, {2, 3, 2}), p24); }},
        {"maxpool", [&] {
           return random_projection(maxpool2d(reshape(a, {1, 3, 4}), 2, 1),
                                    Tensor64::full({1, 2, 3}, 0.7));
         }},
        {"bce0", [&] { return bce_with_logits(sum(a), 0.0); }},
    };
    for (auto& [name, f] : cases) {
      auto r = grad_check({a, b, c}, f);
      EXPECT_LT(r.max_relative_error, 1e-4) << name << " trial " << trial;
    }
  }
}

TEST(Backward, DeterministicAcrossRuns) {
  auto run = [] {
    Prng prng(99);
    auto x = random_tensor({3, 4}, prng);
    auto w = random_tensor({4, 2}, prng);
    auto out = sum(tanh(matmul(x, w)));
    out.backward();
    return std::make_pair(out.item(), std::vector<double>(w.grad().begin(), w.grad().end()));
  };
  EXPECT_EQ(run(), run());
}

TEST(Xavier, BoundIsOneForFanThree) {
  Prng prng(4);
  auto t = xavier_init<double>({100, 10}, 3, 3, prng);
  for (double v : t.values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Xavier, SameSeedSameTensor) {
  Prng a(42), b(42);
  auto x = xavier_init<float>({5, 7}, 5, 7, a);
  auto y = xavier_init<float>({5, 7}, 5, 7, b);
  EXPECT_TRUE(std::equal(x.values().begin(), x.values().end(), y.values().begin()));
  EXPECT_THROW(xavier_init<float>({2}, 0, 1, a), ContractError);
}

TEST(Xavier, MonteCarloMeanNearZero) {
  Prng prng(8);
  auto t = xavier_init<double>({100000}, 50, 50, prng);
  const double mean_value = std::accumulate(t.values().begin(), t.values().end(), 0.0) / 1e5;
  EXPECT_LT(std::abs(mean_value), 0.01);
}

TEST(Dropout, ZeroProbabilityIsIdentity) {
  Prng prng(1);
  auto x = random_tensor({10}, prng, -1, 1, false);
  EXPECT_EQ(to_vec(dropout(x, 0.0, true, prng)), to_vec(x));
  EXPECT_EQ(to_vec(dropout(x, 0.0, false, prng)), to_vec(x));
}

TEST(Dropout, EvaluationModeIsIdentity) {
  Prng prng(1);
  auto x = random_tensor({10}, prng, -1, 1, false);
  const auto before = prng.counter();
  EXPECT_EQ(to_vec(dropout(x, 0.5, false, prng)), to_vec(x));
  EXPECT_EQ(prng.counter(), before);
}

TEST(Dropout, InvertedScalingPreservesExpectation) {
  Prng prng(21);
  auto ones = Tensor64::full({100000}, 1.0);
  auto out = dropout(ones, 0.5, true, prng);
  const double m = std::accumulate(out.values().begin(), out.values().end(), 0.0) / 1e5;
  EXPECT_NEAR(m, 1.0, 0.02);
  for (double v : out.values()) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

TEST(Dropout, ProbabilityOneRejected) {
  Prng prng(1);
  EXPECT_THROW(dropout(Tensor64::zeros({2}), 1.0, true, prng), ContractError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = Tensor64::scalar(0.0, true);
  p.mutable_grad()[0] = 1.0;
  Adam<double> adam({p}, AdamConfig{});
  adam.step();
  // m_hat = 1, v_hat = 1 after bias correction.
  EXPECT_NEAR(p.item(), -0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(adam.step_count(), 1u);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  auto p = t64({3}, {1, -2, 3}, true);
  p.mutable_grad();
  Adam<double> adam({p});
  for (int i = 0; i < 5; ++i) adam.step();
  EXPECT_EQ(to_vec(p), (std::vector<double>{1, -2, 3}));
  EXPECT_EQ(adam.step_count(), 5u);
}

TEST(Adam, MissingGradientIsContractError) {
  auto p = Tensor64::zeros({2}, true);
  Adam<double> adam({p});
  EXPECT_THROW(adam.step(), ContractError);
}

TEST(Adam, TrajectoriesAreBitwiseReproducible) {
  auto run = [] {
    Prng prng(5);
    auto w = xavier_init<float>({4, 1}, 4, 1, prng);
    auto b = Tensor32::zeros({1}, true);
    auto x = xavier_init<float>({8, 4}, 4, 4, prng, false);
    Adam<float> adam({w, b});
    for (int step = 0; step < 10; ++step) {
      adam.zero_grad();
      bce_with_logits(sum(linear(x, w, b)), 1.0f).backward();
      adam.step();
    }
    return std::vector<float>(w.values().begin(), w.values().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(TensorIo, RoundTripPreservesShapeAndValues) {
  Prng prng(17);
  for (std::size_t rank = 1; rank <= 4; ++rank) {
    Shape shape;
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(1 + prng.below(4));
    auto t = xavier_init<float>(shape, 3, 3, prng, false);
    ByteWriter w;
    write_tensor(w, t);
    EXPECT_EQ(w.bytes().size(), 4 + 2 + 1 + 8 * rank + 4 * t.numel());
    ByteReader r(w.bytes());
    auto back = read_tensor<float>(r);
    EXPECT_EQ(back.shape(), t.shape());
    EXPECT_TRUE(std::equal(t.values().begin(), t.values().end(), back.values().begin()));
  }
}

TEST(TensorIo, HeaderLayoutIsLittleEndian) {
  ByteWriter w;
  write_tensor(w, Tensor32(Shape{2}, {1.0f, -2.0f}));
  const std::vector<std::uint8_t> expected{'H', 'T', 'T', 'N', 1, 0, 1, 2, 0, 0, 0, 0, 0, 0, 0,
                                           0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0xC0};
  EXPECT_EQ(w.bytes(), expected);
}

TEST(TensorIo, CorruptBlobsRejected) {
  std::vector<std::uint8_t> bad{'H', 'T', 'X', 'N', 1, 0, 1};
  ByteReader r(bad);
  EXPECT_THROW(read_tensor<float>(r), DataError);
  ByteWriter w;
  write_tensor(w, Tensor32::zeros({4}));
  auto truncated = w.bytes();
  truncated.pop_back();
  ByteReader r2(truncated);
  EXPECT_THROW(read_tensor<float>(r2), DataError);
}

TEST(Prng, SplitStreamsAreIndependentAndStable) {
  Prng root(123);
  auto a = root.split(1), b = root.split(2), a2 = root.split(1);
  EXPECT_EQ(a.next_u64(), a2.next_u64());
  EXPECT_NE(root.split(1).next_u64(), b.next_u64());
  // Frozen reference values guard cross-platform stability.
  Prng fixed(0);
  EXPECT_EQ(fixed.next_u64(), Prng::mix(Prng::mix(0) + 0x9E3779B97F4A7C15ULL));
}

}  // namespace
}  // namespace htdn
