#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "htdn/text.hpp"

namespace htdn {

inline constexpr std::size_t kKeywordListSize = 108;
inline constexpr std::size_t kBowVocabularyCap = 2000;

// Row-major dense design matrix.
struct FeatureMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  void append(std::span<const double> r);
};

struct KeywordList {
  std::vector<std::string> tokens;
  std::string source;  // "synthetic", "user" or "selected"

  // ContractError unless there are exactly 108 distinct entries.
  void validate() const;
};

// Raw counts over the vocabulary; unknown tokens are ignored.
std::vector<double> bow_features(const TokenSequence& tokens, const Vocabulary& vocab);
// Bit i set iff keyword i occurs at least once.
std::vector<double> keyword_features(const TokenSequence& tokens, const KeywordList& keywords);
// Mean of the token vectors; unknown tokens add zero but still count.
std::vector<double> avg_wordvec(const TokenSequence& tokens, const EmbeddingTable& table);

// Chi-squared statistic of a 2x2 table of token presence against label:
// n11 = present & positive, n10 = present & negative, n01, n00 likewise.
double chi_squared(double n11, double n10, double n01, double n00);
// Every distinct token with its statistic, best first, ties lexicographic.
std::vector<std::pair<std::string, double>> chi_squared_ranking(std::span<const TokenSequence> corpus,
                                                                std::span<const int> labels);
KeywordList select_informative(std::span<const TokenSequence> corpus, std::span<const int> labels,
                               std::size_t k = kKeywordListSize);

struct LinearModel {
  std::vector<double> w;
  double b = 0.0;

  double decision(std::span<const double> x) const;
  int predict(std::span<const double> x) const { return decision(x) > 0.0 ? 1 : 0; }
};

struct LinearConfig {
  double c = 1.0;
  double gradient_tolerance = 1e-6;
  std::size_t max_iterations = 20000;
};

struct LinearFit {
  LinearModel model;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// 0.5 |w|^2 + C sum log(1 + exp(-s_i (w.x_i + b))), s_i in {-1, +1}; b is not penalised.
double logreg_objective(const LinearModel& m, const FeatureMatrix& x, std::span<const int> y, double c);
// 0.5 |w|^2 + C sum max(0, 1 - s_i (w.x_i + b))^2.
double svm_objective(const LinearModel& m, const FeatureMatrix& x, std::span<const int> y, double c);

LinearFit train_logreg(const FeatureMatrix& x, std::span<const int> y, const LinearConfig& config = {});
LinearFit train_linear_svm(const FeatureMatrix& x, std::span<const int> y, const LinearConfig& config = {});

struct ForestConfig {
  std::size_t trees = 10;
  std::size_t min_samples_split = 2;
  // Features tried per split; defaults to floor(sqrt(d)), at least 1.
  std::optional<std::size_t> max_features;
  std::uint64_t seed = 1;
};

struct DecisionTree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double positive_fraction = 0.0;
  };
  std::vector<Node> nodes;

  double positive_fraction(std::span<const double> x) const;
  std::size_t depth() const;
};

struct RandomForest {
  std::vector<DecisionTree> trees;

  // Mean leaf positive fraction over trees.
  double score(std::span<const double> x) const;
  // Positive only on a strict majority, so ties go to the negative class.
  int predict(std::span<const double> x) const { return score(x) > 0.5 ? 1 : 0; }
};

// Gini splits on bootstrap samples, unlimited depth.
RandomForest train_random_forest(const FeatureMatrix& x, std::span<const int> y, const ForestConfig& config = {});
// One tree grown on exactly the given rows (no bootstrap); exposed for tests.
DecisionTree grow_tree(const FeatureMatrix& x, std::span<const int> y, std::span<const std::size_t> rows,
                       std::size_t max_features, std::size_t min_samples_split, Prng& prng);

// Always answers the majority training class; a tie answers negative.
struct ConstantPredictor {
  int label = 0;
  static ConstantPredictor fit(std::span<const int> labels);
  int predict() const { return label; }
};

}  // namespace htdn
