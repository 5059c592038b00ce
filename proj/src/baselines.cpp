#include "htdn/baselines.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <memory>
#include <numeric>
#include <set>
#include <unordered_map>

#include "htdn/errors.hpp"

namespace htdn {

void FeatureMatrix::append(std::span<const double> r) {
  if (rows == 0 && cols == 0) cols = r.size();
  if (r.size() != cols) {
    throw ShapeError(fmt::format("feature row of width {} appended to a matrix of width {}", r.size(), cols));
  }
  values.insert(values.end(), r.begin(), r.end());
  ++rows;
}

void KeywordList::validate() const {
  if (tokens.size() != kKeywordListSize) {
    throw ContractError(fmt::format("keyword list has {} entries, expected {}", tokens.size(), kKeywordListSize));
  }
  if (std::set<std::string>(tokens.begin(), tokens.end()).size() != tokens.size()) {
    throw ContractError("keyword list entries must be distinct");
  }
}

std::vector<double> bow_features(const TokenSequence& tokens, const Vocabulary& vocab) {
  if (vocab.size() == 0) throw ContractError("bag of words: empty vocabulary");
  std::vector<double> out(vocab.size(), 0.0);
  for (const auto& t : tokens.tokens) {
    if (auto i = vocab.find(t)) out[*i] += 1.0;
  }
  return out;
}

std::vector<double> keyword_features(const TokenSequence& tokens, const KeywordList& keywords) {
  std::unordered_map<std::string_view, std::size_t> where;
  for (std::size_t i = 0; i < keywords.tokens.size(); ++i) where.emplace(keywords.tokens[i], i);
  std::vector<double> out(keywords.tokens.size(), 0.0);
  for (const auto& t : tokens.tokens) {
    if (auto it = where.find(t); it != where.end()) out[it->second] = 1.0;
  }
  return out;
}

std::vector<double> avg_wordvec(const TokenSequence& tokens, const EmbeddingTable& table) {
  if (tokens.empty()) throw ContractError("average word vector of an empty sequence");
  std::vector<double> out(table.dim(), 0.0);
  for (const auto& t : tokens.tokens) {
    if (auto row = table.lookup(t)) {
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += (*row)[j];
    }
  }
  for (auto& v : out) v /= static_cast<double>(tokens.size());
  return out;
}

double chi_squared(double n11, double n10, double n01, double n00) {
  const double n = n11 + n10 + n01 + n00;
  const double denom = (n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00);
  if (denom == 0.0) return 0.0;
  const double cross = n11 * n00 - n10 * n01;
  return n * cross * cross / denom;
}

std::vector<std::pair<std::string, double>> chi_squared_ranking(std::span<const TokenSequence> corpus,
                                                                std::span<const int> labels) {
  if (corpus.size() != labels.size()) throw ContractError("chi-squared: corpus and labels differ in length");
  std::unordered_map<std::string, std::array<double, 2>> present;
  double pos = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    pos += labels[i];
    const std::set<std::string> distinct(corpus[i].tokens.begin(), corpus[i].tokens.end());
    for (const auto& t : distinct) present[t][labels[i]] += 1.0;
  }
  const double neg = static_cast<double>(corpus.size()) - pos;
  std::vector<std::pair<std::string, double>> out;
  out.reserve(present.size());
  for (const auto& [token, c] : present) {
    out.emplace_back(token, chi_squared(c[1], c[0], pos - c[1], neg - c[0]));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return out;
}

namespace {

void require_both(std::span<const int> y, const char* who) {
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(y.size())) {
    throw ContractError(fmt::format("{}: training labels hold a single class", who));
  }
}

}  // namespace

KeywordList select_informative(std::span<const TokenSequence> corpus, std::span<const int> labels, std::size_t k) {
  require_both(labels, "feature selection");
  auto ranking = chi_squared_ranking(corpus, labels);
  if (ranking.size() < k) {
    throw ContractError(fmt::format("feature selection: {} distinct tokens, {} requested", ranking.size(), k));
  }
  KeywordList out;
  out.source = "selected";
  for (std::size_t i = 0; i < k; ++i) out.tokens.push_back(std::move(ranking[i].first));
  return out;
}

double LinearModel::decision(std::span<const double> x) const {
  double z = b;
  for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
  return z;
}

namespace {

enum class Loss { kLogistic, kSquaredHinge };

struct Problem {
  const FeatureMatrix* x;
  std::span<const int> y;
  double c;
  Loss loss;
};

// Objective and, if grad != nullptr, its gradient; theta = (w, b).
double evaluate(const Problem& p, const double* theta, double* grad) {
  const std::size_t d = p.x->cols;
  double obj = 0.0;
  for (std::size_t j = 0; j < d; ++j) obj += 0.5 * theta[j] * theta[j];
  if (grad) {
    for (std::size_t j = 0; j < d; ++j) grad[j] = theta[j];
    grad[d] = 0.0;
  }
  for (std::size_t i = 0; i < p.x->rows; ++i) {
    const auto row = p.x->row(i);
    const double s = p.y[i] ? 1.0 : -1.0;
    double z = theta[d];
    for (std::size_t j = 0; j < d; ++j) z += theta[j] * row[j];
    const double m = s * z;
    double dm = 0.0;  // d loss / d m
    if (p.loss == Loss::kLogistic) {
      obj += p.c * (m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)));
      dm = -1.0 / (1.0 + std::exp(m));
    } else {
      const double h = 1.0 - m;
      if (h > 0) {
        obj += p.c * h * h;
        dm = -2.0 * h;
      }
    }
    if (grad && dm != 0.0) {
      const double g = p.c * dm * s;
      for (std::size_t j = 0; j < d; ++j) grad[j] += g * row[j];
      grad[d] += g;
    }
  }
  return obj;
}

double gsl_f(const gsl_vector* v, void* params) {
  return evaluate(*static_cast<const Problem*>(params), v->data, nullptr);
}
void gsl_df(const gsl_vector* v, void* params, gsl_vector* g) {
  evaluate(*static_cast<const Problem*>(params), v->data, g->data);
}
void gsl_fdf(const gsl_vector* v, void* params, double* f, gsl_vector* g) {
  *f = evaluate(*static_cast<const Problem*>(params), v->data, g->data);
}

LinearFit minimise(const Problem& p, const LinearConfig& config) {
  if (p.x->rows != p.y.size()) throw ContractError("linear model: rows and labels differ in length");
  require_both(p.y, p.loss == Loss::kLogistic ? "logistic regression" : "linear SVM");
  static const auto previous_handler = gsl_set_error_handler_off();
  (void)previous_handler;

  const std::size_t n = p.x->cols + 1;
  std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> start(gsl_vector_calloc(n), gsl_vector_free);
  std::unique_ptr<gsl_multimin_fdfminimizer, decltype(&gsl_multimin_fdfminimizer_free)> solver(
      gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n), gsl_multimin_fdfminimizer_free);
  gsl_multimin_function_fdf fn{&gsl_f, &gsl_df, &gsl_fdf, n, const_cast<Problem*>(&p)};
  gsl_multimin_fdfminimizer_set(solver.get(), &fn, start.get(), 0.1, 0.1);

  LinearFit fit;
  int status = gsl_multimin_test_gradient(solver->gradient, config.gradient_tolerance);
  while (status == GSL_CONTINUE && fit.iterations < config.max_iterations) {
    ++fit.iterations;
    if (gsl_multimin_fdfminimizer_iterate(solver.get()) != GSL_SUCCESS) break;
    status = gsl_multimin_test_gradient(solver->gradient, config.gradient_tolerance);
  }
  fit.converged = status == GSL_SUCCESS;
  const double* theta = solver->x->data;
  fit.model.w.assign(theta, theta + p.x->cols);
  fit.model.b = theta[p.x->cols];
  fit.objective = solver->f;
  return fit;
}

}  // namespace

double logreg_objective(const LinearModel& m, const FeatureMatrix& x, std::span<const int> y, double c) {
  std::vector<double> theta = m.w;
  theta.push_back(m.b);
  return evaluate(Problem{&x, y, c, Loss::kLogistic}, theta.data(), nullptr);
}

double svm_objective(const LinearModel& m, const FeatureMatrix& x, std::span<const int> y, double c) {
  std::vector<double> theta = m.w;
  theta.push_back(m.b);
  return evaluate(Problem{&x, y, c, Loss::kSquaredHinge}, theta.data(), nullptr);
}

LinearFit train_logreg(const FeatureMatrix& x, std::span<const int> y, const LinearConfig& config) {
  return minimise(Problem{&x, y, config.c, Loss::kLogistic}, config);
}

LinearFit train_linear_svm(const FeatureMatrix& x, std::span<const int> y, const LinearConfig& config) {
  return minimise(Problem{&x, y, config.c, Loss::kSquaredHinge}, config);
}

double DecisionTree::positive_fraction(std::span<const double> x) const {
  int at = 0;
  while (nodes[at].feature >= 0) {
    const auto& n = nodes[at];
    at = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[at].positive_fraction;
}

std::size_t DecisionTree::depth() const {
  std::size_t best = 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [at, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (nodes[at].feature >= 0) {
      stack.push_back({nodes[at].left, d + 1});
      stack.push_back({nodes[at].right, d + 1});
    }
  }
  return best;
}

double RandomForest::score(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& t : trees) s += t.positive_fraction(x);
  return trees.empty() ? 0.0 : s / static_cast<double>(trees.size());
}

DecisionTree grow_tree(const FeatureMatrix& x, std::span<const int> y, std::span<const std::size_t> rows,
                       std::size_t max_features, std::size_t min_samples_split, Prng& prng) {
  DecisionTree tree;
  struct Pending {
    int node;
    std::vector<std::size_t> rows;
  };
  tree.nodes.emplace_back();
  std::vector<Pending> stack;
  stack.push_back({0, std::vector<std::size_t>(rows.begin(), rows.end())});
  std::vector<std::size_t> order(x.cols);
  std::vector<std::pair<double, int>> column;

  while (!stack.empty()) {
    Pending job = std::move(stack.back());
    stack.pop_back();
    const double n = static_cast<double>(job.rows.size());
    double pos = 0.0;
    for (auto r : job.rows) pos += y[r];
    tree.nodes[job.node].positive_fraction = n > 0 ? pos / n : 0.0;
    if (pos == 0.0 || pos == n || job.rows.size() < min_samples_split) continue;

    // Visit features in random order. Constant features do not use up the
    // budget, so the search continues past it until some split is found.
    std::iota(order.begin(), order.end(), std::size_t{0});
    double best_impurity = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    std::size_t informative_seen = 0;
    for (std::size_t k = 0; k < order.size() && informative_seen < max_features; ++k) {
      std::swap(order[k], order[k + prng.below(order.size() - k)]);
      const std::size_t f = order[k];
      column.clear();
      for (auto r : job.rows) column.emplace_back(x.values[r * x.cols + f], y[r]);
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first) continue;
      ++informative_seen;
      double left_n = 0.0, left_pos = 0.0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left_n += 1.0;
        left_pos += column[i].second;
        if (column[i].first == column[i + 1].first) continue;
        const double right_n = n - left_n, right_pos = pos - left_pos;
        const double gini_l = 1.0 - (left_pos * left_pos + (left_n - left_pos) * (left_n - left_pos)) / (left_n * left_n);
        const double gini_r =
            1.0 - (right_pos * right_pos + (right_n - right_pos) * (right_n - right_pos)) / (right_n * right_n);
        const double impurity = left_n * gini_l + right_n * gini_r;
        if (impurity < best_impurity) {
          best_impurity = impurity;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (column[i].first + column[i + 1].first);
          // Midpoints can round onto the upper value; keep the split strict.
          if (best_threshold >= column[i + 1].first) best_threshold = column[i].first;
        }
      }
    }
    if (best_feature < 0) continue;

    Pending left{static_cast<int>(tree.nodes.size()), {}}, right{static_cast<int>(tree.nodes.size() + 1), {}};
    for (auto r : job.rows) {
      (x.values[r * x.cols + best_feature] <= best_threshold ? left.rows : right.rows).push_back(r);
    }
    auto& node = tree.nodes[job.node];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left.node;
    node.right = right.node;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    stack.push_back(std::move(right));
    stack.push_back(std::move(left));
  }
  return tree;
}

RandomForest train_random_forest(const FeatureMatrix& x, std::span<const int> y, const ForestConfig& config) {
  if (x.rows != y.size()) throw ContractError("random forest: rows and labels differ in length");
  require_both(y, "random forest");
  if (config.trees == 0) throw ContractError("random forest: needs at least one tree");
  const std::size_t max_features =
      config.max_features.value_or(std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(x.cols)))));
  const Prng root(config.seed);
  RandomForest forest;
  for (std::size_t t = 0; t < config.trees; ++t) {
    Prng prng = root.split(t);
    std::vector<std::size_t> sample(x.rows);
    for (auto& s : sample) s = prng.below(x.rows);
    forest.trees.push_back(grow_tree(x, y, sample, max_features, std::max<std::size_t>(2, config.min_samples_split), prng));
  }
  return forest;
}

ConstantPredictor ConstantPredictor::fit(std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  const auto neg = static_cast<std::ptrdiff_t>(labels.size()) - pos;
  return ConstantPredictor{pos > neg ? 1 : 0};
}

}  // namespace htdn
