#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "htdn/prng.hpp"
#include "htdn/tensor.hpp"

namespace htdn {

// Ads are cut to their first 184 words.
inline constexpr std::size_t kMaxTokens = 184;
inline constexpr std::size_t kEmbeddingDim = 100;

struct TokenSequence {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  bool operator==(const TokenSequence&) const = default;
};

// Splits on Unicode whitespace and lowercases cased letters. Symbols and emoji
// stay inside their tokens, so "©a$h" survives intact. Invalid UTF-8 raises
// DataError naming the byte offset.
TokenSequence tokenize(std::string_view text, std::size_t max_len = kMaxTokens);

std::string join_tokens(const TokenSequence& tokens);

// Dense token index ordered by descending frequency, then lexicographically.
class Vocabulary {
 public:
  // max_size == 0 keeps every token that meets min_count.
  static Vocabulary build(std::span<const TokenSequence> corpus, std::size_t min_count,
                          std::size_t max_size = 0);

  std::size_t size() const { return tokens_.size(); }
  std::optional<std::size_t> find(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::uint64_t count(std::size_t index) const { return counts_.at(index); }
  std::size_t min_count() const { return min_count_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t min_count_ = 1;
};

// Token -> dense vector. Rows are stored in vocabulary order.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::string> tokens, std::size_t dim, std::vector<float> vectors);

  std::size_t size() const { return tokens_.size(); }
  std::size_t dim() const { return dim_; }
  std::optional<std::size_t> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }
  std::span<const float> row(std::size_t index) const;
  // nullopt for out-of-vocabulary tokens.
  std::optional<std::span<const float>> lookup(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<float>& vectors() const { return vectors_; }

  // "htdn-emb v1 <V> <dim>" header, then "token v1 ... vdim" per line.
  std::string to_text() const;
  static EmbeddingTable from_text(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static EmbeddingTable load(const std::filesystem::path& path);

  bool operator==(const EmbeddingTable& other) const {
    return dim_ == other.dim_ && tokens_ == other.tokens_ && vectors_ == other.vectors_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t dim_ = 0;
  std::vector<float> vectors_;
};

struct SkipGramConfig {
  std::size_t dim = kEmbeddingDim;
  std::size_t window = 5;
  std::size_t negatives = 5;
  double subsample = 1e-3;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::size_t min_count = 1;
};

// Skip-gram with negative sampling. Deterministic for a given PRNG state.
EmbeddingTable train_skipgram(std::span<const TokenSequence> corpus, const SkipGramConfig& config,
                              Prng& prng);

// |distinct dataset unigrams found in the table| / |distinct dataset unigrams|.
double coverage(const EmbeddingTable& table, std::span<const TokenSequence> dataset);

// t x dim matrix of table rows; out-of-vocabulary tokens give zero rows.
template <typename T>
Tensor<T> embed_sequence(const TokenSequence& tokens, const EmbeddingTable& table);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace htdn
