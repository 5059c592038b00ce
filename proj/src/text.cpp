#include "htdn/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "htdn/binary_io.hpp"
#include "htdn/errors.hpp"

namespace htdn {

// ---------------------------------------------------------------------------
// Tokenizer

TokenSequence tokenize(std::string_view text, std::size_t max_len) {
  if (max_len == 0) throw ContractError("tokenize: max_len must be positive");
  TokenSequence out;
  std::string current;
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t offset = 0;
  auto flush = [&] {
    if (!current.empty()) {
      out.tokens.push_back(std::move(current));
      current.clear();
    }
  };
  while (offset < length) {
    const std::int32_t start = offset;
    UChar32 c;
    U8_NEXT(bytes, offset, length, c);
    if (c < 0) {
      throw DataError("invalid UTF-8 sequence at byte offset " + std::to_string(start));
    }
    if (u_isUWhiteSpace(c)) {
      flush();
      if (out.tokens.size() >= max_len) break;
      continue;
    }
    const UChar32 lower = u_tolower(c);
    char buf[U8_MAX_LENGTH];
    std::int32_t n = 0;
    U8_APPEND_UNSAFE(buf, n, lower);
    current.append(buf, static_cast<std::size_t>(n));
  }
  if (out.tokens.size() < max_len) flush();
  if (out.tokens.size() > max_len) out.tokens.resize(max_len);
  return out;
}

std::string join_tokens(const TokenSequence& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens.tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::build(std::span<const TokenSequence> corpus, std::size_t min_count,
                             std::size_t max_size) {
  if (corpus.empty()) throw ContractError("build_vocab: empty corpus");
  if (min_count == 0) throw ContractError("build_vocab: min_count must be positive");
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& seq : corpus) {
    for (const auto& tok : seq.tokens) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (max_size > 0 && kept.size() > max_size) kept.resize(max_size);
  Vocabulary vocab;
  vocab.min_count_ = min_count;
  for (auto& [tok, n] : kept) {
    vocab.index_.emplace(tok, vocab.tokens_.size());
    vocab.tokens_.push_back(tok);
    vocab.counts_.push_back(n);
  }
  return vocab;
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// EmbeddingTable

EmbeddingTable::EmbeddingTable(std::vector<std::string> tokens, std::size_t dim,
                               std::vector<float> vectors)
    : tokens_(std::move(tokens)), dim_(dim), vectors_(std::move(vectors)) {
  if (dim_ == 0) throw ContractError("embedding table: dimension must be positive");
  if (vectors_.size() != tokens_.size() * dim_) {
    throw ShapeError("embedding table: " + std::to_string(vectors_.size()) + " values for " +
                     std::to_string(tokens_.size()) + " tokens of dimension " +
                     std::to_string(dim_));
  }
  for (float v : vectors_) {
    if (!std::isfinite(v)) throw DataError("embedding table: non-finite value");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw DataError("embedding table: duplicate token '" + tokens_[i] + "'");
    }
  }
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const float> EmbeddingTable::row(std::size_t index) const {
  if (index >= tokens_.size()) throw ContractError("embedding row out of range");
  return std::span<const float>(vectors_).subspan(index * dim_, dim_);
}

std::optional<std::span<const float>> EmbeddingTable::lookup(std::string_view token) const {
  if (auto i = find(token)) return row(*i);
  return std::nullopt;
}

std::string EmbeddingTable::to_text() const {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "htdn-emb v1 {} {}\n", tokens_.size(), dim_);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    fmt::format_to(std::back_inserter(buf), "{}", tokens_[i]);
    for (float v : row(i)) fmt::format_to(std::back_inserter(buf), " {}", v);
    buf.push_back('\n');
  }
  return fmt::to_string(buf);
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto next = line.find(' ', pos);
    const auto end = next == std::string_view::npos ? line.size() : next;
    if (end > pos) parts.push_back(line.substr(pos, end - pos));
    pos = end + 1;
  }
  return parts;
}

template <typename N>
N parse_number(std::string_view s, std::size_t line_no, const char* what) {
  N value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("embedding file line " + std::to_string(line_no) + ": bad " + what + " '" +
                    std::string(s) + "'");
  }
  return value;
}

}  // namespace

EmbeddingTable EmbeddingTable::from_text(std::string_view text) {
  std::size_t pos = 0, line_no = 0;
  auto next_line = [&]() -> std::optional<std::string_view> {
    if (pos >= text.size()) return std::nullopt;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    return line;
  };
  auto header = next_line();
  if (!header) throw DataError("embedding file: missing header");
  auto h = split_spaces(*header);
  if (h.size() != 4 || h[0] != "htdn-emb" || h[1] != "v1") {
    throw DataError("embedding file line 1: expected 'htdn-emb v1 <V> <dim>'");
  }
  const auto count = parse_number<std::size_t>(h[2], 1, "vocabulary size");
  const auto dim = parse_number<std::size_t>(h[3], 1, "dimension");
  std::vector<std::string> tokens;
  std::vector<float> vectors;
  tokens.reserve(count);
  vectors.reserve(count * dim);
  for (std::size_t i = 0; i < count; ++i) {
    auto line = next_line();
    if (!line) throw DataError("embedding file: expected " + std::to_string(count) + " rows");
    auto parts = split_spaces(*line);
    if (parts.size() != dim + 1) {
      throw DataError("embedding file line " + std::to_string(line_no) + ": expected " +
                      std::to_string(dim) + " values");
    }
    tokens.emplace_back(parts[0]);
    for (std::size_t j = 1; j <= dim; ++j) vectors.push_back(parse_number<float>(parts[j], line_no, "value"));
  }
  while (auto line = next_line()) {
    if (!line->empty()) throw DataError("embedding file: trailing content at line " + std::to_string(line_no));
  }
  return EmbeddingTable(std::move(tokens), dim, std::move(vectors));
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  write_file_atomic(path, to_text());
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  return from_text(read_file_text(path));
}

// ---------------------------------------------------------------------------
// Skip-gram with negative sampling

namespace {

float fast_sigmoid(float x) {
  if (x > 30.0f) return 1.0f;
  if (x < -30.0f) return 0.0f;
  return 1.0f / (1.0f + std::exp(-x));
}

}  // namespace

EmbeddingTable train_skipgram(std::span<const TokenSequence> corpus, const SkipGramConfig& config,
                              Prng& prng) {
  if (config.dim == 0 || config.window == 0) {
    throw ContractError("train_skipgram: dimension and window must be positive");
  }
  const Vocabulary vocab = Vocabulary::build(corpus, config.min_count);
  const std::size_t v = vocab.size();
  if (v < 2) throw ContractError("train_skipgram: vocabulary needs at least 2 tokens");
  const std::size_t dim = config.dim;

  std::vector<std::vector<std::uint32_t>> sentences;
  sentences.reserve(corpus.size());
  std::uint64_t total = 0;
  for (const auto& seq : corpus) {
    std::vector<std::uint32_t> ids;
    for (const auto& tok : seq.tokens) {
      if (auto i = vocab.find(tok)) ids.push_back(static_cast<std::uint32_t>(*i));
    }
    total += ids.size();
    sentences.push_back(std::move(ids));
  }

  // Negative sampling distribution: unigram^0.75.
  std::vector<double> cumulative(v);
  double acc = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    acc += std::pow(static_cast<double>(vocab.count(i)), 0.75);
    cumulative[i] = acc;
  }
  auto draw_negative = [&]() -> std::uint32_t {
    const double r = prng.uniform() * acc;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    return static_cast<std::uint32_t>(std::min<std::size_t>(it - cumulative.begin(), v - 1));
  };

  std::vector<double> keep_prob(v, 1.0);
  if (config.subsample > 0.0) {
    for (std::size_t i = 0; i < v; ++i) {
      const double f = static_cast<double>(vocab.count(i)) / static_cast<double>(total);
      const double t = config.subsample;
      keep_prob[i] = std::min(1.0, (std::sqrt(f / t) + 1.0) * t / f);
    }
  }

  std::vector<float> input(v * dim), output(v * dim, 0.0f);
  for (auto& x : input) x = static_cast<float>((prng.uniform() - 0.5) / static_cast<double>(dim));

  std::vector<float> hidden_grad(dim);
  const double total_work = static_cast<double>(total) * static_cast<double>(config.epochs) + 1.0;
  double processed = 0.0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& raw : sentences) {
      std::vector<std::uint32_t> sentence;
      sentence.reserve(raw.size());
      for (auto id : raw) {
        if (keep_prob[id] >= 1.0 || prng.uniform() < keep_prob[id]) sentence.push_back(id);
      }
      processed += static_cast<double>(raw.size());
      const float lr = static_cast<float>(
          config.learning_rate * std::max(1e-4, 1.0 - processed / total_work));
      for (std::size_t pos = 0; pos < sentence.size(); ++pos) {
        const std::size_t reach = 1 + prng.below(config.window);
        const std::size_t lo = pos >= reach ? pos - reach : 0;
        const std::size_t hi = std::min(sentence.size() - 1, pos + reach);
        for (std::size_t ctx = lo; ctx <= hi; ++ctx) {
          if (ctx == pos) continue;
          float* in_vec = &input[sentence[ctx] * dim];
          std::fill(hidden_grad.begin(), hidden_grad.end(), 0.0f);
          for (std::size_t d = 0; d <= config.negatives; ++d) {
            std::uint32_t target;
            float label;
            if (d == 0) {
              target = sentence[pos];
              label = 1.0f;
            } else {
              target = draw_negative();
              if (target == sentence[pos]) continue;
              label = 0.0f;
            }
            float* out_vec = &output[target * dim];
            float dot = 0.0f;
            for (std::size_t j = 0; j < dim; ++j) dot += in_vec[j] * out_vec[j];
            const float g = (label - fast_sigmoid(dot)) * lr;
            for (std::size_t j = 0; j < dim; ++j) hidden_grad[j] += g * out_vec[j];
            for (std::size_t j = 0; j < dim; ++j) out_vec[j] += g * in_vec[j];
          }
          for (std::size_t j = 0; j < dim; ++j) in_vec[j] += hidden_grad[j];
        }
      }
    }
  }
  return EmbeddingTable(vocab.tokens(), dim, std::move(input));
}

double coverage(const EmbeddingTable& table, std::span<const TokenSequence> dataset) {
  std::set<std::string_view> distinct;
  for (const auto& seq : dataset) {
    for (const auto& tok : seq.tokens) distinct.insert(tok);
  }
  if (distinct.empty()) throw ContractError("coverage: empty dataset");
  std::size_t covered = 0;
  for (auto tok : distinct) covered += table.contains(tok) ? 1 : 0;
  return static_cast<double>(covered) / static_cast<double>(distinct.size());
}

template <typename T>
Tensor<T> embed_sequence(const TokenSequence& tokens, const EmbeddingTable& table) {
  if (tokens.empty()) throw ContractError("embed_sequence: empty token sequence");
  const std::size_t dim = table.dim();
  std::vector<T> values(tokens.size() * dim, T{0});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (auto row = table.lookup(tokens.tokens[i])) {
      std::copy(row->begin(), row->end(), values.begin() + i * dim);
    }
  }
  return Tensor<T>({tokens.size(), dim}, std::move(values));
}

template Tensor<float> embed_sequence(const TokenSequence&, const EmbeddingTable&);
template Tensor<double> embed_sequence(const TokenSequence&, const EmbeddingTable&);

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace htdn
