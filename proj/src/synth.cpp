#include <algorithm>
#include <boost/math/distributions/negative_binomial.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numbers>
#include <set>
#include <unordered_set>

#include "htdn/binary_io.hpp"
#include "htdn/datagen.hpp"
#include "htdn/errors.hpp"
#include "htdn/text.hpp"

namespace htdn {
namespace {

constexpr std::size_t kBackgroundWords = 3000;
constexpr std::size_t kTopics = 25;
constexpr std::size_t kTopicWords = 60;
constexpr double kTopicShare = 0.7;
constexpr std::size_t kNegativeCues = 60;
constexpr std::size_t kContextWords = 400;
constexpr std::size_t kContextsPerCue = 4;
constexpr std::size_t kVariantsPerCue = 2;
constexpr double kNegBinomialShape = 2.0;

const std::vector<std::string> kRegions{"northeast", "southeast", "midwest", "southwest", "west"};

// Stream ids for the independent parts of the generator.
enum Stream : std::uint64_t { kLexicon = 1, kAdBase = 1u << 20 };

std::string_view lookalike(char c) {
  switch (c) {
    case 'c': return "©";
    case 's': return "$";
    case 'e': return "3";
    case 'i': return "!";
    case 'o': return "0";
    case 'l': return "1";
    case 't': return "7";
    default: return {};
  }
}

bool has_lookalike(std::string_view word) {
  return std::any_of(word.begin(), word.end(), [](char c) { return !lookalike(c).empty(); });
}

std::string pseudo_word(Prng& prng) {
  static constexpr std::string_view kOnsets = "bcdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  const std::size_t syllables = 2 + prng.below(2);
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kOnsets[prng.below(kOnsets.size())];
    w += kVowels[prng.below(kVowels.size())];
  }
  if (prng.bernoulli(0.3)) w += kOnsets[prng.below(kOnsets.size())];
  return w;
}

struct Lexicon {
  std::vector<std::string> background;
  std::vector<double> background_cdf;  // Zipf weights
  std::vector<std::vector<std::string>> topics;
  std::vector<std::string> positive, negative, context;
  std::map<std::string, std::vector<std::string>> variants;
  std::map<std::string, std::vector<std::size_t>> contexts;  // cue -> context indices
};

Lexicon build_lexicon(Prng prng) {
  Lexicon lex;
  std::set<std::string> used;
  auto fresh = [&](bool needs_lookalike) {
    for (;;) {
      auto w = pseudo_word(prng);
      if (needs_lookalike && !has_lookalike(w)) continue;
      if (used.insert(w).second) return w;
    }
  };
  for (std::size_t i = 0; i < kBackgroundWords; ++i) lex.background.push_back(fresh(false));
  lex.topics.resize(kTopics);
  for (auto& t : lex.topics) {
    for (std::size_t i = 0; i < kTopicWords; ++i) t.push_back(fresh(false));
  }
  for (std::size_t i = 0; i < kKeywordCount; ++i) lex.positive.push_back(fresh(true));
  for (std::size_t i = 0; i < kNegativeCues; ++i) lex.negative.push_back(fresh(true));
  for (std::size_t i = 0; i < kContextWords; ++i) lex.context.push_back(fresh(false));

  double total = 0.0;
  for (std::size_t r = 0; r < kBackgroundWords; ++r) {
    total += 1.0 / static_cast<double>(r + 1);
    lex.background_cdf.push_back(total);
  }
  for (auto& c : lex.background_cdf) c /= total;

  // Each pool draws its flanking words from its own half of the context list,
  // so cues of one class share surroundings with each other.
  const std::size_t half = kContextWords / 2;
  for (const auto* pool : {&lex.positive, &lex.negative}) {
    const std::size_t offset = pool == &lex.positive ? 0 : half;
    for (const auto& cue : *pool) {
      auto& vs = lex.variants[cue];
      for (std::size_t k = 0; k < kVariantsPerCue; ++k) {
        std::string v;
        for (int attempt = 0; attempt < 16; ++attempt) {
          v = obfuscate(cue, prng, 0.5);
          if (v != cue && std::find(vs.begin(), vs.end(), v) == vs.end()) break;
        }
        if (v == cue || std::find(vs.begin(), vs.end(), v) != vs.end()) v = obfuscate(cue, prng, 1.0);
        if (std::find(vs.begin(), vs.end(), v) == vs.end()) vs.push_back(v);
      }
      auto& ctx = lex.contexts[cue];
      for (std::size_t k = 0; k < kContextsPerCue; ++k) ctx.push_back(offset + prng.below(half));
    }
  }
  return lex;
}

// Location of a normal whose truncation to [lo, hi] has the requested mean.
double truncated_location(double mean, double sd, double lo, double hi) {
  boost::math::normal_distribution<double> unit;
  auto truncated_mean = [&](double mu) {
    const double a = (lo - mu) / sd, b = (hi - mu) / sd;
    const double mass = boost::math::cdf(unit, b) - boost::math::cdf(unit, a);
    return mu + sd * (boost::math::pdf(unit, a) - boost::math::pdf(unit, b)) / mass;
  };
  double left = lo - 10.0 * sd, right = hi + 10.0 * sd;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (left + right);
    (truncated_mean(mid) < mean ? left : right) = mid;
  }
  return 0.5 * (left + right);
}

// Mean of the negative binomial before clamping to [0, cap] that gives the
// requested clamped mean.
double clamped_nb_mean(double target, std::size_t cap) {
  auto clamped = [&](double m) {
    boost::math::negative_binomial_distribution<double> nb(kNegBinomialShape, kNegBinomialShape / (kNegBinomialShape + m));
    double e = 0.0;
    for (std::size_t k = 1; k < cap; ++k) e += static_cast<double>(k) * boost::math::pdf(nb, static_cast<double>(k));
    return e + static_cast<double>(cap) * (1.0 - boost::math::cdf(nb, static_cast<double>(cap - 1)));
  };
  double left = 1e-6, right = 1e4;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (left + right);
    (clamped(mid) < target ? left : right) = mid;
  }
  return 0.5 * (left + right);
}

// Style 1: bright with vertical stripes; style 0: dark with horizontal
// stripes; style 2: mid-grey without stripes, carrying no label information.
RgbImage render_image(int style, std::size_t size, Prng& prng) {
  RgbImage img;
  img.width = img.height = size;
  img.pixels.resize(size * size * 3);
  const double base = style == 1 ? prng.uniform(135.0, 195.0)
                      : style == 0 ? prng.uniform(65.0, 125.0)
                                   : prng.uniform(95.0, 165.0);
  const double amplitude = style == 2 ? 0.0 : 35.0;
  const double cycles = style == 1 ? 4.0 : 2.0;
  const double phase = prng.uniform(0.0, 2.0 * std::numbers::pi);
  double tint[3];
  for (auto& t : tint) t = prng.uniform(-20.0, 20.0);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double along = static_cast<double>(style == 1 ? x : y) / static_cast<double>(size);
      const double wave = amplitude * std::sin(2.0 * std::numbers::pi * cycles * along + phase);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = base + wave + tint[c] + prng.uniform(-20.0, 20.0);
        img.pixels[(y * size + x) * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return img;
}

Label7 draw_label7(int label, const BinarizationRule& rule, Prng& prng) {
  const auto cut = static_cast<std::size_t>(rule.positive_from);
  const std::size_t lo = label ? cut : 0, hi = label ? kLabel7Names.size() : cut;
  return static_cast<Label7>(lo + prng.below(hi - lo));
}

struct Sampler {
  const SyntheticConfig& cfg;
  const Lexicon& lex;
  double length_location;
  boost::math::negative_binomial_distribution<double> images;

  std::size_t length(Prng& prng) const {
    for (;;) {
      const double x = length_location + cfg.length_sd * prng.normal();
      const double r = std::round(x);
      if (r >= static_cast<double>(cfg.length_min) && r <= static_cast<double>(cfg.length_max)) {
        return static_cast<std::size_t>(r);
      }
    }
  }

  std::size_t image_count(Prng& prng) const {
    const double u = prng.uniform();
    for (std::size_t k = 0; k < cfg.images_max; ++k) {
      if (u < boost::math::cdf(images, static_cast<double>(k))) return k;
    }
    return cfg.images_max;
  }

  // Most filler comes from the ad's topic, the rest from a shared Zipf pool.
  const std::string& background_word(std::size_t topic, Prng& prng) const {
    if (prng.bernoulli(kTopicShare)) {
      const auto& words = lex.topics[topic];
      return words[prng.below(words.size())];
    }
    const double u = prng.uniform();
    const auto it = std::upper_bound(lex.background_cdf.begin(), lex.background_cdf.end(), u);
    return lex.background[std::min<std::size_t>(it - lex.background_cdf.begin(), lex.background.size() - 1)];
  }

  // Cue flanked by two of its context words, possibly respelled.
  std::vector<std::string> phrase(const std::vector<std::string>& pool, Prng& prng) const {
    const auto& cue = pool[prng.below(pool.size())];
    const auto& ctx = lex.contexts.at(cue);
    std::string spelled = cue;
    if (prng.bernoulli(cfg.obfuscation_rate)) {
      const auto& vs = lex.variants.at(cue);
      spelled = vs[prng.below(vs.size())];
    }
    return {lex.context[ctx[prng.below(ctx.size())]], spelled, lex.context[ctx[prng.below(ctx.size())]]};
  }

  std::string text(int label, Prng& prng) const {
    const std::size_t len = length(prng);
    const bool informative = prng.bernoulli(cfg.text_signal);
    const std::size_t topic = prng.below(kTopics);
    // About one planted phrase per 16 words.
    const std::size_t phrases = std::clamp<std::size_t>((len + prng.below(16)) / 16, 1, len / 3);
    std::vector<std::vector<std::string>> planted;
    for (std::size_t k = 0; k < phrases; ++k) {
      const bool positive_pool = informative ? label == 1 : prng.bernoulli(0.5);
      planted.push_back(phrase(positive_pool ? lex.positive : lex.negative, prng));
    }
    const std::size_t fill = len - 3 * phrases;
    std::vector<std::size_t> slots;
    for (std::size_t k = 0; k < phrases; ++k) slots.push_back(prng.below(fill + 1));
    std::sort(slots.begin(), slots.end());
    std::string out;
    auto emit = [&](const std::string& w) {
      if (!out.empty()) out += ' ';
      out += w;
    };
    std::size_t next = 0;
    for (std::size_t i = 0; i <= fill; ++i) {
      while (next < phrases && slots[next] == i) {
        for (const auto& w : planted[next]) emit(w);
        ++next;
      }
      if (i < fill) emit(background_word(topic, prng));
    }
    return out;
  }
};

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("synthetic config: " + what); };
  if (ad_count == 0) fail("ad_count must be positive");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) fail("positive_fraction must lie in (0, 1)");
  if (length_min == 0 || length_min >= length_max) fail("length bounds must satisfy 0 < min < max");
  if (length_max > kMaxTokens) fail(fmt::format("length_max may not exceed {}", kMaxTokens));
  if (!(length_mean > static_cast<double>(length_min) && length_mean < static_cast<double>(length_max))) {
    fail("length_mean must lie strictly between the length bounds");
  }
  if (!(length_sd > 0.0)) fail("length_sd must be positive");
  if (images_max == 0) fail("images_max must be positive");
  if (!(images_mean > 0.0 && images_mean < static_cast<double>(images_max))) {
    fail("images_mean must lie in (0, images_max)");
  }
  if (image_size == 0) fail("image_size must be positive");
  for (auto [name, v] : {std::pair{"obfuscation_rate", obfuscation_rate}, std::pair{"text_signal", text_signal},
                         std::pair{"image_signal", image_signal}}) {
    if (!(v >= 0.0 && v <= 1.0)) fail(std::string(name) + " must lie in [0, 1]");
  }
}

std::string obfuscate(std::string_view token, Prng& prng, double rate) {
  std::string out;
  for (char c : token) {
    const auto sub = lookalike(c);
    if (!sub.empty() && prng.bernoulli(rate)) {
      out += sub;
    } else {
      out += c;
    }
  }
  return out;
}

SyntheticCorpus generate_corpus(const SyntheticConfig& config, const BinarizationRule& rule) {
  config.validate();
  if (rule.positive_from == Label7::kCertainlyNo) {
    throw ContractError("synthetic config: binarization leaves no negative levels");
  }
  const Prng root(config.seed);
  const Lexicon lex = build_lexicon(root.split(kLexicon));
  const double nb_mean = clamped_nb_mean(config.images_mean, config.images_max);
  const Sampler sampler{config, lex,
                        truncated_location(config.length_mean, config.length_sd,
                                           static_cast<double>(config.length_min),
                                           static_cast<double>(config.length_max)),
                        boost::math::negative_binomial_distribution<double>(
                            kNegBinomialShape, kNegBinomialShape / (kNegBinomialShape + nb_mean))};

  SyntheticCorpus corpus;
  corpus.keywords = lex.positive;
  corpus.negative_cues = lex.negative;
  corpus.variants = lex.variants;
  const int width = std::max(5, static_cast<int>(std::to_string(config.ad_count - 1).size()));
  for (std::size_t i = 0; i < config.ad_count; ++i) {
    Prng prng = root.split(kAdBase + i);
    const int label = prng.bernoulli(config.positive_fraction) ? 1 : 0;
    AdRecord ad;
    ad.id = fmt::format("ad{:0{}}", i, width);
    ad.label7 = draw_label7(label, rule, prng);
    if (prng.bernoulli(0.8)) ad.region = kRegions[prng.below(kRegions.size())];
    ad.text = sampler.text(label, prng);
    const std::size_t count = sampler.image_count(prng);
    const bool informative = prng.bernoulli(config.image_signal);
    for (std::size_t k = 0; k < count; ++k) {
      const int style = informative ? label : 2;
      std::string ref = fmt::format("images/{}_{}.ppm", ad.id, k);
      corpus.data.images.emplace(ref, render_image(style, config.image_size, prng));
      ad.images.push_back(std::move(ref));
    }
    corpus.data.ads.push_back(std::move(ad));
  }
  std::vector<std::string> cues = corpus.keywords;
  for (const auto& k : corpus.keywords) {
    for (const auto& v : lex.variants.at(k)) cues.push_back(v);
  }
  corpus.stats = corpus_stats(corpus.data, cues, rule);
  return corpus;
}

double planted_token_mi(const Dataset& data, const std::vector<std::string>& cues, const BinarizationRule& rule) {
  const std::unordered_set<std::string> cue_set(cues.begin(), cues.end());
  double joint[2][2] = {{0, 0}, {0, 0}};
  for (const auto& ad : data.ads) {
    const auto tokens = tokenize(ad.text, std::numeric_limits<std::size_t>::max());
    const bool has = std::any_of(tokens.tokens.begin(), tokens.tokens.end(),
                                 [&](const std::string& t) { return cue_set.count(t) > 0; });
    joint[has ? 1 : 0][rule.apply(ad.label7)] += 1.0;
  }
  const double n = static_cast<double>(data.ads.size());
  if (n == 0.0) return 0.0;
  double mi = 0.0;
  for (int x = 0; x < 2; ++x) {
    for (int y = 0; y < 2; ++y) {
      if (joint[x][y] == 0.0) continue;
      const double px = (joint[x][0] + joint[x][1]) / n, py = (joint[0][y] + joint[1][y]) / n;
      const double pxy = joint[x][y] / n;
      mi += pxy * std::log2(pxy / (px * py));
    }
  }
  return std::max(0.0, mi);
}

CorpusStats corpus_stats(const Dataset& data, const std::vector<std::string>& positive_cues,
                         const BinarizationRule& rule) {
  CorpusStats s;
  s.ads = data.ads.size();
  if (s.ads == 0) return s;
  std::vector<double> lengths, images;
  std::unordered_set<std::string> uni, bi, tri;
  s.min_images = std::numeric_limits<std::size_t>::max();
  for (const auto& ad : data.ads) {
    s.positives += static_cast<std::size_t>(rule.apply(ad.label7));
    const auto tok = tokenize(ad.text, std::numeric_limits<std::size_t>::max()).tokens;
    lengths.push_back(static_cast<double>(tok.size()));
    s.max_length = std::max(s.max_length, tok.size());
    images.push_back(static_cast<double>(ad.images.size()));
    s.min_images = std::min(s.min_images, ad.images.size());
    s.max_images = std::max(s.max_images, ad.images.size());
    for (std::size_t i = 0; i < tok.size(); ++i) {
      uni.insert(tok[i]);
      if (i + 1 < tok.size()) bi.insert(tok[i] + ' ' + tok[i + 1]);
      if (i + 2 < tok.size()) tri.insert(tok[i] + ' ' + tok[i + 1] + ' ' + tok[i + 2]);
    }
  }
  const double n = static_cast<double>(s.ads);
  s.positive_fraction = static_cast<double>(s.positives) / n;
  double sum = 0.0, sq = 0.0, img_sum = 0.0;
  for (double l : lengths) sum += l;
  s.mean_length = sum / n;
  for (double l : lengths) sq += (l - s.mean_length) * (l - s.mean_length);
  s.sd_length = std::sqrt(sq / n);
  s.median_length = median(lengths);
  for (double c : images) img_sum += c;
  s.mean_images = img_sum / n;
  s.median_images = median(images);
  s.unigrams = uni.size();
  s.bigrams = bi.size();
  s.trigrams = tri.size();
  s.planted_mi_bits = planted_token_mi(data, positive_cues, rule);
  return s;
}

std::string CorpusStats::to_text() const {
  std::string out;
  out += fmt::format("ads = {}\n", ads);
  out += fmt::format("positives = {}\n", positives);
  out += fmt::format("negatives = {}\n", ads - positives);
  out += fmt::format("positive_fraction = {:.4f}\n", positive_fraction);
  out += fmt::format("length_mean = {:.2f}\n", mean_length);
  out += fmt::format("length_sd = {:.2f}\n", sd_length);
  out += fmt::format("length_median = {}\n", median_length);
  out += fmt::format("length_max = {}\n", max_length);
  out += fmt::format("images_mean = {:.2f}\n", mean_images);
  out += fmt::format("images_median = {}\n", median_images);
  out += fmt::format("images_min = {}\n", min_images);
  out += fmt::format("images_max = {}\n", max_images);
  out += fmt::format("distinct_unigrams = {}\n", unigrams);
  out += fmt::format("distinct_bigrams = {}\n", bigrams);
  out += fmt::format("distinct_trigrams = {}\n", trigrams);
  out += fmt::format("planted_token_mi_bits = {:.6f}\n", planted_mi_bits);
  return out;
}

std::vector<std::string> parse_keyword_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto tokens = tokenize(line, std::numeric_limits<std::size_t>::max()).tokens;
    if (tokens.size() != 1) {
      throw DataError(fmt::format("keyword list line {}: expected one token, found {}", line_no, tokens.size()));
    }
    out.push_back(tokens[0]);
  }
  if (out.size() != kKeywordCount) {
    throw DataError(fmt::format("keyword list: expected {} lines, found {}", kKeywordCount, out.size()));
  }
  return out;
}

std::string keyword_list_text(const std::vector<std::string>& keywords) {
  std::string out;
  for (const auto& k : keywords) out += k + '\n';
  return out;
}

void save_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  save_dataset(dir, corpus.data);
  write_file_atomic(dir / "keywords.txt", keyword_list_text(corpus.keywords));
  write_file_atomic(dir / "stats.txt", corpus.stats.to_text());
}

}  // namespace htdn
