#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "htdn/dataset.hpp"
#include "htdn/labels.hpp"
#include "htdn/prng.hpp"

namespace htdn {

struct SyntheticConfig {
  std::size_t ad_count = 1000;
  double positive_fraction = 3257.0 / 10249.0;
  double length_mean = 137.0;
  double length_sd = 74.0;
  std::size_t length_min = 7;
  std::size_t length_max = 184;
  double images_mean = 5.9;
  std::size_t images_max = 12;
  std::size_t image_size = 64;
  // Probability that a planted cue token appears in an obfuscated spelling.
  double obfuscation_rate = 0.3;
  // Probability that an ad's text (resp. images) follows its label; the rest
  // are drawn independently of it.
  double text_signal = 0.6;
  double image_signal = 0.3;
  std::uint64_t seed = 1;

  // ContractError naming the first infeasible field.
  void validate() const;
};

inline constexpr std::size_t kKeywordCount = 108;

struct CorpusStats {
  std::size_t ads = 0;
  std::size_t positives = 0;
  double positive_fraction = 0.0;
  double mean_length = 0.0;
  double sd_length = 0.0;
  double median_length = 0.0;
  std::size_t max_length = 0;
  double mean_images = 0.0;
  double median_images = 0.0;
  std::size_t min_images = 0;
  std::size_t max_images = 0;
  std::size_t unigrams = 0;
  std::size_t bigrams = 0;
  std::size_t trigrams = 0;
  double planted_mi_bits = 0.0;

  std::string to_text() const;
};

struct SyntheticCorpus {
  Dataset data;
  // Positive cues, one per line in the keyword file.
  std::vector<std::string> keywords;
  std::vector<std::string> negative_cues;
  // Base cue -> the obfuscated spellings the generator may emit for it.
  std::map<std::string, std::vector<std::string>> variants;
  CorpusStats stats;
};

SyntheticCorpus generate_corpus(const SyntheticConfig& config, const BinarizationRule& rule = {});

// Replaces each character that has a look-alike (c s e i o l t) with that
// look-alike with probability `rate`. One draw per replaceable character.
std::string obfuscate(std::string_view token, Prng& prng, double rate = 1.0);

// Mutual information in bits between "the ad contains a token from `cues`"
// and the binary label.
double planted_token_mi(const Dataset& data, const std::vector<std::string>& cues, const BinarizationRule& rule = {});

CorpusStats corpus_stats(const Dataset& data, const std::vector<std::string>& positive_cues,
                         const BinarizationRule& rule = {});

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct DatasetSplit {
  std::vector<std::string> train, val, test;
  SplitRatios ratios;
  std::uint64_t seed = 0;
  bool operator==(const DatasetSplit& o) const {
    return train == o.train && val == o.val && test == o.test && seed == o.seed;
  }
};

// Stratified by binary label. The training part must hold both classes.
DatasetSplit split_dataset(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed,
                           const BinarizationRule& rule = {});
// Indices into data.ads for a list of ids from a split.
std::vector<std::size_t> indices_of(const Dataset& data, const std::vector<std::string>& ids);

// One token per line; exactly kKeywordCount non-empty lines.
std::vector<std::string> parse_keyword_list(std::string_view text);
std::string keyword_list_text(const std::vector<std::string>& keywords);

// Dataset files plus keywords.txt and stats.txt.
void save_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus);

}  // namespace htdn
