#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "htdn/datagen.hpp"
#include "htdn/labels.hpp"

namespace htdn {

// Resolved settings of one command. Keys are "section.key" and mirror the INI
// layout; flags are applied through the same setter after the file.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string profile = "reduced";
  std::filesystem::path out_dir = "out";

  std::filesystem::path data_dir;
  std::filesystem::path keywords;     // empty: <data>/keywords.txt
  std::filesystem::path annotations;  // CSV for the agreement command
  SplitRatios ratios;
  BinarizationRule rule;

  SyntheticConfig synth;  // seed comes from `seed`

  std::filesystem::path embeddings;  // artifact written by train-embeddings
  std::size_t embedding_epochs = 5;

  std::filesystem::path backbone;    // artifact written by pretrain-vision
  std::filesystem::path checkpoint;  // artifact written by train
  std::size_t epochs = 10;
  std::size_t pretrain_epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;

  // Feature families for the baseline rows: keywords, avgvec, selected, bow.
  std::vector<std::string> baselines{"keywords", "avgvec", "selected", "bow"};

  // Keys given explicitly by a file or a flag; everything else was defaulted.
  std::set<std::string> explicit_keys;

  // ConfigError for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  // Canonical INI text of every key, followed by the list of defaulted keys.
  std::string to_text() const;
  static RunConfig from_ini_text(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  // Checks the inputs a command reads exist; ConfigError otherwise.
  void validate_for(std::string_view command) const;
};

// Container file: "HTDN", u16 version, u32 section count, then each section
// as a u16-length name and u64-length payload, sorted by name. Parsing
// rejects anything that would not re-serialize to the same bytes.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::vector<std::uint8_t>> sections;

  void put(const std::string& name, std::span<const std::uint8_t> bytes);
  void put_text(const std::string& name, std::string_view text);
  bool has(const std::string& name) const { return sections.contains(name); }
  // DataError naming the missing section.
  const std::vector<std::uint8_t>& get(const std::string& name) const;
  std::string get_text(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint parse(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);

// HTDN_THREADS if set (ConfigError unless a positive integer), otherwise the
// hardware concurrency.
std::size_t thread_cap();

inline constexpr std::string_view kCommands[] = {"generate", "train-embeddings", "pretrain-vision", "train",
                                                 "evaluate", "predict",          "agreement"};

// Artifact names inside out_dir.
inline constexpr std::string_view kEmbeddingsFile = "embeddings.htdn";
inline constexpr std::string_view kBackboneFile = "backbone.htdn";
inline constexpr std::string_view kModelFile = "model.htdn";
inline constexpr std::string_view kReportFile = "report.jsonl";
inline constexpr std::string_view kReportTableFile = "report.txt";
inline constexpr std::string_view kScoresFile = "scores.jsonl";
inline constexpr std::string_view kPredictionsFile = "predictions.jsonl";
inline constexpr std::string_view kAgreementFile = "agreement.json";

// Runs one command and returns its one-line summary. Errors propagate as the
// library's exception types.
std::string run_command(std::string_view command, const RunConfig& config);

// run_command with the error mapping of the executable: 0 on success, 2 for
// configuration, 3 for data, 4 for contract errors, 1 otherwise. The summary
// or the error message goes to `out` or `err`.
int run_command_guarded(std::string_view command, const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace htdn
