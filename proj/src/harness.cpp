#include "htdn/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdlib>
#include <fmt/format.h>
#include <functional>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <thread>

#include "htdn/baselines.hpp"
#include "htdn/binary_io.hpp"
#include "htdn/errors.hpp"
#include "htdn/metrics.hpp"
#include "htdn/tensor_io.hpp"
#include "htdn/training.hpp"
#include "htdn/vision.hpp"

namespace htdn {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Run configuration

namespace {

template <typename N>
N parse_number(std::string_view key, std::string_view value) {
  N out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError(fmt::format("config key '{}': '{}' is not a valid number", key, value));
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

const std::vector<std::string> kFamilies{"keywords", "avgvec", "selected", "bow"};

}  // namespace

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string value = trim(raw);
  auto num = [&]<typename N>(N& field) { field = parse_number<N>(key, value); };
  if (key == "run.seed") {
    num(seed);
  } else if (key == "run.profile") {
    if (value != "full" && value != "reduced" && value != "small") {
      throw ConfigError(fmt::format("unknown profile '{}' (expected full, reduced or small)", value));
    }
    profile = value;
  } else if (key == "run.out") {
    out_dir = value;
  } else if (key == "data.dir") {
    data_dir = value;
  } else if (key == "data.keywords") {
    keywords = value;
  } else if (key == "data.annotations") {
    annotations = value;
  } else if (key == "data.train_ratio") {
    num(ratios.train);
  } else if (key == "data.val_ratio") {
    num(ratios.val);
  } else if (key == "data.test_ratio") {
    num(ratios.test);
  } else if (key == "data.positive_from") {
    try {
      rule.positive_from = parse_label7(value);
    } catch (const DataError& e) {
      throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
    }
  } else if (key == "generate.ads") {
    num(synth.ad_count);
  } else if (key == "generate.positive_fraction") {
    num(synth.positive_fraction);
  } else if (key == "generate.image_size") {
    num(synth.image_size);
  } else if (key == "generate.obfuscation_rate") {
    num(synth.obfuscation_rate);
  } else if (key == "generate.text_signal") {
    num(synth.text_signal);
  } else if (key == "generate.image_signal") {
    num(synth.image_signal);
  } else if (key == "embeddings.path") {
    embeddings = value;
  } else if (key == "embeddings.epochs") {
    num(embedding_epochs);
  } else if (key == "vision.backbone") {
    backbone = value;
  } else if (key == "vision.pretrain_epochs") {
    num(pretrain_epochs);
  } else if (key == "train.checkpoint") {
    checkpoint = value;
  } else if (key == "train.epochs") {
    num(epochs);
  } else if (key == "train.batch_size") {
    num(batch_size);
    if (batch_size == 0) throw ConfigError("config key 'train.batch_size' must be positive");
  } else if (key == "train.learning_rate") {
    num(learning_rate);
  } else if (key == "evaluate.baselines") {
    baselines.clear();
    std::stringstream ss(value);
    for (std::string item; std::getline(ss, item, ',');) {
      item = trim(item);
      if (item.empty() || item == "none") continue;
      if (std::find(kFamilies.begin(), kFamilies.end(), item) == kFamilies.end()) {
        throw ConfigError(fmt::format("unknown baseline family '{}' (expected keywords, avgvec, selected, bow)", item));
      }
      if (std::find(baselines.begin(), baselines.end(), item) == baselines.end()) baselines.push_back(item);
    }
  } else {
    throw ConfigError(fmt::format("unknown config key '{}'", key));
  }
  explicit_keys.insert(std::string(key));
}

std::string RunConfig::to_text() const {
  std::string joined;
  for (const auto& b : baselines) joined += (joined.empty() ? "" : ",") + b;
  const std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> layout{
      {"run", {{"seed", fmt::format("{}", seed)}, {"profile", profile}, {"out", out_dir.string()}}},
      {"data",
       {{"dir", data_dir.string()},
        {"keywords", keywords.string()},
        {"annotations", annotations.string()},
        {"train_ratio", fmt::format("{}", ratios.train)},
        {"val_ratio", fmt::format("{}", ratios.val)},
        {"test_ratio", fmt::format("{}", ratios.test)},
        {"positive_from", std::string(label7_name(rule.positive_from))}}},
      {"generate",
       {{"ads", fmt::format("{}", synth.ad_count)},
        {"positive_fraction", fmt::format("{}", synth.positive_fraction)},
        {"image_size", fmt::format("{}", synth.image_size)},
        {"obfuscation_rate", fmt::format("{}", synth.obfuscation_rate)},
        {"text_signal", fmt::format("{}", synth.text_signal)},
        {"image_signal", fmt::format("{}", synth.image_signal)}}},
      {"embeddings", {{"path", embeddings.string()}, {"epochs", fmt::format("{}", embedding_epochs)}}},
      {"vision", {{"backbone", backbone.string()}, {"pretrain_epochs", fmt::format("{}", pretrain_epochs)}}},
      {"train",
       {{"checkpoint", checkpoint.string()},
        {"epochs", fmt::format("{}", epochs)},
        {"batch_size", fmt::format("{}", batch_size)},
        {"learning_rate", fmt::format("{}", learning_rate)}}},
      {"evaluate", {{"baselines", joined.empty() ? "none" : joined}}},
  };
  std::string out;
  std::string defaulted;
  for (const auto& [section, keys] : layout) {
    out += fmt::format("[{}]\n", section);
    for (const auto& [k, v] : keys) {
      out += fmt::format("{} = {}\n", k, v);
      const std::string full = section + "." + k;
      if (!explicit_keys.contains(full)) defaulted += (defaulted.empty() ? "" : ",") + full;
    }
    out += "\n";
  }
  out += fmt::format("[provenance]\ndefaulted = {}\n", defaulted);
  return out;
}

RunConfig RunConfig::from_ini_text(std::string_view text) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("config: {} (line {})", e.message(), e.line()));
  }
  RunConfig config;
  for (const auto& [section, keys] : tree) {
    if (section == "provenance") continue;
    if (keys.empty()) throw ConfigError(fmt::format("config: key '{}' outside a section", section));
    for (const auto& [key, node] : keys) config.set(section + "." + key, node.get_value<std::string>());
  }
  return config;
}

RunConfig RunConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError(fmt::format("config file '{}' does not exist", path.string()));
  return from_ini_text(read_file_text(path));
}

void RunConfig::validate_for(std::string_view command) const {
  auto need = [&](const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(fmt::format("{} needs {}", command, what));
    if (!fs::exists(p)) throw ConfigError(fmt::format("{} '{}' does not exist", what, p.string()));
  };
  auto maybe = [&](const fs::path& p, const char* what) {
    if (!p.empty() && !fs::exists(p)) throw ConfigError(fmt::format("{} '{}' does not exist", what, p.string()));
  };
  if (std::find(std::begin(kCommands), std::end(kCommands), command) == std::end(kCommands)) {
    throw ConfigError(fmt::format("unknown command '{}'", command));
  }
  if (command == "generate") return;
  if (command == "agreement") return need(annotations, "the annotation file (data.annotations)");
  need(data_dir, "the dataset directory (data.dir)");
  if (command == "train-embeddings" || command == "pretrain-vision") return;
  if (command == "predict") return need(checkpoint, "the model checkpoint (train.checkpoint)");
  need(embeddings, "the embedding artifact (embeddings.path)");
  maybe(backbone, "the pretrained backbone (vision.backbone)");
  if (command == "evaluate") {
    maybe(checkpoint, "the model checkpoint (train.checkpoint)");
    if (std::find(baselines.begin(), baselines.end(), "keywords") != baselines.end()) {
      need(keywords.empty() ? data_dir / "keywords.txt" : keywords, "the keyword list (data.keywords)");
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoint container

void Checkpoint::put(const std::string& name, std::span<const std::uint8_t> bytes) {
  sections[name].assign(bytes.begin(), bytes.end());
}

void Checkpoint::put_text(const std::string& name, std::string_view text) {
  sections[name].assign(text.begin(), text.end());
}

const std::vector<std::uint8_t>& Checkpoint::get(const std::string& name) const {
  const auto it = sections.find(name);
  if (it == sections.end()) throw DataError(fmt::format("checkpoint has no '{}' section", name));
  return it->second;
}

std::string Checkpoint::get_text(const std::string& name) const {
  const auto& b = get(name);
  return {b.begin(), b.end()};
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  ByteWriter w;
  w.raw(std::string_view("HTDN"));
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) {
    w.short_string(name);
    w.u64(payload.size());
    w.raw(payload);
  }
  return w.take();
}

Checkpoint Checkpoint::parse(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.raw(4);
  if (std::string_view(reinterpret_cast<const char*>(magic.data()), 4) != "HTDN") {
    throw DataError("not a checkpoint: bad magic bytes");
  }
  const auto version = r.u16();
  if (version != kCheckpointVersion) {
    throw DataError(fmt::format("checkpoint format version {} is not supported (expected {})", version,
                                kCheckpointVersion));
  }
  Checkpoint out;
  const auto count = r.u32();
  std::string previous;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.short_string();
    if (i > 0 && name <= previous) throw DataError("checkpoint sections are not in canonical order");
    const auto size = r.u64();
    const auto payload = r.raw(size);
    out.sections[name].assign(payload.begin(), payload.end());
    previous = std::move(name);
  }
  if (!r.at_end()) throw DataError("checkpoint has trailing bytes");
  return out;
}

void Checkpoint::save(const fs::path& path) const { write_file_atomic(path, serialize()); }

Checkpoint Checkpoint::load(const fs::path& path) { return parse(read_file_bytes(path)); }

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::size_t thread_cap() {
  if (const char* env = std::getenv("HTDN_THREADS")) {
    std::size_t n = 0;
    const std::string_view v(env);
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (ec != std::errc{} || ptr != v.data() + v.size() || n == 0) {
      throw ConfigError(fmt::format("HTDN_THREADS='{}' is not a positive integer", v));
    }
    return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Commands

namespace {

std::vector<std::uint8_t> params_blob(const ParamList<float>& params) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.short_string(p.name);
    write_tensor(w, p.tensor);
  }
  return w.take();
}

void load_params(const std::vector<std::uint8_t>& blob, ParamList<float> params, std::string_view what) {
  ByteReader r(blob);
  const auto count = r.u32();
  if (count != params.size()) {
    throw DataError(fmt::format("{}: checkpoint holds {} tensors, model has {}", what, count, params.size()));
  }
  for (auto& p : params) {
    const auto name = r.short_string();
    const auto t = read_tensor<float>(r);
    if (name != p.name || t.shape() != p.tensor.shape()) {
      throw DataError(fmt::format("{}: checkpoint tensor '{}' does not match model tensor '{}'", what, name, p.name));
    }
    auto dst = p.tensor.mutable_values();
    std::copy(t.values().begin(), t.values().end(), dst.begin());
  }
  if (!r.at_end()) throw DataError(fmt::format("{}: trailing bytes after the last tensor", what));
}

ParamList<float> with_prefix(const ParamList<float>& all, std::string_view prefix) {
  ParamList<float> out;
  for (const auto& p : all) {
    if (p.name.starts_with(prefix)) out.push_back(p);
  }
  return out;
}

std::string history_text(const TrainHistory& h) {
  std::string out;
  for (const auto& e : h.epochs) {
    out += fmt::format("epoch {} loss {} train_accuracy {} val {}\n", e.epoch, e.train_loss, e.train_accuracy,
                       e.val_score ? fmt::format("{}", *e.val_score) : "-");
  }
  out += fmt::format("best_epoch = {}\n", h.best_epoch ? fmt::format("{}", *h.best_epoch) : "-");
  return out;
}

ModelProfile profile_of(const RunConfig& c) { return ModelProfile::by_name(c.profile); }

TrainConfig train_config(const RunConfig& c, std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = c.batch_size;
  t.adam.learning_rate = c.learning_rate;
  t.seed = c.seed;
  return t;
}

void stamp(Checkpoint& ck, const RunConfig& c) {
  ck.put_text("config", c.to_text());
  ck.put_text("prng", fmt::format("algorithm = {}\nseed = {}\n", Prng::kAlgorithm, c.seed));
}

struct Splits {
  Dataset all;
  DatasetSplit split;
  Dataset train, val, test;
};

Splits load_splits(const RunConfig& c) {
  Splits s;
  s.all = load_dataset(c.data_dir);
  if (s.all.ads.empty()) throw DataError(fmt::format("dataset '{}' holds no ads", c.data_dir.string()));
  s.split = split_dataset(s.all, c.ratios, c.seed, c.rule);
  s.train = s.all.subset(indices_of(s.all, s.split.train));
  s.val = s.all.subset(indices_of(s.all, s.split.val));
  s.test = s.all.subset(indices_of(s.all, s.split.test));
  if (s.val.ads.empty() || s.test.ads.empty()) {
    throw ContractError("the split leaves the validation or test part empty; use more ads or other ratios");
  }
  return s;
}

EmbeddingTable load_embeddings(const fs::path& path) {
  return EmbeddingTable::from_text(Checkpoint::load(path).get_text("embedding"));
}

Backbone<float> load_backbone(const fs::path& path, const ModelProfile& profile) {
  const auto ck = Checkpoint::load(path);
  if (ck.get_text("profile") != profile.to_text()) {
    throw ConfigError(fmt::format("backbone '{}' was trained under a different profile than '{}'", path.string(),
                                  profile.name));
  }
  Prng unused(0);
  auto b = Backbone<float>::init(profile.backbone, unused);
  load_params(ck.get("backbone"), b.params(), "backbone");
  return b;
}

struct LoadedModel {
  HtdnModel<float> model;
  EmbeddingTable table;
};

LoadedModel load_model(const fs::path& path, const ModelProfile& profile) {
  const auto ck = Checkpoint::load(path);
  const auto stored = ck.get_text("profile");
  if (stored != profile.to_text()) {
    throw ConfigError(fmt::format("checkpoint '{}' was trained with profile '{}', the configuration asks for '{}'",
                                  path.string(), ModelProfile::from_text(stored).name, profile.name));
  }
  Prng unused(0);
  LoadedModel m{HtdnModel<float>::init(profile, unused), EmbeddingTable::from_text(ck.get_text("embedding"))};
  const auto all = m.model.params();
  for (const char* part : {"language", "vision", "decision"}) {
    load_params(ck.get(part), with_prefix(all, std::string(part) + "."), part);
  }
  return m;
}

json metric_json(const Metric& m) { return m.value ? json(*m.value) : json(nullptr); }

json row_json(const std::string& name, const MetricsReport& r) {
  json j;
  j["kind"] = "row";
  j["model"] = name;
  j["weighted_accuracy"] = metric_json(r.weighted_accuracy);
  j["f1"] = metric_json(r.f1);
  j["accuracy"] = metric_json(r.accuracy);
  j["precision"] = metric_json(r.precision);
  j["recall"] = metric_json(r.recall);
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["tn"] = r.counts.tn;
  j["fn"] = r.counts.fn;
  return j;
}

json header_json(const RunConfig& c, std::string_view kind) {
  json j;
  j["kind"] = "header";
  j["artifact"] = kind;
  j["binarization"] = c.rule.describe();
  j["decision_threshold"] = "score >= 0.5 is positive";
  j["config"] = c.to_text();
  return j;
}

std::string score_lines(const Dataset& data, const std::vector<float>& scores) {
  std::string out;
  for (std::size_t i = 0; i < data.ads.size(); ++i) {
    json j;
    j["id"] = data.ads[i].id;
    j["score"] = scores[i];
    j["prediction"] = decide(scores[i]);
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<float> score_htdn(const HtdnModel<float>& model, const EmbeddingTable& table, const Dataset& data,
                              const BinarizationRule& rule) {
  const auto encoded = encode_ads(data, table, model.profile, rule);
  std::vector<float> out;
  out.reserve(encoded.size());
  for (const auto& a : encoded) out.push_back(predict_htdn(model, a, table));
  return out;
}

std::string cmd_generate(const RunConfig& c) {
  SyntheticConfig sc = c.synth;
  sc.seed = c.seed;
  sc.validate();
  const auto corpus = generate_corpus(sc, c.rule);
  fs::create_directories(c.out_dir);
  save_corpus(c.out_dir, corpus);
  write_file_atomic(c.out_dir / "config.ini", c.to_text());
  return fmt::format("generated {} ads ({} positive, mean length {:.1f}, mean images {:.2f}) in {}",
                     corpus.stats.ads, corpus.stats.positives, corpus.stats.mean_length, corpus.stats.mean_images,
                     c.out_dir.string());
}

std::string cmd_train_embeddings(const RunConfig& c) {
  const auto s = load_splits(c);
  std::vector<TokenSequence> seqs;
  for (const auto& a : s.train.ads) seqs.push_back(tokenize(a.text));
  SkipGramConfig sg;
  sg.dim = profile_of(c).embedding_dim;
  sg.epochs = c.embedding_epochs;
  Prng prng = Prng(c.seed).split(0x454d42);
  const auto table = train_skipgram(seqs, sg, prng);
  const double cov = coverage(table, seqs);
  Checkpoint ck;
  stamp(ck, c);
  ck.put_text("embedding", table.to_text());
  ck.put_text("stats", fmt::format("vocabulary = {}\ndim = {}\ntrain_coverage = {}\n", table.size(), table.dim(), cov));
  fs::create_directories(c.out_dir);
  ck.save(c.out_dir / kEmbeddingsFile);
  return fmt::format("trained {}-dimensional vectors for {} tokens on {} training ads -> {}", table.dim(),
                     table.size(), s.train.ads.size(), (c.out_dir / kEmbeddingsFile).string());
}

std::string cmd_pretrain_vision(const RunConfig& c) {
  const auto s = load_splits(c);
  const auto profile = profile_of(c);
  const auto pairs = pretrain_pairs(s.train, c.rule);
  const auto r = pretrain_backbone(pairs, profile, train_config(c, c.pretrain_epochs));
  Checkpoint ck;
  stamp(ck, c);
  ck.put_text("profile", profile.to_text());
  ck.put("backbone", params_blob(r.backbone.params()));
  ck.put_text("history", history_text(r.history));
  fs::create_directories(c.out_dir);
  ck.save(c.out_dir / kBackboneFile);
  return fmt::format("pretrained the {} backbone on {} images, final training accuracy {:.3f} -> {}", profile.name,
                     pairs.size(), r.history.epochs.empty() ? 0.0 : r.history.epochs.back().train_accuracy,
                     (c.out_dir / kBackboneFile).string());
}

struct TrainedHtdn {
  HtdnResult result;
  std::string lineage;
};

TrainedHtdn train_full(const RunConfig& c, const Splits& s, const EmbeddingTable& table, const ModelProfile& profile) {
  const auto tr = encode_ads(s.train, table, profile, c.rule);
  const auto va = encode_ads(s.val, table, profile, c.rule);
  std::optional<Backbone<float>> pre;
  std::string backbone_hash = "none";
  if (!c.backbone.empty()) {
    pre = load_backbone(c.backbone, profile);
    backbone_hash = sha256_hex(read_file_bytes(c.backbone));
  }
  auto r = train_htdn(tr, va, table, profile, train_config(c, c.epochs), pre ? &*pre : nullptr);
  return {std::move(r), fmt::format("backbone_sha256 = {}\nembeddings_sha256 = {}\n", backbone_hash,
                                    sha256_hex(read_file_bytes(c.embeddings)))};
}

std::string cmd_train(const RunConfig& c) {
  const auto s = load_splits(c);
  const auto profile = profile_of(c);
  const auto table = load_embeddings(c.embeddings);
  auto t = train_full(c, s, table, profile);
  const auto& h = t.result.history;
  Checkpoint ck;
  stamp(ck, c);
  ck.put_text("profile", profile.to_text());
  ck.put_text("embedding", table.to_text());
  const auto all = t.result.model.params();
  for (const char* part : {"language", "vision", "decision"}) {
    ck.put(part, params_blob(with_prefix(all, std::string(part) + ".")));
  }
  ck.put_text("lineage", t.lineage);
  ck.put_text("history", history_text(h));
  std::optional<double> best;
  for (const auto& e : h.epochs) {
    if (h.best_epoch && e.epoch == *h.best_epoch) best = e.val_score;
  }
  ck.put_text("metrics", fmt::format("validation_score = {}\n", best ? fmt::format("{}", *best) : "-"));
  fs::create_directories(c.out_dir);
  ck.save(c.out_dir / kModelFile);
  return fmt::format("trained HTDN ({} profile) for {} epochs, validation score {} -> {}", profile.name,
                     h.epochs.size(), best ? fmt::format("{:.3f}", *best) : "-", (c.out_dir / kModelFile).string());
}

struct Row {
  std::string name;
  std::vector<int> predictions;
};

// Runs independent jobs on up to `threads` workers; results keep job order.
std::vector<Row> run_parallel(const std::vector<std::function<Row()>>& jobs, std::size_t threads) {
  std::vector<Row> out(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < jobs.size();) {
      try {
        out[i] = jobs[i]();
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(threads, jobs.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::string cmd_evaluate(const RunConfig& c) {
  const auto s = load_splits(c);
  const auto profile = profile_of(c);
  const auto table = load_embeddings(c.embeddings);
  const auto train_y = s.train.binary_labels(c.rule);
  const auto test_y = s.test.binary_labels(c.rule);

  std::vector<TokenSequence> train_tok, test_tok;
  for (const auto& a : s.train.ads) train_tok.push_back(tokenize(a.text));
  for (const auto& a : s.test.ads) test_tok.push_back(tokenize(a.text));

  using Featurizer = std::function<std::vector<double>(const TokenSequence&)>;
  std::vector<std::pair<std::string, Featurizer>> families;
  for (const auto& f : c.baselines) {
    if (f == "keywords") {
      const fs::path path = c.keywords.empty() ? c.data_dir / "keywords.txt" : c.keywords;
      KeywordList k{parse_keyword_list(read_file_text(path)), c.keywords.empty() ? "synthetic" : "user"};
      k.validate();
      families.emplace_back("Keywords", [k](const TokenSequence& t) { return keyword_features(t, k); });
    } else if (f == "avgvec") {
      families.emplace_back("AvgVec", [&table](const TokenSequence& t) { return avg_wordvec(t, table); });
    } else if (f == "selected") {
      auto k = select_informative(train_tok, train_y);
      families.emplace_back("Selected-108", [k](const TokenSequence& t) { return keyword_features(t, k); });
    } else if (f == "bow") {
      auto vocab = Vocabulary::build(train_tok, 1, kBowVocabularyCap);
      families.emplace_back("BoW", [vocab](const TokenSequence& t) { return bow_features(t, vocab); });
    }
  }

  std::vector<std::function<Row()>> jobs;
  jobs.push_back([&] {
    const int label = ConstantPredictor::fit(train_y).predict();
    return Row{"Random", std::vector<int>(test_y.size(), label)};
  });
  // Feature matrices are shared by the three classifiers of a family.
  struct Matrices {
    FeatureMatrix train, test;
  };
  for (const auto& [name, featurize] : families) {
    auto m = std::make_shared<Matrices>();
    for (const auto& t : train_tok) m->train.append(featurize(t));
    for (const auto& t : test_tok) m->test.append(featurize(t));
    const std::string family = name;
    jobs.push_back([m, family, &train_y, &c] {
      ForestConfig fc;
      fc.seed = c.seed;
      const auto forest = train_random_forest(m->train, train_y, fc);
      Row r{family + "/RF", {}};
      for (std::size_t i = 0; i < m->test.rows; ++i) r.predictions.push_back(forest.predict(m->test.row(i)));
      return r;
    });
    for (const bool svm : {false, true}) {
      jobs.push_back([m, family, svm, &train_y] {
        const auto fit = svm ? train_linear_svm(m->train, train_y) : train_logreg(m->train, train_y);
        Row r{family + (svm ? "/SVM" : "/LR"), {}};
        for (std::size_t i = 0; i < m->test.rows; ++i) r.predictions.push_back(fit.model.predict(m->test.row(i)));
        return r;
      });
    }
  }
  auto rows = run_parallel(jobs, thread_cap());

  // Learned models, in order: F_l, F_v from scratch, F_v on the pretrained
  // backbone, and the joint model.
  const auto tr = encode_ads(s.train, table, profile, c.rule);
  const auto va = encode_ads(s.val, table, profile, c.rule);
  const auto te = encode_ads(s.test, table, profile, c.rule);
  const auto cfg = train_config(c, c.epochs);
  auto predict_all = [&](auto&& score) {
    std::vector<int> p;
    for (const auto& a : te) p.push_back(decide(score(a)));
    return p;
  };
  {
    const auto L = train_language_unimodal(tr, va, table, profile, cfg);
    rows.push_back({"F_l", predict_all([&](const EncodedAd& a) { return predict_language(L.net, a, table); })});
  }
  {
    const auto V = train_vision_unimodal(tr, va, profile, cfg, nullptr);
    rows.push_back({"F_v", predict_all([&](const EncodedAd& a) { return predict_vision(V.net, a, profile); })});
  }
  {
    Backbone<float> pre = c.backbone.empty()
                              ? pretrain_backbone(pretrain_pairs(s.train, c.rule), profile,
                                                  train_config(c, c.pretrain_epochs))
                                    .backbone
                              : load_backbone(c.backbone, profile);
    const auto V = train_vision_unimodal(tr, va, profile, cfg, &pre);
    rows.push_back(
        {"F_v (pretrained)", predict_all([&](const EncodedAd& a) { return predict_vision(V.net, a, profile); })});
  }
  std::vector<float> scores;
  std::string source;
  if (!c.checkpoint.empty()) {
    const auto m = load_model(c.checkpoint, profile);
    scores = score_htdn(m.model, m.table, s.test, c.rule);
    source = "checkpoint " + c.checkpoint.string();
  } else {
    const auto t = train_full(c, s, table, profile);
    scores = score_htdn(t.result.model, table, s.test, c.rule);
    source = "trained in this run";
  }
  std::vector<int> htdn_pred;
  for (float v : scores) htdn_pred.push_back(decide(v));
  rows.push_back({"HTDN", htdn_pred});

  auto header = header_json(c, "evaluation report");
  header["train_ads"] = s.train.ads.size();
  header["val_ads"] = s.val.ads.size();
  header["test_ads"] = s.test.ads.size();
  header["test_positives"] = std::count(test_y.begin(), test_y.end(), 1);
  header["htdn_source"] = source;
  std::string report = header.dump() + "\n";
  std::string table_text = fmt::format("{:<22}{:>8}{:>8}{:>8}{:>8}{:>8}\n", "Model", "Wt.Acc", "F1", "Acc", "Prec", "Rec");
  std::string best_name;
  double best = -1.0;
  for (const auto& row : rows) {
    const auto m = MetricsReport::from_counts(confusion(row.predictions, test_y));
    report += row_json(row.name, m).dump() + "\n";
    table_text += fmt::format("{:<22}{:>8}{:>8}{:>8}{:>8}{:>8}\n", row.name, format_percent(m.weighted_accuracy),
                              format_percent(m.f1), format_percent(m.accuracy), format_percent(m.precision),
                              format_percent(m.recall));
    if (m.weighted_accuracy.value.value_or(-1.0) > best) {
      best = *m.weighted_accuracy.value;
      best_name = row.name;
    }
  }
  fs::create_directories(c.out_dir);
  write_file_atomic(c.out_dir / kReportFile, report);
  write_file_atomic(c.out_dir / kReportTableFile, table_text);
  write_file_atomic(c.out_dir / kScoresFile, header_json(c, "HTDN test scores").dump() + "\n" + score_lines(s.test, scores));
  return fmt::format("evaluated {} models on {} test ads; best weighted accuracy {:.1f} ({}) -> {}", rows.size(),
                     s.test.ads.size(), 100.0 * best, best_name, (c.out_dir / kReportFile).string());
}

std::string cmd_predict(const RunConfig& c) {
  const auto profile = profile_of(c);
  const auto m = load_model(c.checkpoint, profile);
  const auto data = load_dataset(c.data_dir);
  const auto scores = score_htdn(m.model, m.table, data, c.rule);
  fs::create_directories(c.out_dir);
  write_file_atomic(c.out_dir / kPredictionsFile,
                    header_json(c, "HTDN predictions").dump() + "\n" + score_lines(data, scores));
  const auto positives = std::count_if(scores.begin(), scores.end(), [](float v) { return decide(v) == 1; });
  return fmt::format("scored {} ads, {} predicted positive -> {}", data.ads.size(), positives,
                     (c.out_dir / kPredictionsFile).string());
}

std::string cmd_agreement(const RunConfig& c) {
  const auto matrix = AnnotationMatrix::from_csv(read_file_text(c.annotations));
  const double pairwise = pairwise_agreement(matrix);
  const auto alpha = krippendorff_alpha(matrix);
  json j;
  j["items"] = matrix.items();
  j["annotators"] = matrix.annotators();
  j["pairwise_agreement"] = pairwise;
  j["krippendorff_alpha"] = alpha.alpha;
  j["no_expected_disagreement"] = alpha.no_expected_disagreement;
  j["config"] = c.to_text();
  fs::create_directories(c.out_dir);
  write_file_atomic(c.out_dir / kAgreementFile, j.dump(2) + "\n");
  return fmt::format("{} items, {} annotators: pairwise agreement {:.4f}, Krippendorff's alpha {:.4f}", matrix.items(),
                     matrix.annotators(), pairwise, alpha.alpha);
}

}  // namespace

std::string run_command(std::string_view command, const RunConfig& config) {
  config.validate_for(command);
  if (command == "generate") return cmd_generate(config);
  if (command == "train-embeddings") return cmd_train_embeddings(config);
  if (command == "pretrain-vision") return cmd_pretrain_vision(config);
  if (command == "train") return cmd_train(config);
  if (command == "evaluate") return cmd_evaluate(config);
  if (command == "predict") return cmd_predict(config);
  return cmd_agreement(config);
}

int run_command_guarded(std::string_view command, const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    out << run_command(command, config) << "\n";
    return 0;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ContractError& e) {
    err << "contract error: " << e.what() << "\n";
    return 4;
  } catch (const ShapeError& e) {
    err << "contract error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace htdn
