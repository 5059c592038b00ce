#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "htdn/binary_io.hpp"
#include "htdn/errors.hpp"
#include "htdn/harness.hpp"

namespace htdn {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("htdn_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::istringstream in(read_file_text(p));
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

TEST(RunConfig, IniValuesAndDefaultProvenance) {
  auto c = RunConfig::from_ini_text("[run]\nseed = 42\nprofile = small\n[train]\nepochs = 3\nlearning_rate = 0.0005\n");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.profile, "small");
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_DOUBLE_EQ(c.learning_rate, 5e-4);
  const auto text = c.to_text();
  EXPECT_NE(text.find("seed = 42"), std::string::npos);
  // Explicit keys are absent from the defaulted list, defaulted ones present.
  const auto prov = text.substr(text.find("[provenance]"));
  EXPECT_EQ(prov.find("run.seed"), std::string::npos);
  EXPECT_NE(prov.find("train.batch_size"), std::string::npos);
  auto d = RunConfig::from_ini_text("");
  EXPECT_NE(d.to_text().find("seed = 1\n"), std::string::npos);
  EXPECT_NE(d.to_text().find("run.seed"), std::string::npos);
}

TEST(RunConfig, EchoReadsBackToTheSameSettings) {
  auto c = RunConfig::from_ini_text("[run]\nseed = 7\n[evaluate]\nbaselines = bow, keywords\n");
  c.set("data.dir", "somewhere");
  const auto again = RunConfig::from_ini_text(c.to_text());
  EXPECT_EQ(again.seed, 7u);
  EXPECT_EQ(again.baselines, (std::vector<std::string>{"bow", "keywords"}));
  EXPECT_EQ(again.data_dir, "somewhere");
  EXPECT_EQ(again.ratios.train, c.ratios.train);
}

TEST(RunConfig, LaterSettingsWin) {
  auto c = RunConfig::from_ini_text("[run]\nseed = 5\n");
  c.set("run.seed", "9");
  EXPECT_EQ(c.seed, 9u);
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(RunConfig::from_ini_text("[run]\ncolour = red\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_ini_text("[run]\nseed = many\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_ini_text("[run]\nprofile = huge\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_ini_text("[data]\npositive_from = Maybe\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_ini_text("[evaluate]\nbaselines = tfidf\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_ini_text("[run\nseed = 1\n"), ConfigError);
  EXPECT_THROW(RunConfig::load("/nonexistent/run.ini"), ConfigError);
}

TEST(RunConfig, MissingInputsFailValidation) {
  RunConfig c;
  EXPECT_THROW(c.validate_for("train"), ConfigError);
  c.data_dir = "/nonexistent/data";
  EXPECT_THROW(c.validate_for("train-embeddings"), ConfigError);
  EXPECT_THROW(c.validate_for("fly"), ConfigError);
  EXPECT_NO_THROW(c.validate_for("generate"));
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  Checkpoint ck;
  ck.put_text("zeta", "last");
  ck.put_text("alpha", "first");
  ck.put("blob", std::vector<std::uint8_t>{0, 255, 7});
  const auto bytes = ck.serialize();
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "HTDN");
  EXPECT_EQ(bytes[4] | (bytes[5] << 8), kCheckpointVersion);
  const auto back = Checkpoint::parse(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  EXPECT_EQ(back.get_text("alpha"), "first");
  EXPECT_THROW(back.get("missing"), DataError);
}

TEST(Checkpoint, RejectsCorruption) {
  Checkpoint ck;
  ck.put_text("a", "x");
  ck.put_text("b", "y");
  auto bytes = ck.serialize();
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(Checkpoint::parse(bad_magic), DataError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(Checkpoint::parse(bad_version), DataError);
  EXPECT_THROW(Checkpoint::parse(std::span(bytes).first(bytes.size() - 1)), DataError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(Checkpoint::parse(trailing), DataError);
  // Swap the two section names so they are out of order.
  auto swapped = bytes;
  for (auto& b : swapped) {
    if (b == 'a') b = 'b';
    else if (b == 'b') b = 'a';
  }
  EXPECT_THROW(Checkpoint::parse(swapped), DataError);
}

TEST(Sha256, KnownDigests) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size())),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex({}), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(ThreadCap, ReadsTheEnvironment) {
  setenv("HTDN_THREADS", "3", 1);
  EXPECT_EQ(thread_cap(), 3u);
  setenv("HTDN_THREADS", "0", 1);
  EXPECT_THROW(thread_cap(), ConfigError);
  setenv("HTDN_THREADS", "two", 1);
  EXPECT_THROW(thread_cap(), ConfigError);
  unsetenv("HTDN_THREADS");
  EXPECT_GE(thread_cap(), 1u);
}

TEST(Commands, ExitCodesFollowTheErrorKind) {
  const auto dir = scratch("codes");
  std::ostringstream out, err;
  RunConfig bad_fraction;
  bad_fraction.out_dir = dir / "corpus";
  bad_fraction.set("generate.positive_fraction", "1.5");
  EXPECT_EQ(run_command_guarded("generate", bad_fraction, out, err), 4);
  EXPECT_FALSE(fs::exists(dir / "corpus"));

  RunConfig no_data;
  no_data.data_dir = dir / "nothing";
  EXPECT_EQ(run_command_guarded("train-embeddings", no_data, out, err), 2);

  fs::create_directories(dir / "broken");
  write_file_atomic(dir / "broken" / "ads.jsonl", std::string_view("{not json\n"));
  RunConfig broken;
  broken.data_dir = dir / "broken";
  broken.out_dir = dir / "out";
  EXPECT_EQ(run_command_guarded("train-embeddings", broken, out, err), 3);
  EXPECT_NE(err.str().find("data error"), std::string::npos);
}

TEST(Commands, AgreementOnThreeAnnotators) {
  const auto dir = scratch("agree");
  write_file_atomic(dir / "ann.csv", std::string_view("item,a,b,c\n"
                                                      "1,Certainly yes,Certainly yes,Certainly yes\n"
                                                      "2,Likely no,Likely no,Likely no\n"
                                                      "3,Unsure,Unsure,Unsure\n"));
  RunConfig c;
  c.annotations = dir / "ann.csv";
  c.out_dir = dir / "out";
  const auto summary = run_command("agreement", c);
  EXPECT_NE(summary.find("3 annotators"), std::string::npos);
  const auto j = nlohmann::json::parse(read_file_text(dir / "out" / kAgreementFile));
  EXPECT_DOUBLE_EQ(j["pairwise_agreement"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j["krippendorff_alpha"].get<double>(), 1.0);
}

// One short pass through every command on a tiny corpus.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root = scratch("pipeline");
    base.set("run.profile", "small");
    base.set("run.seed", "3");
    base.set("generate.ads", "120");
    base.set("generate.image_size", "16");
    base.set("embeddings.epochs", "1");
    base.set("train.epochs", "1");
    base.set("vision.pretrain_epochs", "1");
    base.set("data.dir", (root / "data").string());
    base.set("embeddings.path", (root / "emb" / kEmbeddingsFile).string());
    base.set("vision.backbone", (root / "vis" / kBackboneFile).string());
    base.set("train.checkpoint", (root / "model" / kModelFile).string());
    run("generate", "data");
    run("train-embeddings", "emb");
    run("pretrain-vision", "vis");
    run("train", "model");
    run("evaluate", "eval");
  }
  static void run(const char* command, const char* out) {
    RunConfig c = base;
    c.set("run.out", (root / out).string());
    summaries[command] = run_command(command, c);
  }
  static inline fs::path root;
  static inline RunConfig base;
  static inline std::map<std::string, std::string> summaries;
};

TEST_F(Pipeline, ReportHasEveryRowAndTheRule) {
  const auto lines = lines_of(root / "eval" / kReportFile);
  ASSERT_EQ(lines.size(), 18u);
  const auto header = nlohmann::json::parse(lines[0]);
  EXPECT_EQ(header["binarization"], BinarizationRule{}.describe());
  EXPECT_NE(header["config"].get<std::string>().find("profile = small"), std::string::npos);
  std::vector<std::string> names;
  for (std::size_t i = 1; i < lines.size(); ++i) names.push_back(nlohmann::json::parse(lines[i])["model"]);
  EXPECT_EQ(names.front(), "Random");
  EXPECT_EQ(names[1], "Keywords/RF");
  EXPECT_EQ(names[12], "BoW/SVM");
  EXPECT_EQ(names.back(), "HTDN");
  const auto random = nlohmann::json::parse(lines[1]);
  EXPECT_DOUBLE_EQ(random["weighted_accuracy"].get<double>(), 0.5);
  EXPECT_NE(summaries["evaluate"].find("evaluated 17 models"), std::string::npos);
}

TEST_F(Pipeline, PredictReproducesEvaluationScores) {
  RunConfig c = base;
  c.set("run.out", (root / "pred").string());
  run_command("predict", c);
  std::map<std::string, std::string> predicted;
  for (const auto& line : lines_of(root / "pred" / kPredictionsFile)) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("id")) predicted[j["id"]] = j["score"].dump();
  }
  const auto scored = lines_of(root / "eval" / kScoresFile);
  ASSERT_GT(scored.size(), 1u);
  for (std::size_t i = 1; i < scored.size(); ++i) {
    const auto j = nlohmann::json::parse(scored[i]);
    EXPECT_EQ(predicted.at(j["id"]), j["score"].dump());
  }
}

TEST_F(Pipeline, CheckpointIsCanonicalAndCarriesLineage) {
  const auto path = root / "model" / kModelFile;
  const auto bytes = read_file_bytes(path);
  const auto ck = Checkpoint::parse(bytes);
  EXPECT_EQ(ck.serialize(), bytes);
  for (const char* s : {"config", "profile", "prng", "embedding", "language", "vision", "decision", "lineage",
                        "metrics"}) {
    EXPECT_TRUE(ck.has(s)) << s;
  }
  const auto backbone_hash = sha256_hex(read_file_bytes(root / "vis" / kBackboneFile));
  EXPECT_NE(ck.get_text("lineage").find(backbone_hash), std::string::npos);
}

TEST_F(Pipeline, ProfileMismatchIsRefused) {
  RunConfig c = base;
  c.set("run.profile", "reduced");
  c.set("run.out", (root / "mismatch").string());
  std::ostringstream out, err;
  EXPECT_EQ(run_command_guarded("predict", c, out, err), 2);
  EXPECT_NE(err.str().find("profile"), std::string::npos) << err.str();
  EXPECT_FALSE(fs::exists(root / "mismatch" / kPredictionsFile));
}

}  // namespace
}  // namespace htdn
