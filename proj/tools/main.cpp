#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "htdn/errors.hpp"
#include "htdn/harness.hpp"

namespace {

// Flag name, config key, help text.
struct Override {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr Override kOverrides[] = {
    {"--seed", "run.seed", "PRNG seed"},
    {"--profile", "run.profile", "architecture profile: full, reduced or small"},
    {"--out", "run.out", "output directory"},
    {"--data", "data.dir", "dataset directory"},
    {"--keywords", "data.keywords", "keyword list, one token per line"},
    {"--annotations", "data.annotations", "annotation CSV for agreement"},
    {"--ads", "generate.ads", "number of ads to generate"},
    {"--positive-fraction", "generate.positive_fraction", "fraction of positive ads to generate"},
    {"--embeddings", "embeddings.path", "embedding artifact"},
    {"--backbone", "vision.backbone", "pretrained backbone artifact"},
    {"--checkpoint", "train.checkpoint", "model checkpoint"},
    {"--epochs", "train.epochs", "training epochs"},
    {"--lr", "train.learning_rate", "Adam learning rate"},
    {"--baselines", "evaluate.baselines", "comma-separated baseline families, or none"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal ad screening: data generation, training and evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<const Override*, std::string>> values(std::size(kOverrides));

  for (auto command : htdn::kCommands) {
    auto* sub = app.add_subcommand(std::string(command), "");
    sub->add_option("--config", config_path, "INI file with run settings; flags take precedence");
    for (std::size_t i = 0; i < std::size(kOverrides); ++i) {
      values[i].first = &kOverrides[i];
      sub->add_option(kOverrides[i].flag, values[i].second, kOverrides[i].help);
    }
    sub->add_option("--set", sets, "any config key as section.key=value (repeatable)");
  }
  app.get_subcommand("generate")->description("write a synthetic corpus, keyword list and stats to --out");
  app.get_subcommand("train-embeddings")->description("train skip-gram vectors on the training split");
  app.get_subcommand("pretrain-vision")->description("pretrain the image backbone on per-image labels");
  app.get_subcommand("train")->description("train the joint model and write a checkpoint");
  app.get_subcommand("evaluate")->description("fit every baseline and model, report held-out metrics");
  app.get_subcommand("predict")->description("score every ad of --data with a saved checkpoint");
  app.get_subcommand("agreement")->description("inter-annotator agreement of an annotation CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto* sub = app.get_subcommands().front();
  htdn::RunConfig config;
  try {
    if (!config_path.empty()) config = htdn::RunConfig::load(config_path);
    for (const auto& [o, v] : values) {
      if (sub->count(o->flag) > 0) config.set(o->key, v);
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw htdn::ConfigError("--set expects section.key=value, got '" + s + "'");
      config.set(s.substr(0, eq), s.substr(eq + 1));
    }
  } catch (const htdn::Error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  }
  return htdn::run_command_guarded(sub->get_name(), config, std::cout, std::cerr);
}
