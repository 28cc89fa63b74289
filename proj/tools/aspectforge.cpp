// aspectforge: prepare a review corpus, train and evaluate the sentiment
// encoder, and run one-off predictions, enrichments, and tokenizations.
//
// Settings resolve in order: built-in defaults, then the ASPECTFORGE_SEED
// environment variable (seed only), then --config key=value entries for the
// active subcommand, then explicitly passed flags. Every prepare/train/eval
// run snapshots its resolved settings into <out>/run.cfg, which can be fed
// back through --config to reproduce the run.

#include <cstdlib>
#include <deque>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "absa/cli.hpp"

namespace {

// Flag values are kept as verbatim strings so a run.cfg snapshot preserves
// exactly what the user typed.
struct FlagBinding {
  CLI::Option* option = nullptr;
  std::string key;
  std::string* value = nullptr;  // null for boolean flags (count() decides)
};

struct SubcommandSpec {
  CLI::App* app = nullptr;
  std::string name;
  std::string config_path;
  CLI::Option* config_option = nullptr;
  std::vector<FlagBinding> bindings;
};

class FlagSet {
 public:
  void add_value(SubcommandSpec& spec, const std::string& flag,
                 const std::string& key, const std::string& help) {
    std::string* slot = &storage_.emplace_back();
    CLI::Option* opt = spec.app->add_option(flag, *slot, help);
    spec.bindings.push_back({opt, key, slot});
  }

  void add_switch(SubcommandSpec& spec, const std::string& flag,
                  const std::string& key, const std::string& help) {
    CLI::Option* opt = spec.app->add_flag(flag, help);
    spec.bindings.push_back({opt, key, nullptr});
  }

 private:
  std::deque<std::string> storage_;  // stable addresses as options accumulate
};

// defaults -> environment -> config file -> explicit flags.
absa::cli::Settings resolve(const SubcommandSpec& spec) {
  absa::cli::Settings settings = absa::cli::default_settings(spec.name);
  const std::string prefix = spec.name + ".";

  const char* env_seed = std::getenv("ASPECTFORGE_SEED");
  if (env_seed != nullptr && settings.count(prefix + "seed") > 0) {
    const std::string value = env_seed;
    std::size_t digits = 0;
    while (digits < value.size() &&
           value[digits] >= '0' && value[digits] <= '9') {
      ++digits;
    }
    if (value.empty() || digits != value.size()) {
      throw absa::cli::SettingsError(
          "environment variable ASPECTFORGE_SEED is not a non-negative "
          "integer: \"" + value + "\"");
    }
    settings[prefix + "seed"] = value;
  }

  if (spec.config_option != nullptr && spec.config_option->count() > 0) {
    absa::cli::apply_overrides(
        settings, absa::cli::load_config_file(spec.config_path), prefix);
  }

  for (const FlagBinding& binding : spec.bindings) {
    if (binding.option->count() == 0) continue;
    settings[binding.key] =
        binding.value != nullptr ? *binding.value : std::string("true");
  }
  return settings;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aspect-based sentiment analysis toolkit"};
  app.require_subcommand(1);

  FlagSet flags;
  std::vector<SubcommandSpec> specs(6);

  auto make_spec = [&](std::size_t slot, const std::string& name,
                       const std::string& help) -> SubcommandSpec& {
    SubcommandSpec& spec = specs[slot];
    spec.name = name;
    spec.app = app.add_subcommand(name, help);
    spec.config_option = spec.app->add_option(
        "--config", spec.config_path, "settings file (key=value lines)");
    return spec;
  };

  SubcommandSpec& prepare = make_spec(
      0, "prepare", "parse, filter, split, enrich, and tokenize a dataset");
  flags.add_value(prepare, "--dataset", "prepare.dataset", "review dataset XML file");
  flags.add_value(prepare, "--lexicon", "prepare.lexicon", "aspect synonym lexicon TSV");
  flags.add_value(prepare, "--vocab", "prepare.vocab",
                  "existing vocabulary file (skips the vocabulary build)");
  flags.add_value(prepare, "--vocab-target", "prepare.vocab_target",
                  "target vocabulary size when building");
  flags.add_value(prepare, "--train-fraction", "prepare.train_fraction",
                  "fraction of review groups in the train split");
  flags.add_value(prepare, "--seed", "prepare.seed", "split shuffle seed");
  flags.add_switch(prepare, "--no-enrich", "prepare.no_enrich",
                   "use the bare aspect term as the auxiliary sentence");
  flags.add_value(prepare, "--percentile", "prepare.percentile",
                  "length-filter percentile (nearest rank)");
  flags.add_value(prepare, "--max-words", "prepare.max_words",
                  "absolute review word cap (overrides --percentile when > 0)");
  flags.add_value(prepare, "--max-aux-tokens", "prepare.max_aux_tokens",
                  "word budget for the enriched auxiliary sentence");
  flags.add_value(prepare, "--out", "prepare.out", "run directory");

  SubcommandSpec& train = make_spec(1, "train", "fine-tune the classifier");
  flags.add_value(train, "--preset", "train.preset", "model size preset: toy or base");
  flags.add_value(train, "--seed", "train.seed", "initialization and shuffle seed");
  flags.add_value(train, "--lr", "train.lr", "learning rate");
  flags.add_value(train, "--beta1", "train.beta1", "first-moment decay");
  flags.add_value(train, "--beta2", "train.beta2", "second-moment decay");
  flags.add_value(train, "--epsilon", "train.epsilon", "optimizer epsilon");
  flags.add_value(train, "--weight-decay", "train.weight_decay",
                  "decoupled weight decay");
  flags.add_value(train, "--batch", "train.batch", "batch size");
  flags.add_value(train, "--epochs", "train.epochs", "training epochs");
  flags.add_value(train, "--max-len", "train.max_len",
                  "sequence length cap (0 keeps the preset default)");
  flags.add_value(train, "--dropout", "train.dropout", "dropout probability");
  flags.add_switch(train, "--class-weights", "train.class_weights",
                   "weight the loss by inverse class frequency");
  flags.add_value(train, "--out", "train.out", "run directory");

  SubcommandSpec& eval = make_spec(2, "eval", "score a checkpoint on the test split");
  flags.add_value(eval, "--checkpoint", "eval.checkpoint",
                  "checkpoint file (default <out>/checkpoints/best.ckpt)");
  flags.add_value(eval, "--vocab", "eval.vocab",
                  "vocabulary file (default <out>/prepared/vocab.txt)");
  flags.add_value(eval, "--batch", "eval.batch", "evaluation batch size");
  flags.add_value(eval, "--out", "eval.out", "run directory");

  SubcommandSpec& predict = make_spec(3, "predict",
                                      "classify one review/aspect pair");
  std::string review_arg;
  std::string aspect_arg;
  predict.app->add_option("review", review_arg, "review text")->required();
  predict.app->add_option("aspect", aspect_arg, "aspect to rate")->required();
  flags.add_value(predict, "--checkpoint", "predict.checkpoint", "checkpoint file");
  flags.add_value(predict, "--vocab", "predict.vocab", "vocabulary file");
  flags.add_value(predict, "--lexicon", "predict.lexicon", "aspect synonym lexicon TSV");
  flags.add_switch(predict, "--no-enrich", "predict.no_enrich",
                   "use the bare aspect term as the auxiliary sentence");
  flags.add_value(predict, "--max-aux-tokens", "predict.max_aux_tokens",
                  "word budget for the enriched auxiliary sentence");
  flags.add_switch(predict, "--verbose", "predict.verbose",
                   "also print the auxiliary sentence and review pieces");

  SubcommandSpec& enrich = make_spec(4, "enrich",
                                     "expand aspects from stdin, one per line");
  flags.add_value(enrich, "--lexicon", "enrich.lexicon", "aspect synonym lexicon TSV");
  flags.add_value(enrich, "--max-aux-tokens", "enrich.max_aux_tokens",
                  "word budget for each enriched sentence");

  SubcommandSpec& tokenize = make_spec(5, "tokenize",
                                       "tokenize stdin lines, one per line");
  flags.add_value(tokenize, "--vocab", "tokenize.vocab", "vocabulary file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? absa::cli::kExitOk : absa::cli::kExitUsage;
  }

  for (SubcommandSpec& spec : specs) {
    if (!spec.app->parsed()) continue;
    absa::cli::Settings settings;
    try {
      settings = resolve(spec);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return absa::cli::kExitUsage;
    }
    if (spec.name == "prepare") return absa::cli::run_prepare(settings, std::cout, std::cerr);
    if (spec.name == "train") return absa::cli::run_train(settings, std::cout, std::cerr);
    if (spec.name == "eval") return absa::cli::run_eval(settings, std::cout, std::cerr);
    if (spec.name == "predict") {
      return absa::cli::run_predict(settings, review_arg, aspect_arg, std::cout, std::cerr);
    }
    if (spec.name == "enrich") {
      return absa::cli::run_enrich(settings, std::cin, std::cout, std::cerr);
    }
    if (spec.name == "tokenize") {
      return absa::cli::run_tokenize(settings, std::cin, std::cout, std::cerr);
    }
  }
  std::cerr << "error: no subcommand given\n";
  return absa::cli::kExitUsage;
}
