#include "absa/cli.hpp"

#include <algorithm>
#include <array>
#include <cerrno>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <utility>
#include <vector>

#include <json.hpp>

#include "absa/corpus.hpp"
#include "absa/eval.hpp"
#include "absa/lexicon.hpp"
#include "absa/model.hpp"
#include "absa/tokenizer.hpp"
#include "absa/train.hpp"

namespace absa::cli {
namespace {

namespace fs = std::filesystem;

std::string trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && (std::isspace(static_cast<unsigned char>(text[begin])) != 0)) ++begin;
  while (end > begin && (std::isspace(static_cast<unsigned char>(text[end - 1])) != 0)) --end;
  return std::string(text.substr(begin, end - begin));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SettingsError("cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw SettingsError("cannot read file: " + path);
  return buffer.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SettingsError("cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw SettingsError("cannot write file: " + path);
}

std::string hex_fingerprint(std::uint64_t value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "0x%016" PRIx64, value);
  return buffer;
}

// Tabs and line breaks are column/row separators in the prepared TSV files,
// so they are flattened to single spaces inside every field.
std::string sanitize_field(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

struct PreparedRow {
  std::string review_id;
  int raw_label = 0;
  std::string text;
  std::string auxiliary;
};

std::string render_rows(const std::vector<PreparedRow>& rows) {
  std::string out;
  for (const PreparedRow& row : rows) {
    out += sanitize_field(row.review_id);
    out += '\t';
    out += std::to_string(row.raw_label);
    out += '\t';
    out += sanitize_field(row.text);
    out += '\t';
    out += sanitize_field(row.auxiliary);
    out += '\n';
  }
  return out;
}

std::vector<PreparedRow> parse_rows(const std::string& path) {
  const std::string bytes = read_file(path);
  std::vector<PreparedRow> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    std::size_t eol = bytes.find('\n', pos);
    if (eol == std::string::npos) eol = bytes.size();
    std::string line = bytes.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string, 4> fields;
    std::size_t field = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        if (field >= fields.size()) {
          throw SettingsError(path + " line " + std::to_string(line_no) +
                              ": expected 4 tab-separated fields");
        }
        fields[field++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    if (field != fields.size()) {
      throw SettingsError(path + " line " + std::to_string(line_no) +
                          ": expected 4 tab-separated fields");
    }
    PreparedRow row;
    row.review_id = fields[0];
    errno = 0;
    char* end = nullptr;
    long raw = std::strtol(fields[1].c_str(), &end, 10);
    if (errno != 0 || end == fields[1].c_str() || *end != '\0') {
      throw SettingsError(path + " line " + std::to_string(line_no) +
                          ": label is not an integer: \"" + fields[1] + "\"");
    }
    row.raw_label = static_cast<int>(raw);
    row.text = fields[2];
    row.auxiliary = fields[3];
    rows.push_back(std::move(row));
  }
  return rows;
}

const std::string& require_path(const Settings& s, const std::string& key,
                                const std::string& flag) {
  const std::string& value = get(s, key);
  if (value.empty()) throw SettingsError("missing required option " + flag);
  return value;
}

// Splits rows into encoder-ready examples; labels go through the label map.
std::vector<train::LabeledExample> encode_rows(
    const std::vector<PreparedRow>& rows, const tokenizer::Vocabulary& vocab,
    const corpus::LabelMap& labels, long max_len, const std::string& origin) {
  std::vector<train::LabeledExample> encoded;
  encoded.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const PreparedRow& row = rows[i];
    try {
      train::LabeledExample ex;
      ex.pair = tokenizer::encode_pair(row.text, row.auxiliary, vocab,
                                       static_cast<int>(max_len));
      ex.label = labels.class_index(row.raw_label);
      encoded.push_back(std::move(ex));
    } catch (const std::exception& e) {
      throw SettingsError(origin + " row " + std::to_string(i + 1) + " (review " +
                          row.review_id + "): " + e.what());
    }
  }
  return encoded;
}

struct Predictions {
  std::vector<int> predicted;
  std::vector<std::vector<double>> scores;
  double mean_loss = 0.0;
};

// Evaluation-mode predictions in fixed-size batches.
Predictions predict_all(const std::vector<train::LabeledExample>& examples,
                        const model::Parameters& params, long batch_size) {
  Predictions result;
  result.predicted.reserve(examples.size());
  result.scores.reserve(examples.size());
  const long n_labels = params.config.n_labels;
  double loss_sum = 0.0;
  for (std::size_t begin = 0; begin < examples.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(examples.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<tokenizer::EncodedPair> pairs;
    pairs.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) pairs.push_back(examples[i].pair);
    model::Batch batch = model::Batch::from_pairs(pairs);
    model::ClassifierOutput out = model::predict(batch, params);
    const std::vector<double>& probs = out.probabilities.values();
    for (std::size_t i = 0; i < end - begin; ++i) {
      std::vector<double> row(probs.begin() + static_cast<long>(i) * n_labels,
                              probs.begin() + static_cast<long>(i + 1) * n_labels);
      int argmax = 0;
      for (int c = 1; c < static_cast<int>(n_labels); ++c) {
        if (row[static_cast<std::size_t>(c)] > row[static_cast<std::size_t>(argmax)]) argmax = c;
      }
      const int label = examples[begin + i].label;
      loss_sum += -std::log(std::max(row[static_cast<std::size_t>(label)], 1e-300));
      result.predicted.push_back(argmax);
      result.scores.push_back(std::move(row));
    }
  }
  if (!examples.empty()) result.mean_loss = loss_sum / static_cast<double>(examples.size());
  return result;
}

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6f", value);
  return buffer;
}

// Every domain failure (bad input, bad file, bad configuration) derives from
// runtime_error or invalid_argument and exits 2; anything else is a bug and
// exits 1.
template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace

Settings default_settings(const std::string& subcommand) {
  Settings s;
  if (subcommand == "prepare") {
    s["prepare.dataset"] = "";
    s["prepare.lexicon"] = "";
    s["prepare.vocab"] = "";
    s["prepare.vocab_target"] = "4000";
    s["prepare.train_fraction"] = "0.8";
    s["prepare.seed"] = "42";
    s["prepare.no_enrich"] = "false";
    s["prepare.percentile"] = "95";
    s["prepare.max_words"] = "0";
    s["prepare.max_aux_tokens"] = "32";
    s["prepare.out"] = "run";
  } else if (subcommand == "train") {
    s["train.preset"] = "toy";
    s["train.seed"] = "42";
    s["train.lr"] = "0.0001";
    s["train.beta1"] = "0.9";
    s["train.beta2"] = "0.98";
    s["train.epsilon"] = "1e-08";
    s["train.weight_decay"] = "0.01";
    s["train.batch"] = "32";
    s["train.epochs"] = "20";
    s["train.max_len"] = "0";
    s["train.dropout"] = "0.1";
    s["train.class_weights"] = "false";
    s["train.out"] = "run";
  } else if (subcommand == "eval") {
    s["eval.checkpoint"] = "";
    s["eval.vocab"] = "";
    s["eval.batch"] = "32";
    s["eval.out"] = "run";
  } else if (subcommand == "predict") {
    s["predict.checkpoint"] = "";
    s["predict.vocab"] = "";
    s["predict.lexicon"] = "";
    s["predict.no_enrich"] = "false";
    s["predict.verbose"] = "false";
    s["predict.max_aux_tokens"] = "32";
  } else if (subcommand == "enrich") {
    s["enrich.lexicon"] = "";
    s["enrich.max_aux_tokens"] = "32";
  } else if (subcommand == "tokenize") {
    s["tokenize.vocab"] = "";
  } else {
    throw SettingsError("unknown subcommand: " + subcommand);
  }
  return s;
}

Settings parse_config_text(std::string_view text) {
  Settings s;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string line(text.substr(pos, eol - pos));
    const bool last = eol == text.size();
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') {
      if (last) break;
      continue;
    }
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw SettingsError("config line " + std::to_string(line_no) +
                          ": expected key=value, got \"" + stripped + "\"");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    s[key] = value;
    if (last) break;
  }
  return s;
}

Settings load_config_file(const std::string& path) {
  try {
    return parse_config_text(read_file(path));
  } catch (const SettingsError& e) {
    throw SettingsError(path + ": " + e.what());
  }
}

void apply_overrides(Settings& base, const Settings& over,
                     const std::string& prefix) {
  for (const auto& [key, value] : over) {
    if (key.rfind(prefix, 0) != 0) continue;
    auto it = base.find(key);
    if (it == base.end()) throw SettingsError("unknown setting '" + key + "'");
    it->second = value;
  }
}

void write_run_cfg(const std::string& run_dir, const Settings& resolved) {
  fs::create_directories(run_dir);
  const std::string path = (fs::path(run_dir) / "run.cfg").string();
  Settings merged;
  if (fs::exists(path)) {
    try {
      merged = parse_config_text(read_file(path));
    } catch (const SettingsError&) {
      merged.clear();  // a hand-damaged snapshot is rebuilt from scratch
    }
  }
  for (const auto& [key, value] : resolved) merged[key] = value;
  std::string out;
  for (const auto& [key, value] : merged) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  write_file(path, out);
}

const std::string& get(const Settings& s, const std::string& key) {
  auto it = s.find(key);
  if (it == s.end()) throw SettingsError("missing setting '" + key + "'");
  return it->second;
}

long get_long(const Settings& s, const std::string& key) {
  const std::string& value = get(s, key);
  errno = 0;
  char* end = nullptr;
  const long parsed = std::strtol(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0') {
    throw SettingsError("setting '" + key + "' is not an integer: \"" + value + "\"");
  }
  return parsed;
}

double get_double(const Settings& s, const std::string& key) {
  const std::string& value = get(s, key);
  errno = 0;
  char* end = nullptr;
  const double parsed = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0' || !std::isfinite(parsed)) {
    throw SettingsError("setting '" + key + "' is not a finite number: \"" + value + "\"");
  }
  return parsed;
}

bool get_bool(const Settings& s, const std::string& key) {
  std::string value = get(s, key);
  std::transform(value.begin(), value.end(), value.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw SettingsError("setting '" + key + "' is not a boolean: \"" + get(s, key) + "\"");
}

int run_prepare(const Settings& s, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const std::string& dataset_path = require_path(s, "prepare.dataset", "--dataset");
    const bool no_enrich = get_bool(s, "prepare.no_enrich");
    const long max_aux_tokens = get_long(s, "prepare.max_aux_tokens");
    const double train_fraction = get_double(s, "prepare.train_fraction");
    const long seed = get_long(s, "prepare.seed");
    if (seed < 0) throw SettingsError("setting 'prepare.seed' must be non-negative");
    const long max_words = get_long(s, "prepare.max_words");
    const double percentile = get_double(s, "prepare.percentile");
    const long vocab_target = get_long(s, "prepare.vocab_target");
    const std::string& out_dir = get(s, "prepare.out");
    if (out_dir.empty()) throw SettingsError("setting 'prepare.out' must not be empty");

    lexicon::Lexicon lex;
    if (!no_enrich) {
      const std::string& lex_path = require_path(s, "prepare.lexicon", "--lexicon");
      lex = lexicon::Lexicon::from_tsv(read_file(lex_path));
    }

    const std::vector<corpus::Review> reviews = corpus::parse_dataset(read_file(dataset_path));
    corpus::LengthPolicy policy;
    if (max_words > 0) {
      policy = corpus::AbsoluteCap{static_cast<int>(max_words)};
    } else {
      policy = corpus::Percentile{percentile};
    }
    auto [kept, removed] = corpus::filter_long_reviews(reviews, policy);

    const corpus::LabelMap labels;
    const std::vector<corpus::Example> examples = corpus::flatten_examples(kept, labels);
    corpus::SplitConfig split_config;
    split_config.train_fraction = train_fraction;
    split_config.seed = static_cast<std::uint64_t>(seed);
    auto [train_side, test_side] = corpus::split(examples, split_config);
    const corpus::LabelDistribution dist = corpus::label_distribution(examples);

    auto to_rows = [&](const std::vector<corpus::Example>& side) {
      std::vector<PreparedRow> rows;
      rows.reserve(side.size());
      for (const corpus::Example& ex : side) {
        PreparedRow row;
        row.review_id = ex.review_id;
        row.raw_label = ex.label.raw_value;
        row.text = ex.review_text;
        row.auxiliary =
            no_enrich ? ex.aspect_term
                      : lexicon::enrich_aspect(lex, ex.aspect_term,
                                               static_cast<int>(max_aux_tokens))
                            .rendered;
        rows.push_back(std::move(row));
      }
      return rows;
    };
    const std::vector<PreparedRow> train_rows = to_rows(train_side);
    const std::vector<PreparedRow> test_rows = to_rows(test_side);

    tokenizer::Vocabulary vocab;
    const std::string& vocab_path = get(s, "prepare.vocab");
    if (!vocab_path.empty()) {
      vocab = tokenizer::Vocabulary::load(read_file(vocab_path));
    } else {
      if (vocab_target < static_cast<long>(tokenizer::kNumReserved)) {
        throw SettingsError("setting 'prepare.vocab_target' must be at least " +
                            std::to_string(tokenizer::kNumReserved));
      }
      std::vector<std::string> corpus_lines;
      corpus_lines.reserve(train_rows.size() * 2);
      for (const PreparedRow& row : train_rows) {
        corpus_lines.push_back(row.text);
        corpus_lines.push_back(row.auxiliary);
      }
      vocab = tokenizer::Vocabulary::build(corpus_lines,
                                           static_cast<std::size_t>(vocab_target));
    }

    const fs::path prepared = fs::path(out_dir) / "prepared";
    fs::create_directories(prepared);
    write_file((prepared / "train.tsv").string(), render_rows(train_rows));
    write_file((prepared / "test.tsv").string(), render_rows(test_rows));
    write_file((prepared / "split.tsv").string(),
               corpus::split_manifest(train_side, test_side));
    write_file((prepared / "vocab.txt").string(), vocab.to_text());

    nlohmann::ordered_json stats;
    stats["dataset"] = dataset_path;
    stats["reviews_total"] = reviews.size();
    stats["reviews_kept"] = kept.size();
    stats["removed_reviews"] = removed;
    if (max_words > 0) {
      stats["length_policy"] = {{"kind", "max_words"}, {"value", max_words}};
    } else {
      stats["length_policy"] = {{"kind", "percentile"}, {"value", percentile}};
    }
    stats["examples_total"] = examples.size();
    stats["train_examples"] = train_rows.size();
    stats["test_examples"] = test_rows.size();
    stats["seed"] = seed;
    stats["train_fraction"] = train_fraction;
    stats["enriched"] = !no_enrich;
    std::vector<int> label_values;
    for (int c = 0; c < corpus::kNumClasses; ++c) label_values.push_back(labels.raw_value(c));
    stats["label_values"] = label_values;
    stats["label_counts"] = dist.counts;
    stats["label_fractions"] = dist.fractions;
    stats["vocab_size"] = vocab.size();
    stats["vocab_fingerprint"] = hex_fingerprint(vocab.fingerprint());
    write_file((prepared / "stats.json").string(), stats.dump(2) + "\n");

    write_run_cfg(out_dir, s);

    out << "reviews: " << kept.size() << " kept, " << removed << " removed\n";
    out << "examples: " << examples.size() << " total (train " << train_rows.size()
        << ", test " << test_rows.size() << ")\n";
    out << "vocab: " << vocab.size() << " tokens (fingerprint "
        << hex_fingerprint(vocab.fingerprint()) << ")\n";
    out << "wrote " << prepared.string() << "\n";
    return kExitOk;
  });
}

int run_train(const Settings& s, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const std::string& out_dir = get(s, "train.out");
    const fs::path prepared = fs::path(out_dir) / "prepared";
    for (const char* name : {"train.tsv", "test.tsv", "vocab.txt"}) {
      if (!fs::exists(prepared / name)) {
        throw SettingsError("missing " + (prepared / name).string() +
                            " (run the prepare subcommand first)");
      }
    }
    const std::vector<PreparedRow> train_rows = parse_rows((prepared / "train.tsv").string());
    const std::vector<PreparedRow> test_rows = parse_rows((prepared / "test.tsv").string());
    const tokenizer::Vocabulary vocab =
        tokenizer::Vocabulary::load(read_file((prepared / "vocab.txt").string()));

    const std::string& preset = get(s, "train.preset");
    model::ModelConfig config;
    if (preset == "toy") {
      config = model::ModelConfig::toy(static_cast<long>(vocab.size()));
    } else if (preset == "base") {
      config = model::ModelConfig::base(static_cast<long>(vocab.size()));
    } else {
      throw SettingsError("setting 'train.preset' must be toy or base, got \"" +
                          preset + "\"");
    }
    const long max_len = get_long(s, "train.max_len");
    if (max_len > 0) config.max_len = max_len;
    config.dropout = get_double(s, "train.dropout");
    config.validate();

    const corpus::LabelMap labels;
    const std::vector<train::LabeledExample> train_set =
        encode_rows(train_rows, vocab, labels, config.max_len, "train.tsv");
    const std::vector<train::LabeledExample> test_set =
        encode_rows(test_rows, vocab, labels, config.max_len, "test.tsv");

    train::TrainConfig tc;
    tc.learning_rate = get_double(s, "train.lr");
    tc.beta1 = get_double(s, "train.beta1");
    tc.beta2 = get_double(s, "train.beta2");
    tc.epsilon = get_double(s, "train.epsilon");
    tc.weight_decay = get_double(s, "train.weight_decay");
    tc.batch_size = get_long(s, "train.batch");
    tc.epochs = get_long(s, "train.epochs");
    const long seed = get_long(s, "train.seed");
    if (seed < 0) throw SettingsError("setting 'train.seed' must be non-negative");
    tc.seed = static_cast<std::uint64_t>(seed);
    if (get_bool(s, "train.class_weights")) {
      corpus::LabelDistribution dist;
      for (const PreparedRow& row : train_rows) {
        dist.counts[static_cast<std::size_t>(labels.class_index(row.raw_label))] += 1;
        dist.total += 1;
      }
      for (int c = 0; c < corpus::kNumClasses; ++c) {
        dist.fractions[static_cast<std::size_t>(c)] =
            dist.total == 0 ? 0.0
                            : static_cast<double>(dist.counts[static_cast<std::size_t>(c)]) /
                                  static_cast<double>(dist.total);
      }
      const auto weights = corpus::compute_class_weights(dist);
      tc.class_weights.assign(weights.begin(), weights.end());
    }
    tc.validate(config.n_labels);

    const model::Parameters initial =
        model::Parameters::init(config, static_cast<std::uint64_t>(seed));
    out << "model: " << preset << " preset, " << model::param_count(config)
        << " parameters, vocab " << vocab.size() << "\n";
    out << "training on " << train_set.size() << " examples, evaluating on "
        << test_set.size() << "\n";

    const train::TrainResult result = train::train_loop(train_set, test_set, initial, tc);

    for (const train::EpochRecord& epoch : result.history.epochs) {
      out << "epoch " << epoch.epoch << ": train_loss=" << format_double(epoch.train_loss)
          << " train_acc=" << format_double(epoch.train_accuracy)
          << " eval_loss=" << format_double(epoch.eval_loss)
          << " eval_acc=" << format_double(epoch.eval_accuracy) << "\n";
    }

    const fs::path reports = fs::path(out_dir) / "reports";
    const fs::path checkpoints = fs::path(out_dir) / "checkpoints";
    fs::create_directories(reports);
    fs::create_directories(checkpoints);
    write_file((reports / "history.csv").string(), result.history.to_csv());
    const std::string ckpt_path = (checkpoints / "best.ckpt").string();
    model::save_checkpoint(ckpt_path, result.best_params, vocab.fingerprint(),
                           labels.to_string());
    out << "wrote " << ckpt_path << " (best epoch " << result.best_epoch << ")\n";

    write_run_cfg(out_dir, s);

    if (result.diverged) {
      err << "error: training diverged (non-finite loss); last good checkpoint kept\n";
      return kExitDiverged;
    }

    const Predictions preds = predict_all(test_set, result.best_params, tc.batch_size);
    std::vector<int> actual;
    actual.reserve(test_set.size());
    for (const train::LabeledExample& ex : test_set) actual.push_back(ex.label);
    const eval::MetricsReport report =
        eval::compute_report(actual, preds.predicted, preds.scores, labels);
    out << "final: eval_accuracy=" << format_double(report.accuracy)
        << " eval_macro_f1=" << format_double(report.macro_avg.f1) << "\n";
    return kExitOk;
  });
}

int run_eval(const Settings& s, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const std::string& out_dir = get(s, "eval.out");
    const fs::path prepared = fs::path(out_dir) / "prepared";
    std::string ckpt_path = get(s, "eval.checkpoint");
    if (ckpt_path.empty()) {
      ckpt_path = (fs::path(out_dir) / "checkpoints" / "best.ckpt").string();
    }
    if (!fs::exists(ckpt_path)) {
      throw SettingsError("missing checkpoint " + ckpt_path +
                          " (run the train subcommand first)");
    }
    std::string vocab_path = get(s, "eval.vocab");
    if (vocab_path.empty()) vocab_path = (prepared / "vocab.txt").string();

    const model::Checkpoint ckpt = model::load_checkpoint(ckpt_path);
    const tokenizer::Vocabulary vocab = tokenizer::Vocabulary::load(read_file(vocab_path));
    if (vocab.fingerprint() != ckpt.vocab_fingerprint) {
      throw SettingsError("vocabulary fingerprint mismatch: checkpoint has " +
                          hex_fingerprint(ckpt.vocab_fingerprint) + ", " + vocab_path +
                          " has " + hex_fingerprint(vocab.fingerprint()));
    }
    const corpus::LabelMap labels = corpus::LabelMap::from_string(ckpt.label_map);

    const std::string test_path = (prepared / "test.tsv").string();
    if (!fs::exists(test_path)) {
      throw SettingsError("missing " + test_path + " (run the prepare subcommand first)");
    }
    const std::vector<PreparedRow> test_rows = parse_rows(test_path);
    const std::vector<train::LabeledExample> test_set =
        encode_rows(test_rows, vocab, labels, ckpt.params.config.max_len, "test.tsv");
    if (test_set.empty()) throw SettingsError("test split is empty");

    const long batch = get_long(s, "eval.batch");
    if (batch < 1) throw SettingsError("setting 'eval.batch' must be positive");
    const Predictions preds = predict_all(test_set, ckpt.params, batch);
    std::vector<int> actual;
    actual.reserve(test_set.size());
    for (const train::LabeledExample& ex : test_set) actual.push_back(ex.label);
    const eval::MetricsReport report =
        eval::compute_report(actual, preds.predicted, preds.scores, labels);

    const fs::path reports = fs::path(out_dir) / "reports";
    fs::create_directories(reports);
    write_file((reports / "report.json").string(), eval::render_report(report) + "\n");
    write_file((reports / "confusion.csv").string(), report.confusion.to_csv());
    write_file((reports / "pr_curve.csv").string(), report.pr_curve.to_csv());

    write_run_cfg(out_dir, s);

    out << "examples: " << test_set.size() << "\n";
    out << "accuracy=" << format_double(report.accuracy) << "\n";
    out << "macro_precision=" << format_double(report.macro_avg.precision)
        << " macro_recall=" << format_double(report.macro_avg.recall)
        << " macro_f1=" << format_double(report.macro_avg.f1) << "\n";
    out << "weighted_precision=" << format_double(report.weighted_avg.precision)
        << " weighted_recall=" << format_double(report.weighted_avg.recall)
        << " weighted_f1=" << format_double(report.weighted_avg.f1) << "\n";
    out << "pr_auc_micro=" << format_double(report.pr_auc_micro) << "\n";
    out << "wrote " << reports.string() << "\n";
    return kExitOk;
  });
}

int run_predict(const Settings& s, const std::string& review,
                const std::string& aspect, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const std::string review_text = trim(review);
    const std::string aspect_text = trim(aspect);
    if (review_text.empty()) throw SettingsError("review text is empty");
    if (aspect_text.empty()) throw SettingsError("aspect is empty");

    const std::string& ckpt_path = require_path(s, "predict.checkpoint", "--checkpoint");
    const std::string& vocab_path = require_path(s, "predict.vocab", "--vocab");
    const model::Checkpoint ckpt = model::load_checkpoint(ckpt_path);
    const tokenizer::Vocabulary vocab = tokenizer::Vocabulary::load(read_file(vocab_path));
    if (vocab.fingerprint() != ckpt.vocab_fingerprint) {
      throw SettingsError("vocabulary fingerprint mismatch: checkpoint has " +
                          hex_fingerprint(ckpt.vocab_fingerprint) + ", " + vocab_path +
                          " has " + hex_fingerprint(vocab.fingerprint()));
    }
    const corpus::LabelMap labels = corpus::LabelMap::from_string(ckpt.label_map);

    std::string auxiliary = aspect_text;
    if (!get_bool(s, "predict.no_enrich")) {
      const std::string& lex_path = require_path(s, "predict.lexicon", "--lexicon");
      const lexicon::Lexicon lex = lexicon::Lexicon::from_tsv(read_file(lex_path));
      auxiliary = lexicon::enrich_aspect(
                      lex, aspect_text,
                      static_cast<int>(get_long(s, "predict.max_aux_tokens")))
                      .rendered;
    }

    tokenizer::EncodedPair pair = tokenizer::encode_pair(
        review_text, auxiliary, vocab, static_cast<int>(ckpt.params.config.max_len));
    const model::Batch batch = model::Batch::from_pairs({pair});
    const model::ClassifierOutput result = model::predict(batch, ckpt.params);
    const std::vector<double>& probs = result.probabilities.values();
    int argmax = 0;
    for (int c = 1; c < corpus::kNumClasses; ++c) {
      if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(argmax)]) argmax = c;
    }

    if (get_bool(s, "predict.verbose")) {
      out << "auxiliary: " << auxiliary << "\n";
      std::vector<std::string> pieces = tokenizer::tokenize_text(review_text, vocab);
      out << "review_pieces:";
      for (const std::string& piece : pieces) out << ' ' << piece;
      out << "\n";
    }
    out << "label_raw=" << labels.raw_value(argmax) << "\n";
    out << "class_index=" << argmax << "\n";
    out << "probabilities=";
    for (int c = 0; c < corpus::kNumClasses; ++c) {
      if (c > 0) out << ' ';
      out << format_double(probs[static_cast<std::size_t>(c)]);
    }
    out << "\n";
    return kExitOk;
  });
}

int run_enrich(const Settings& s, std::istream& in, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&]() -> int {
    const std::string& lex_path = require_path(s, "enrich.lexicon", "--lexicon");
    const lexicon::Lexicon lex = lexicon::Lexicon::from_tsv(read_file(lex_path));
    const long max_aux_tokens = get_long(s, "enrich.max_aux_tokens");
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string aspect = trim(line);
      if (aspect.empty()) {
        out << "\n";
        continue;
      }
      out << lexicon::enrich_aspect(lex, aspect, static_cast<int>(max_aux_tokens)).rendered
          << "\n";
    }
    return kExitOk;
  });
}

int run_tokenize(const Settings& s, std::istream& in, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&]() -> int {
    const std::string& vocab_path = require_path(s, "tokenize.vocab", "--vocab");
    const tokenizer::Vocabulary vocab = tokenizer::Vocabulary::load(read_file(vocab_path));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::vector<std::string> pieces = tokenizer::tokenize_text(line, vocab);
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (i > 0) out << ' ';
        out << pieces[i];
      }
      out << "\n";
    }
    return kExitOk;
  });
}

}  // namespace absa::cli
