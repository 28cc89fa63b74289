#include "absa/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "absa/xml.hpp"

namespace absa::corpus {

namespace {

std::array<int, kNumClasses> ascending_map() {
  std::array<int, kNumClasses> m{};
  for (int i = 0; i < kNumClasses; ++i) m[i] = kMinRawLabel + i;
  return m;
}

}  // namespace

LabelMap::LabelMap() : LabelMap(ascending_map()) {}

LabelMap::LabelMap(const std::array<int, kNumClasses>& raw_by_index)
    : raw_by_index_(raw_by_index) {
  index_by_raw_.fill(-1);
  for (int idx = 0; idx < kNumClasses; ++idx) {
    int raw = raw_by_index_[idx];
    if (raw < kMinRawLabel || raw > kMaxRawLabel)
      throw ValidationError("label map value " + std::to_string(raw) +
                            " outside {-3..3}");
    int slot = raw - kMinRawLabel;
    if (index_by_raw_[slot] != -1)
      throw ValidationError("label map repeats raw value " + std::to_string(raw));
    index_by_raw_[slot] = idx;
  }
}

int LabelMap::class_index(int raw_value) const {
  if (raw_value < kMinRawLabel || raw_value > kMaxRawLabel)
    throw ValidationError("raw label " + std::to_string(raw_value) +
                          " outside {-3..3}");
  return index_by_raw_[raw_value - kMinRawLabel];
}

int LabelMap::raw_value(int class_index) const {
  if (class_index < 0 || class_index >= kNumClasses)
    throw ValidationError("class index " + std::to_string(class_index) +
                          " outside [0,6]");
  return raw_by_index_[class_index];
}

std::string LabelMap::to_string() const {
  std::string out;
  for (int i = 0; i < kNumClasses; ++i) {
    if (i) out.push_back(',');
    out += std::to_string(raw_by_index_[i]);
  }
  return out;
}

LabelMap LabelMap::from_string(std::string_view text) {
  std::array<int, kNumClasses> vals{};
  std::size_t pos = 0;
  for (int i = 0; i < kNumClasses; ++i) {
    std::size_t comma = text.find(',', pos);
    std::string_view piece =
        (comma == std::string_view::npos) ? text.substr(pos) : text.substr(pos, comma - pos);
    try {
      vals[i] = std::stoi(std::string(piece));
    } catch (const std::exception&) {
      throw ValidationError("bad label map entry '" + std::string(piece) + "'");
    }
    if (i + 1 < kNumClasses) {
      if (comma == std::string_view::npos)
        throw ValidationError("label map needs 7 comma-separated values");
      pos = comma + 1;
    } else if (comma != std::string_view::npos) {
      throw ValidationError("label map needs exactly 7 values");
    }
  }
  return LabelMap(vals);
}

namespace {

std::string trimmed(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

int parse_polarity(const std::string& raw, const std::string& review_id) {
  std::string t = trimmed(raw);
  int value = 0;
  std::size_t used = 0;
  try {
    value = std::stoi(t, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (used != t.size() || value < kMinRawLabel || value > kMaxRawLabel)
    throw ValidationError("review '" + review_id + "': polarity '" + raw +
                          "' outside {-3..3}");
  return value;
}

}  // namespace

std::vector<Review> parse_dataset(std::string_view xml_bytes) {
  xml::Node root = xml::parse(xml_bytes);
  if (root.name != "dataset")
    throw ValidationError("root element is <" + root.name + ">, expected <dataset>");

  std::vector<Review> reviews;
  int position = 0;
  for (const xml::Node* rnode : root.children_named("review")) {
    ++position;
    Review review;
    if (const std::string* id = rnode->attr("id")) {
      review.id = *id;
    } else {
      throw ValidationError("review #" + std::to_string(position) + " is missing an id attribute");
    }
    if (const std::string* cat = rnode->attr("category")) review.category = *cat;

    const xml::Node* text_node = rnode->first_child("text");
    if (text_node == nullptr || trimmed(text_node->text).empty())
      throw ValidationError("review '" + review.id + "' has no non-empty <text>");
    review.text = text_node->text;

    std::unordered_set<std::string> seen_terms;
    if (const xml::Node* aspects = rnode->first_child("aspects")) {
      for (const xml::Node* anode : aspects->children_named("aspect")) {
        AspectAnnotation a;
        if (const std::string* term = anode->attr("term")) a.term = *term;
        if (trimmed(a.term).empty())
          throw ValidationError("review '" + review.id + "' has an aspect with an empty term");
        const std::string* pol = anode->attr("polarity");
        if (pol == nullptr)
          throw ValidationError("review '" + review.id + "': aspect '" + a.term +
                                "' is missing a polarity");
        a.polarity = parse_polarity(*pol, review.id);
        if (!seen_terms.insert(a.term).second)
          throw ValidationError("review '" + review.id + "' repeats aspect term '" + a.term + "'");
        review.aspects.push_back(std::move(a));
      }
    }
    reviews.push_back(std::move(review));
  }
  return reviews;
}

std::string serialize_dataset(const std::vector<Review>& reviews) {
  xml::Node root;
  root.name = "dataset";
  for (const Review& r : reviews) {
    xml::Node rnode;
    rnode.name = "review";
    rnode.attrs.emplace_back("id", r.id);
    rnode.attrs.emplace_back("category", r.category);
    xml::Node text;
    text.name = "text";
    text.text = r.text;
    rnode.children.push_back(std::move(text));
    xml::Node aspects;
    aspects.name = "aspects";
    for (const AspectAnnotation& a : r.aspects) {
      xml::Node anode;
      anode.name = "aspect";
      anode.attrs.emplace_back("term", a.term);
      anode.attrs.emplace_back("polarity", std::to_string(a.polarity));
      aspects.children.push_back(std::move(anode));
    }
    rnode.children.push_back(std::move(aspects));
    root.children.push_back(std::move(rnode));
  }
  return xml::serialize(root);
}

std::vector<Example> flatten_examples(const std::vector<Review>& reviews,
                                      const LabelMap& label_map) {
  std::vector<Example> out;
  for (const Review& r : reviews) {
    for (const AspectAnnotation& a : r.aspects) {
      Example ex;
      ex.review_id = r.id;
      ex.review_text = r.text;
      ex.aspect_term = a.term;
      ex.label.raw_value = a.polarity;
      ex.label.class_index = label_map.class_index(a.polarity);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

int word_count(std::string_view text) {
  int count = 0;
  bool in_word = false;
  for (char c : text) {
    bool ws = (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v');
    if (!ws && !in_word) ++count;
    in_word = !ws;
  }
  return count;
}

std::pair<std::vector<Review>, std::int64_t> filter_long_reviews(
    std::vector<Review> reviews, const LengthPolicy& policy) {
  if (reviews.empty()) return {std::move(reviews), 0};

  int threshold = 0;
  if (const AbsoluteCap* cap = std::get_if<AbsoluteCap>(&policy)) {
    if (cap->max_words < 1) throw ValidationError("absolute length cap must be >= 1");
    threshold = cap->max_words;
  } else {
    const Percentile& pct = std::get<Percentile>(policy);
    if (!(pct.p > 0.0 && pct.p < 100.0))
      throw ValidationError("length percentile must be in (0,100)");
    std::vector<int> counts;
    counts.reserve(reviews.size());
    for (const Review& r : reviews) counts.push_back(word_count(r.text));
    std::sort(counts.begin(), counts.end());
    auto rank = static_cast<std::size_t>(
        std::ceil(pct.p / 100.0 * static_cast<double>(counts.size())));
    if (rank < 1) rank = 1;
    threshold = counts[rank - 1];
  }

  std::vector<Review> kept;
  kept.reserve(reviews.size());
  for (Review& r : reviews) {
    if (word_count(r.text) <= threshold) kept.push_back(std::move(r));
  }
  std::int64_t removed = static_cast<std::int64_t>(reviews.size()) -
                         static_cast<std::int64_t>(kept.size());
  return {std::move(kept), removed};
}

std::pair<std::vector<Example>, std::vector<Example>> split(
    const std::vector<Example>& examples, const SplitConfig& config) {
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0))
    throw ValidationError("train_fraction must be in (0,1)");

  std::vector<Example> train;
  std::vector<Example> test;
  std::mt19937_64 rng(config.seed);

  if (config.group_by_review) {
    std::vector<std::string> group_order;
    std::unordered_map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      auto [it, fresh] = groups.try_emplace(examples[i].review_id);
      if (fresh) group_order.push_back(examples[i].review_id);
      it->second.push_back(i);
    }
    if (group_order.size() < 2)
      throw ValidationError("grouped split needs at least 2 distinct review ids");
    std::shuffle(group_order.begin(), group_order.end(), rng);
    auto n_train = static_cast<std::size_t>(
        std::floor(config.train_fraction * static_cast<double>(group_order.size())));
    std::unordered_set<std::string> train_groups(group_order.begin(),
                                                 group_order.begin() + static_cast<std::ptrdiff_t>(n_train));
    for (const Example& ex : examples) {
      (train_groups.contains(ex.review_id) ? train : test).push_back(ex);
    }
  } else {
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    auto n_train = static_cast<std::size_t>(
        std::floor(config.train_fraction * static_cast<double>(order.size())));
    std::vector<char> is_train(examples.size(), 0);
    for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = 1;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      (is_train[i] ? train : test).push_back(examples[i]);
    }
  }
  return {std::move(train), std::move(test)};
}

LabelDistribution label_distribution(const std::vector<Example>& examples) {
  LabelDistribution dist;
  for (const Example& ex : examples) {
    if (ex.label.class_index < 0 || ex.label.class_index >= kNumClasses)
      throw ValidationError("class index out of range in label distribution");
    ++dist.counts[static_cast<std::size_t>(ex.label.class_index)];
  }
  dist.total = static_cast<std::int64_t>(examples.size());
  if (dist.total > 0) {
    for (int i = 0; i < kNumClasses; ++i)
      dist.fractions[i] = static_cast<double>(dist.counts[i]) / static_cast<double>(dist.total);
  }
  return dist;
}

std::array<double, kNumClasses> compute_class_weights(const LabelDistribution& dist) {
  std::array<double, kNumClasses> weights{};
  for (int i = 0; i < kNumClasses; ++i) {
    if (dist.counts[i] <= 0)
      throw ValidationError(
          "class " + std::to_string(i) +
          " has zero examples; disable class weighting or merge classes");
    weights[i] = static_cast<double>(dist.total) /
                 (static_cast<double>(kNumClasses) * static_cast<double>(dist.counts[i]));
  }
  return weights;
}

std::string split_manifest(const std::vector<Example>& train,
                           const std::vector<Example>& test) {
  std::ostringstream out;
  std::unordered_set<std::string> seen;
  for (const Example& ex : train) {
    if (seen.insert(ex.review_id).second) out << ex.review_id << "\ttrain\n";
  }
  for (const Example& ex : test) {
    if (seen.insert(ex.review_id).second) out << ex.review_id << "\ttest\n";
  }
  return out.str();
}

}  // namespace absa::corpus
