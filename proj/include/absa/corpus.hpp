// Review dataset ingestion: XML parsing, aspect-level flattening, length
// filtering, train/test splitting, and label statistics.
//
// All functions here are pure over immutable inputs and safe to call
// concurrently.
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace absa::corpus {

inline constexpr int kNumClasses = 7;
inline constexpr int kMinRawLabel = -3;
inline constexpr int kMaxRawLabel = 3;

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bijection between raw polarity values {-3..3} and class indices {0..6}.
// The default orders raw values ascending: -3 -> 0, ..., 3 -> 6.
class LabelMap {
 public:
  LabelMap();
  explicit LabelMap(const std::array<int, kNumClasses>& raw_by_index);

  int class_index(int raw_value) const;
  int raw_value(int class_index) const;

  std::string to_string() const;  // "-3,-2,-1,0,1,2,3"
  static LabelMap from_string(std::string_view text);

  bool operator==(const LabelMap&) const = default;

 private:
  std::array<int, kNumClasses> raw_by_index_;
  std::array<int, kNumClasses> index_by_raw_;  // indexed by raw + 3
};

struct SentimentLabel {
  int raw_value = 0;
  int class_index = 0;
  bool operator==(const SentimentLabel&) const = default;
};

struct AspectAnnotation {
  std::string term;
  int polarity = 0;  // raw value in {-3..3}
  bool operator==(const AspectAnnotation&) const = default;
};

struct Review {
  std::string id;
  std::string category;
  std::string text;
  std::vector<AspectAnnotation> aspects;
  bool operator==(const Review&) const = default;
};

struct Example {
  std::string review_id;
  std::string review_text;
  std::string aspect_term;
  SentimentLabel label;
  bool operator==(const Example&) const = default;
};

struct LabelDistribution {
  std::array<std::int64_t, kNumClasses> counts{};
  std::array<double, kNumClasses> fractions{};
  std::int64_t total = 0;
};

struct AbsoluteCap {
  int max_words;
};
struct Percentile {
  double p;  // in (0, 100)
};
using LengthPolicy = std::variant<AbsoluteCap, Percentile>;

struct SplitConfig {
  double train_fraction = 0.8;
  std::uint64_t seed = 42;
  bool group_by_review = true;
};

// One Review per <review> element; unknown elements and attributes are
// ignored. Throws xml::ParseError (with byte offset) on malformed input and
// ValidationError (naming the review id) on bad annotations.
std::vector<Review> parse_dataset(std::string_view xml_bytes);

// Inverse of parse_dataset up to structural equality.
std::string serialize_dataset(const std::vector<Review>& reviews);

// One Example per (review, aspect) pair, in document order.
std::vector<Example> flatten_examples(const std::vector<Review>& reviews,
                                      const LabelMap& label_map);

// Whitespace-delimited word count.
int word_count(std::string_view text);

// Keeps reviews whose word count satisfies the policy. The percentile
// threshold uses the nearest-rank method (ceil(p/100 * n)-th smallest).
std::pair<std::vector<Review>, std::int64_t> filter_long_reviews(
    std::vector<Review> reviews, const LengthPolicy& policy);

// Deterministic seeded partition. Train side takes floor(train_fraction * n)
// units, where a unit is a review group when group_by_review is set and a
// single example otherwise.
std::pair<std::vector<Example>, std::vector<Example>> split(
    const std::vector<Example>& examples, const SplitConfig& config);

LabelDistribution label_distribution(const std::vector<Example>& examples);

// Inverse-frequency weights: w_i = total / (7 * counts_i). Errors if any
// class count is zero.
std::array<double, kNumClasses> compute_class_weights(const LabelDistribution& dist);

// Line-oriented manifest: "review_id<TAB>train|test", one line per distinct
// review id, in first-seen order (train side first).
std::string split_manifest(const std::vector<Example>& train,
                           const std::vector<Example>& test);

}  // namespace absa::corpus
