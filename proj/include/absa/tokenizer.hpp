// WordPiece tokenization and sentence-pair encoding.
//
// A Vocabulary is immutable after construction; tokenization and encoding
// are pure functions and safe to call concurrently.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace absa::tokenizer {

class VocabError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reserved token ids. These occupy the first five vocabulary slots.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kMaskId = 3;
inline constexpr int kSepId = 4;
inline constexpr int kNumReserved = 5;
inline constexpr std::size_t kMaxVocabSize = 100'000;

extern const char* const kReservedTokens[kNumReserved];  // "[PAD]".."[SEP]"

class Vocabulary {
 public:
  // One token per line, ids by line order. The first five lines must be the
  // reserved tokens in id order. Errors: duplicate token (names both lines),
  // empty line before EOF, wrong/missing reserved tokens, size cap.
  static Vocabulary load(std::string_view text_bytes);

  // Toy-scale BPE-style builder: reserved tokens, then every corpus
  // character as both its word-initial form and its "##" continuation form
  // (lexicographic by character), then greedy highest-frequency adjacent
  // pair merges until target_size is reached or no pair repeats. Fully
  // deterministic; frequency ties break lexicographically on the pair.
  static Vocabulary build(const std::vector<std::string>& corpus,
                          std::size_t target_size);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const;      // throws VocabError if out of range
  std::optional<int> id_of(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::string to_text() const;  // inverse of load(): one token per line

  // FNV-1a 64-bit digest over the newline-joined token list; used to detect
  // checkpoint/vocabulary mismatches.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;

  void append(std::string token);  // no duplicate check
};

struct EncodedPair {
  std::vector<int> ids;             // length == max_len
  std::vector<int> segment_ids;     // 0 through the first [SEP], then 1
  std::vector<int> attention_mask;  // 1 for true_length positions, 0 on pad
  int true_length = 0;              // position just past the second [SEP]
};

// Splits text on Unicode whitespace and breaks punctuation (ASCII plus
// Persian "،؛؟" and guillemets) into standalone tokens. ZWNJ (U+200C) is a
// word character. Never fails.
std::vector<std::string> pre_tokenize(std::string_view text);

// Greedy longest-match-first segmentation of a single whitespace-free word;
// non-initial pieces carry the "##" prefix. Returns {"[UNK]"} when no
// segmentation covers the word.
std::vector<std::string> wordpiece_tokenize(std::string_view word,
                                            const Vocabulary& vocab);

// Convenience: pre_tokenize then wordpiece each word, concatenated.
std::vector<std::string> tokenize_text(std::string_view text,
                                       const Vocabulary& vocab);

// Lays out [CLS] review… [SEP] auxiliary… [SEP] [PAD]…. When over budget the
// review is truncated from its tail first (it may vanish entirely); only
// then is the auxiliary truncated from its tail, never below the pieces of
// its first word. Errors: empty review/auxiliary after trim, max_len < 8,
// or an auxiliary whose first word plus the three special tokens cannot fit.
EncodedPair encode_pair(std::string_view review, std::string_view auxiliary,
                        const Vocabulary& vocab, int max_len);

// Drops reserved tokens, splices "##" continuations onto their predecessor,
// joins words with single spaces. Throws VocabError on out-of-range ids.
std::string decode(const std::vector<int>& ids, const Vocabulary& vocab);

}  // namespace absa::tokenizer
