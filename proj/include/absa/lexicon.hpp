// Synonym lexicon and aspect enrichment.
//
// The lexicon is immutable after load; lookups are exact-match on the
// normalized form (trimmed, internal whitespace collapsed) and safe to run
// concurrently.
#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace absa::lexicon {

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& msg, std::size_t line);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Trim plus internal-whitespace collapse; byte-level, UTF-8 safe.
std::string normalize_phrase(std::string_view phrase);

class Lexicon {
 public:
  // One entry per line: "headword<TAB>syn1|syn2|...". Blank lines and lines
  // starting with '#' are skipped. Duplicate headword lines merge with
  // order-preserving dedup of synonyms.
  static Lexicon from_tsv(std::string_view tsv_bytes);

  std::string to_tsv() const;  // headwords in sorted order

  // Synonym list for the normalized phrase, or nullopt.
  const std::vector<std::string>* lookup(std::string_view phrase) const;

  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

struct EnrichedAspect {
  std::string headword;
  std::vector<std::string> synonyms_used;
  std::string rendered;
};

// Renders the auxiliary sentence for an aspect. In-lexicon aspects become
// "headword، syn1، ...، synN-1 و synN"; synonyms are dropped from the end
// until the rendered word count fits max_tokens (the headword always
// survives). Out-of-lexicon aspects pass through verbatim.
EnrichedAspect enrich_aspect(const Lexicon& lex, std::string_view aspect,
                             int max_tokens = 32);

}  // namespace absa::lexicon
