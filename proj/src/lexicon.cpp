#include "absa/lexicon.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace absa::lexicon {

namespace {

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

std::vector<std::string> split_pipe(std::string_view field) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= field.size()) {
    std::size_t bar = field.find('|', start);
    if (bar == std::string_view::npos) bar = field.size();
    std::string part = normalize_phrase(field.substr(start, bar - start));
    if (!part.empty()) out.push_back(std::move(part));
    if (bar == field.size()) break;
    start = bar + 1;
  }
  return out;
}

// Word count of the rendered auxiliary string: whitespace-delimited tokens.
int rendered_word_count(const std::string& headword,
                        const std::vector<std::string>& syns) {
  auto words_in = [](const std::string& s) {
    int n = 0;
    bool in_word = false;
    for (char c : s) {
      if (is_ascii_space(c)) {
        in_word = false;
      } else if (!in_word) {
        in_word = true;
        ++n;
      }
    }
    return n;
  };
  int total = words_in(headword);
  for (const auto& s : syns) total += words_in(s);
  if (!syns.empty()) ++total;  // the standalone conjunction "و"
  return total;
}

// Joins headword + synonyms with "، " between items, except that the
// separator before the very last synonym is " و ".
std::string render(const std::string& headword,
                   const std::vector<std::string>& syns) {
  static constexpr std::string_view kListSep = "\xd8\x8c ";  // U+060C + space
  static constexpr std::string_view kConj = " \xd9\x88 ";    // " و "
  std::string out = headword;
  if (syns.empty()) return out;
  for (std::size_t i = 0; i + 1 < syns.size(); ++i) {
    out += kListSep;
    out += syns[i];
  }
  out += kConj;
  out += syns.back();
  return out;
}

}  // namespace

FormatError::FormatError(const std::string& msg, std::size_t line)
    : std::runtime_error(msg + " (line " + std::to_string(line) + ")"),
      line_(line) {}

std::string normalize_phrase(std::string_view phrase) {
  std::string out;
  out.reserve(phrase.size());
  bool pending_space = false;
  for (char c : phrase) {
    if (is_ascii_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += c;
    }
  }
  return out;
}

Lexicon Lexicon::from_tsv(std::string_view tsv_bytes) {
  Lexicon lex;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= tsv_bytes.size()) {
    std::size_t eol = tsv_bytes.find('\n', pos);
    if (eol == std::string_view::npos) eol = tsv_bytes.size();
    std::string_view line = tsv_bytes.substr(pos, eol - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (pos == tsv_bytes.size() && line.empty()) break;
    pos = eol + 1;

    if (line.empty()) continue;
    // Comment detection precedes normalization: only a leading '#' counts.
    std::string_view stripped = line;
    while (!stripped.empty() && is_ascii_space(stripped.front()))
      stripped.remove_prefix(1);
    if (!stripped.empty() && stripped.front() == '#') continue;
    if (stripped.empty()) continue;

    std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw FormatError("lexicon entry is missing the TAB separator", line_no);
    std::string headword = normalize_phrase(line.substr(0, tab));
    if (headword.empty())
      throw FormatError("lexicon entry has an empty headword", line_no);
    std::vector<std::string> syns = split_pipe(line.substr(tab + 1));

    auto [it, inserted] = lex.entries_.try_emplace(std::move(headword));
    std::unordered_set<std::string> seen(it->second.begin(), it->second.end());
    (void)inserted;
    for (auto& s : syns) {
      if (seen.insert(s).second) it->second.push_back(std::move(s));
    }
  }
  return lex;
}

std::string Lexicon::to_tsv() const {
  std::string out;
  for (const auto& [headword, syns] : entries_) {
    out += headword;
    out += '\t';
    for (std::size_t i = 0; i < syns.size(); ++i) {
      if (i) out += '|';
      out += syns[i];
    }
    out += '\n';
  }
  return out;
}

const std::vector<std::string>* Lexicon::lookup(std::string_view phrase) const {
  auto it = entries_.find(normalize_phrase(phrase));
  if (it == entries_.end()) return nullptr;
  return &it->second;
}

EnrichedAspect enrich_aspect(const Lexicon& lex, std::string_view aspect,
                             int max_tokens) {
  std::string normalized = normalize_phrase(aspect);
  if (normalized.empty())
    throw std::invalid_argument("cannot enrich an empty aspect phrase");
  if (max_tokens < 1)
    throw std::invalid_argument("max_tokens must be at least 1");

  EnrichedAspect result;
  result.headword = normalized;
  const auto* syns = lex.lookup(normalized);
  if (syns == nullptr) {
    result.rendered = normalized;
    return result;
  }
  result.synonyms_used = *syns;
  while (!result.synonyms_used.empty() &&
         rendered_word_count(result.headword, result.synonyms_used) >
             max_tokens) {
    result.synonyms_used.pop_back();
  }
  result.rendered = render(result.headword, result.synonyms_used);
  return result;
}

}  // namespace absa::lexicon
