#include "absa/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <utility>

namespace absa::tokenizer {

const char* const kReservedTokens[kNumReserved] = {"[PAD]", "[UNK]", "[CLS]",
                                                   "[MASK]", "[SEP]"};

namespace {

// Decodes the UTF-8 sequence starting at `pos`; invalid bytes count as
// single-byte codepoints so tokenization stays total on arbitrary input.
std::pair<char32_t, std::size_t> next_codepoint(std::string_view s,
                                                std::size_t pos) {
  unsigned char b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1};
  auto cont = [&](std::size_t i) {
    return pos + i < s.size() &&
           (static_cast<unsigned char>(s[pos + i]) & 0xC0) == 0x80;
  };
  auto bits = [&](std::size_t i) {
    return static_cast<char32_t>(static_cast<unsigned char>(s[pos + i]) & 0x3F);
  };
  if ((b0 & 0xE0) == 0xC0 && cont(1))
    return {(static_cast<char32_t>(b0 & 0x1F) << 6) | bits(1), 2};
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2))
    return {(static_cast<char32_t>(b0 & 0x0F) << 12) | (bits(1) << 6) | bits(2),
            3};
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3))
    return {(static_cast<char32_t>(b0 & 0x07) << 18) | (bits(1) << 12) |
                (bits(2) << 6) | bits(3),
            4};
  return {b0, 1};
}

bool is_unicode_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

bool is_punct(char32_t c) {
  if (c < 0x80) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') ||
           (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
  }
  switch (c) {
    case 0x060C:  // ، Arabic comma
    case 0x061B:  // ؛ Arabic semicolon
    case 0x061F:  // ؟ Arabic question mark
    case 0x00AB:  // «
    case 0x00BB:  // »
    case 0x2013:  // –
    case 0x2014:  // —
    case 0x2018: case 0x2019: case 0x201C: case 0x201D:
    case 0x2026:  // …
    case 0x00B7:  // ·
      return true;
    default:
      return false;
  }
}

struct Piece {
  std::string text;   // without the "##" marker
  bool continuation;  // true => rendered as "##" + text
  std::string rendered() const {
    return continuation ? "##" + text : text;
  }
};

}  // namespace

void Vocabulary::append(std::string token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::load(std::string_view text_bytes) {
  Vocabulary vocab;
  std::unordered_map<std::string, std::size_t> first_line;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text_bytes.size()) {
    std::size_t eol = text_bytes.find('\n', pos);
    if (eol == std::string_view::npos) eol = text_bytes.size();
    std::string_view line = text_bytes.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    bool at_end = eol == text_bytes.size();
    if (at_end && line.empty()) break;
    ++line_no;
    pos = eol + 1;

    if (line.empty())
      throw VocabError("vocabulary line " + std::to_string(line_no) +
                       " is empty");
    std::string token(line);
    auto [it, inserted] = first_line.emplace(token, line_no);
    if (!inserted)
      throw VocabError("duplicate vocabulary token \"" + token + "\" at line " +
                       std::to_string(line_no) + " (first seen at line " +
                       std::to_string(it->second) + ")");
    vocab.append(std::move(token));
    if (at_end) break;
  }
  if (vocab.size() < kNumReserved)
    throw VocabError("vocabulary must start with the " +
                     std::to_string(kNumReserved) + " reserved tokens");
  for (int i = 0; i < kNumReserved; ++i) {
    if (vocab.tokens_[static_cast<std::size_t>(i)] != kReservedTokens[i])
      throw VocabError("vocabulary line " + std::to_string(i + 1) +
                       " must be " + kReservedTokens[i] + ", found \"" +
                       vocab.tokens_[static_cast<std::size_t>(i)] + "\"");
  }
  if (vocab.size() > kMaxVocabSize)
    throw VocabError("vocabulary has " + std::to_string(vocab.size()) +
                     " tokens; the maximum is " +
                     std::to_string(kMaxVocabSize));
  return vocab;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus,
                             std::size_t target_size) {
  // Word frequencies, in pieces. Words start as per-character pieces.
  std::map<std::string, long long> word_freq;
  for (const auto& text : corpus)
    for (auto& word : pre_tokenize(text)) ++word_freq[word];

  std::vector<std::vector<Piece>> words;
  std::vector<long long> freqs;
  std::map<std::string, long long> alphabet;  // codepoint text → frequency
  for (const auto& [word, freq] : word_freq) {
    std::vector<Piece> pieces;
    std::size_t i = 0;
    while (i < word.size()) {
      auto [cp, len] = next_codepoint(word, i);
      (void)cp;
      std::string ch = word.substr(i, len);
      alphabet[ch] += freq;
      pieces.push_back(Piece{std::move(ch), i != 0});
      i += len;
    }
    words.push_back(std::move(pieces));
    freqs.push_back(freq);
  }

  std::size_t alphabet_tokens = 2 * alphabet.size();
  if (target_size < kNumReserved + alphabet_tokens)
    throw VocabError(
        "target vocabulary size " + std::to_string(target_size) +
        " cannot cover the corpus alphabet; need at least " +
        std::to_string(kNumReserved + alphabet_tokens) + " tokens");
  if (target_size > kMaxVocabSize)
    throw VocabError("target vocabulary size " + std::to_string(target_size) +
                     " exceeds the maximum of " +
                     std::to_string(kMaxVocabSize));

  Vocabulary vocab;
  for (const char* t : kReservedTokens) vocab.append(t);
  for (const auto& [ch, freq] : alphabet) {
    (void)freq;
    vocab.append(ch);
    vocab.append("##" + ch);
  }

  while (vocab.size() < target_size) {
    // Highest-frequency adjacent pair; ties break on the lexicographically
    // smallest (left rendered, right rendered) pair.
    std::map<std::pair<std::string, std::string>, long long> pair_freq;
    for (std::size_t w = 0; w < words.size(); ++w)
      for (std::size_t i = 0; i + 1 < words[w].size(); ++i)
        pair_freq[{words[w][i].rendered(), words[w][i + 1].rendered()}] +=
            freqs[w];
    if (pair_freq.empty()) break;
    auto best = pair_freq.begin();
    for (auto it = std::next(pair_freq.begin()); it != pair_freq.end(); ++it)
      if (it->second > best->second) best = it;

    const auto& [left_r, right_r] = best->first;
    for (std::size_t w = 0; w < words.size(); ++w) {
      auto& pieces = words[w];
      std::vector<Piece> merged;
      merged.reserve(pieces.size());
      std::size_t i = 0;
      while (i < pieces.size()) {
        if (i + 1 < pieces.size() && pieces[i].rendered() == left_r &&
            pieces[i + 1].rendered() == right_r) {
          merged.push_back(Piece{pieces[i].text + pieces[i + 1].text,
                                 pieces[i].continuation});
          i += 2;
        } else {
          merged.push_back(std::move(pieces[i]));
          ++i;
        }
      }
      pieces = std::move(merged);
    }
    // The merged token inherits the left piece's position flavor.
    std::string merged_token =
        left_r + (right_r.rfind("##", 0) == 0 ? right_r.substr(2) : right_r);
    if (!vocab.index_.contains(merged_token)) vocab.append(merged_token);
  }
  return vocab;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw VocabError("token id " + std::to_string(id) +
                     " is out of range for a vocabulary of " +
                     std::to_string(tokens_.size()));
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;  // FNV-1a 64-bit offset basis
  auto mix = [&hash](char c) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;  // FNV prime
  };
  for (const auto& t : tokens_) {
    for (char c : t) mix(c);
    mix('\n');
  }
  return hash;
}

std::vector<std::string> pre_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  };
  std::size_t i = 0;
  while (i < text.size()) {
    auto [cp, len] = next_codepoint(text, i);
    if (is_unicode_space(cp)) {
      flush();
    } else if (is_punct(cp)) {
      flush();
      out.emplace_back(text.substr(i, len));
    } else {
      current.append(text.substr(i, len));
    }
    i += len;
  }
  flush();
  return out;
}

std::vector<std::string> wordpiece_tokenize(std::string_view word,
                                            const Vocabulary& vocab) {
  std::vector<std::string> pieces;
  std::size_t start = 0;
  while (start < word.size()) {
    // Longest prefix of word[start:] present in the vocabulary, with the
    // "##" form required after the first piece.
    std::size_t end = word.size();
    std::string match;
    while (end > start) {
      std::string candidate(word.substr(start, end - start));
      if (start > 0) candidate = "##" + candidate;
      if (vocab.id_of(candidate)) {
        match = std::move(candidate);
        break;
      }
      // Step back one whole codepoint.
      do {
        --end;
      } while (end > start &&
               (static_cast<unsigned char>(word[end]) & 0xC0) == 0x80);
    }
    if (match.empty()) return {kReservedTokens[kUnkId]};
    start = end;
    pieces.push_back(std::move(match));
  }
  if (pieces.empty()) return {kReservedTokens[kUnkId]};
  return pieces;
}

std::vector<std::string> tokenize_text(std::string_view text,
                                       const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (const auto& word : pre_tokenize(text))
    for (auto& piece : wordpiece_tokenize(word, vocab))
      out.push_back(std::move(piece));
  return out;
}

EncodedPair encode_pair(std::string_view review, std::string_view auxiliary,
                        const Vocabulary& vocab, int max_len) {
  if (max_len < 8)
    throw EncodeError("max_len must be at least 8, got " +
                      std::to_string(max_len));
  std::vector<std::string> review_words = pre_tokenize(review);
  std::vector<std::string> aux_words = pre_tokenize(auxiliary);
  if (review_words.empty())
    throw EncodeError("cannot encode an empty review");
  if (aux_words.empty())
    throw EncodeError("cannot encode an empty auxiliary sentence");

  auto to_ids = [&vocab](const std::vector<std::string>& words) {
    std::vector<int> ids;
    for (const auto& w : words)
      for (const auto& piece : wordpiece_tokenize(w, vocab))
        ids.push_back(*vocab.id_of(piece));
    return ids;
  };
  std::vector<int> review_ids = to_ids(review_words);
  std::vector<int> aux_ids = to_ids(aux_words);
  std::size_t aux_floor =
      wordpiece_tokenize(aux_words.front(), vocab).size();

  const std::size_t budget = static_cast<std::size_t>(max_len) - 3;
  if (aux_floor > budget)
    throw EncodeError(
        "auxiliary sentence cannot fit: its first word needs " +
        std::to_string(aux_floor) + " pieces but only " +
        std::to_string(budget) + " positions remain at max_len " +
        std::to_string(max_len));
  // Review yields from the tail first; the auxiliary only shrinks (toward
  // its first word) once the review is gone.
  if (review_ids.size() + aux_ids.size() > budget) {
    std::size_t aux_keep = std::min(aux_ids.size(), budget);
    aux_keep = std::max(aux_keep, aux_floor);
    std::size_t review_keep = budget - aux_keep;
    review_ids.resize(std::min(review_ids.size(), review_keep));
    aux_ids.resize(aux_keep);
  }

  EncodedPair enc;
  enc.ids.reserve(static_cast<std::size_t>(max_len));
  enc.ids.push_back(kClsId);
  enc.ids.insert(enc.ids.end(), review_ids.begin(), review_ids.end());
  enc.ids.push_back(kSepId);
  std::size_t first_segment = enc.ids.size();
  enc.ids.insert(enc.ids.end(), aux_ids.begin(), aux_ids.end());
  enc.ids.push_back(kSepId);
  enc.true_length = static_cast<int>(enc.ids.size());
  enc.ids.resize(static_cast<std::size_t>(max_len), kPadId);

  enc.segment_ids.assign(static_cast<std::size_t>(max_len), 0);
  for (std::size_t i = first_segment;
       i < static_cast<std::size_t>(enc.true_length); ++i)
    enc.segment_ids[i] = 1;
  enc.attention_mask.assign(static_cast<std::size_t>(max_len), 0);
  for (int i = 0; i < enc.true_length; ++i)
    enc.attention_mask[static_cast<std::size_t>(i)] = 1;
  return enc;
}

std::string decode(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    const std::string& tok = vocab.token(id);  // range-checks
    if (id < kNumReserved) continue;
    if (tok.rfind("##", 0) == 0) {
      out += tok.substr(2);
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

}  // namespace absa::tokenizer
