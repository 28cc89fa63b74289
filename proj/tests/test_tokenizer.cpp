#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <string>
#include <vector>

#include "absa/tokenizer.hpp"

using namespace absa;
using tokenizer::Vocabulary;

namespace {

std::string reserved_prefix() {
  std::string text;
  for (int i = 0; i < tokenizer::kNumReserved; ++i) {
    text += tokenizer::kReservedTokens[i];
    text += '\n';
  }
  return text;
}

Vocabulary affable_vocab() {
  return Vocabulary::load(reserved_prefix() +
                          "un\n##aff\n##able\naff\nhug\n##s\n##gs\n");
}

// Independent FNV-1a 64-bit digest used to freeze the fingerprint contract.
std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace

TEST_CASE("reserved tokens occupy ids 0 through 4") {
  CHECK(tokenizer::kPadId == 0);
  CHECK(tokenizer::kUnkId == 1);
  CHECK(tokenizer::kClsId == 2);
  CHECK(tokenizer::kMaskId == 3);
  CHECK(tokenizer::kSepId == 4);
  const Vocabulary vocab = affable_vocab();
  CHECK(vocab.token(0) == "[PAD]");
  CHECK(vocab.token(1) == "[UNK]");
  CHECK(vocab.token(2) == "[CLS]");
  CHECK(vocab.token(3) == "[MASK]");
  CHECK(vocab.token(4) == "[SEP]");
}

TEST_CASE("load assigns ids by line order") {
  // 105 lines: 5 reserved + 100 generated tokens.
  std::string text = reserved_prefix();
  for (int i = 0; i < 100; ++i) text += "tok" + std::to_string(i) + "\n";
  const Vocabulary vocab = Vocabulary::load(text);
  REQUIRE(vocab.size() == 105);
  for (int i = 0; i < 100; ++i) {
    const std::string token = "tok" + std::to_string(i);
    CHECK(vocab.token(5 + i) == token);
    REQUIRE(vocab.id_of(token).has_value());
    CHECK(*vocab.id_of(token) == 5 + i);
  }
  CHECK(!vocab.id_of("missing").has_value());
  CHECK_THROWS_AS(vocab.token(105), tokenizer::VocabError);
  CHECK_THROWS_AS(vocab.token(-1), tokenizer::VocabError);
}

TEST_CASE("load rejects duplicates naming both lines") {
  const std::string text = reserved_prefix() + "alpha\nbeta\nalpha\n";
  try {
    Vocabulary::load(text);
    FAIL("expected VocabError");
  } catch (const tokenizer::VocabError& e) {
    const std::string what = e.what();
    CHECK(what.find("alpha") != std::string::npos);
    CHECK(what.find("6") != std::string::npos);  // first occurrence
    CHECK(what.find("8") != std::string::npos);  // duplicate
  }
}

TEST_CASE("load rejects wrong reserved tokens and empty lines") {
  CHECK_THROWS_AS(Vocabulary::load("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\nx\n"),
                  tokenizer::VocabError);  // swapped order
  CHECK_THROWS_AS(Vocabulary::load("a\nb\nc\nd\ne\n"), tokenizer::VocabError);
  CHECK_THROWS_AS(Vocabulary::load("[PAD]\n[UNK]\n"), tokenizer::VocabError);
  CHECK_THROWS_AS(Vocabulary::load(reserved_prefix() + "a\n\nb\n"),
                  tokenizer::VocabError);  // interior empty line
}

TEST_CASE("to_text inverts load and fingerprint matches an independent digest") {
  const std::string text = reserved_prefix() + "alpha\nbeta\n##a\n";
  const Vocabulary vocab = Vocabulary::load(text);
  CHECK(vocab.to_text() == text);
  CHECK(vocab.fingerprint() == fnv1a(text));
  // Any change to the token list changes the digest.
  const Vocabulary other = Vocabulary::load(reserved_prefix() + "alpha\nbeta\n##b\n");
  CHECK(other.fingerprint() != vocab.fingerprint());
}

TEST_CASE("pre_tokenize splits whitespace and isolates punctuation") {
  using V = std::vector<std::string>;
  CHECK(tokenizer::pre_tokenize("") == V{});
  CHECK(tokenizer::pre_tokenize("  \t\n ") == V{});
  CHECK(tokenizer::pre_tokenize("hello world") == V{"hello", "world"});
  CHECK(tokenizer::pre_tokenize("a,b.c") == V{"a", ",", "b", ".", "c"});
  CHECK(tokenizer::pre_tokenize("wow!!") == V{"wow", "!", "!"});
  // Persian comma, semicolon, question mark stand alone.
  CHECK(tokenizer::pre_tokenize("خوب، بد") ==
        V{"خوب", "،", "بد"});
  CHECK(tokenizer::pre_tokenize("چطور؟") ==
        V{"چطور", "؟"});
  // Guillemets split; the zero-width non-joiner stays inside its word.
  CHECK(tokenizer::pre_tokenize("«می‌خرم»") ==
        V{"«", "می‌خرم", "»"});
  // No-break space and ideographic space are separators.
  CHECK(tokenizer::pre_tokenize("a b　c") == V{"a", "b", "c"});
}

TEST_CASE("wordpiece follows greedy longest-match-first") {
  const Vocabulary vocab = affable_vocab();
  using V = std::vector<std::string>;
  CHECK(tokenizer::wordpiece_tokenize("unaffable", vocab) ==
        V{"un", "##aff", "##able"});
  CHECK(tokenizer::wordpiece_tokenize("affable", vocab) == V{"aff", "##able"});
  CHECK(tokenizer::wordpiece_tokenize("hugs", vocab) == V{"hug", "##s"});
  CHECK(tokenizer::wordpiece_tokenize("un", vocab) == V{"un"});
  // No covering segmentation: the whole word becomes [UNK].
  CHECK(tokenizer::wordpiece_tokenize("xyz", vocab) == V{"[UNK]"});
  CHECK(tokenizer::wordpiece_tokenize("unz", vocab) == V{"[UNK]"});

  // Greediness: "una" wins over "un" when both could start the word.
  const Vocabulary greedy = Vocabulary::load(
      reserved_prefix() + "un\nuna\n##ffable\n##affable\n");
  CHECK(tokenizer::wordpiece_tokenize("unaffable", greedy) ==
        V{"una", "##ffable"});
}

TEST_CASE("wordpiece backtracks whole codepoints, never splitting UTF-8") {
  // می‌خرم = م ی ZWNJ خ ر م ; vocab covers only some multi-char pieces.
  const std::string word = "می‌خرم";
  const Vocabulary vocab = Vocabulary::load(
      reserved_prefix() +
      "می\n##‌\n##خرم\n");
  const auto pieces = tokenizer::wordpiece_tokenize(word, vocab);
  REQUIRE(pieces.size() == 3);
  CHECK(pieces[0] == "می");
  CHECK(pieces[1] == "##‌");
  CHECK(pieces[2] == "##خرم");
}

TEST_CASE("build merges by frequency with lexicographic tie-breaks") {
  // "ab" occurs twice, "ac" once: alphabet a,b,c then merges ab, then ac.
  const Vocabulary vocab = Vocabulary::build({"ab ab", "ac"}, 13);
  REQUIRE(vocab.size() == 13);
  CHECK(vocab.token(5) == "a");
  CHECK(vocab.token(6) == "##a");
  CHECK(vocab.token(7) == "b");
  CHECK(vocab.token(8) == "##b");
  CHECK(vocab.token(9) == "c");
  CHECK(vocab.token(10) == "##c");
  CHECK(vocab.token(11) == "ab");  // frequency 2 merges before frequency 1
  CHECK(vocab.token(12) == "ac");

  // Equal frequencies: the lexicographically smaller pair merges first.
  const Vocabulary tied = Vocabulary::build({"ab", "cd"}, 15);
  REQUIRE(tied.size() == 15);
  CHECK(tied.token(13) == "ab");
  CHECK(tied.token(14) == "cd");
}

TEST_CASE("build stops early when no adjacent pairs remain") {
  // One word "aa": alphabet {a} gives 7 tokens, one merge gives "aa" = 8,
  // and with no pairs left the builder stops short of the target.
  const Vocabulary vocab = Vocabulary::build({"aa"}, 9);
  REQUIRE(vocab.size() == 8);
  CHECK(vocab.token(5) == "a");
  CHECK(vocab.token(6) == "##a");
  CHECK(vocab.token(7) == "aa");
}

TEST_CASE("build validates the target size") {
  CHECK_THROWS_AS(Vocabulary::build({"abc"}, 10), tokenizer::VocabError);
  CHECK_THROWS_AS(Vocabulary::build({"a"}, 200000), tokenizer::VocabError);
}

TEST_CASE("built vocabularies segment their own corpus without [UNK]") {
  const std::vector<std::string> corpus = {
      "خوب بود",
      "طعم خوب",
  };
  const Vocabulary vocab = Vocabulary::build(corpus, 40);
  for (const auto& line : corpus) {
    for (const auto& piece : tokenizer::tokenize_text(line, vocab)) {
      CHECK(piece != "[UNK]");
    }
  }
}

TEST_CASE("encode_pair lays out CLS, segments, SEPs, and padding") {
  const Vocabulary vocab = affable_vocab();
  const auto enc = tokenizer::encode_pair("unaffable hugs", "aff", vocab, 12);
  // [CLS] un ##aff ##able hug ##s [SEP] aff [SEP] [PAD] [PAD] [PAD]
  const std::vector<int> want_ids = {2, 5, 6, 7, 9, 10, 4, 8, 4, 0, 0, 0};
  CHECK(enc.ids == want_ids);
  CHECK(enc.true_length == 9);
  const std::vector<int> want_seg = {0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0};
  CHECK(enc.segment_ids == want_seg);
  const std::vector<int> want_mask = {1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0};
  CHECK(enc.attention_mask == want_mask);
}

TEST_CASE("encode_pair truncates the review tail before touching the auxiliary") {
  const Vocabulary vocab = Vocabulary::load(
      reserved_prefix() + "r\na\n");
  // Review 6 pieces, auxiliary 2, max_len 8 → budget 5 → aux keeps 2,
  // review keeps 3.
  const auto enc = tokenizer::encode_pair("r r r r r r", "a a", vocab, 8);
  const std::vector<int> want = {2, 5, 5, 5, 4, 6, 6, 4};
  CHECK(enc.ids == want);
  CHECK(enc.true_length == 8);

  // The review may vanish entirely when the auxiliary fills the budget.
  const auto gone = tokenizer::encode_pair("r r r", "a a a a a a a a", vocab, 8);
  const std::vector<int> want_gone = {2, 4, 6, 6, 6, 6, 6, 4};
  CHECK(gone.ids == want_gone);

  // Auxiliary truncation never cuts below its first word's pieces.
  const Vocabulary multi = Vocabulary::load(reserved_prefix() + "x\n##y\nr\n");
  const auto floor_enc = tokenizer::encode_pair(
      "r r r r", "xy xy xy xy xy xy xy", multi, 8);
  // First aux word "xy" = [x, ##y]: budget 5 → aux keeps 5, review 0.
  const std::vector<int> want_floor = {2, 4, 5, 6, 5, 6, 5, 4};
  CHECK(floor_enc.ids == want_floor);
}

TEST_CASE("encode_pair rejects impossible inputs") {
  const Vocabulary vocab = affable_vocab();
  CHECK_THROWS_AS(tokenizer::encode_pair("", "aff", vocab, 16),
                  tokenizer::EncodeError);
  CHECK_THROWS_AS(tokenizer::encode_pair("   ", "aff", vocab, 16),
                  tokenizer::EncodeError);
  CHECK_THROWS_AS(tokenizer::encode_pair("un", "", vocab, 16),
                  tokenizer::EncodeError);
  CHECK_THROWS_AS(tokenizer::encode_pair("un", "aff", vocab, 7),
                  tokenizer::EncodeError);

  // An auxiliary whose first word cannot fit even alone.
  const Vocabulary chars = Vocabulary::load(
      reserved_prefix() + "q\n##q\nr\n");
  const std::string long_word(10, 'q');  // 10 pieces: q ##q ##q ...
  try {
    tokenizer::encode_pair("r", long_word, chars, 8);
    FAIL("expected EncodeError");
  } catch (const tokenizer::EncodeError& e) {
    const std::string what = e.what();
    CHECK(what.find("auxiliary") != std::string::npos);
  }
}

TEST_CASE("unknown words encode as [UNK] and survive the layout") {
  const Vocabulary vocab = affable_vocab();
  const auto enc = tokenizer::encode_pair("zzz un", "aff", vocab, 10);
  CHECK(enc.ids[1] == tokenizer::kUnkId);
  CHECK(enc.ids[2] == 5);  // "un"
}

TEST_CASE("decode splices continuations and drops reserved tokens") {
  const Vocabulary vocab = affable_vocab();
  const auto enc = tokenizer::encode_pair("unaffable hugs", "aff", vocab, 16);
  CHECK(tokenizer::decode(enc.ids, vocab) == "unaffable hugs aff");
  CHECK(tokenizer::decode({2, 5, 4, 0, 0}, vocab) == "un");
  CHECK(tokenizer::decode({}, vocab) == "");
  CHECK_THROWS_AS(tokenizer::decode({999}, vocab), tokenizer::VocabError);
}

TEST_CASE("tokenize then decode round-trips space-separated text") {
  const std::vector<std::string> corpus = {
      "طعم خوب بود",
      "قیمت بد",
  };
  const Vocabulary vocab = Vocabulary::build(corpus, 60);
  for (const auto& line : corpus) {
    const auto enc = tokenizer::encode_pair(line, corpus[0], vocab, 32);
    const std::string decoded = tokenizer::decode(enc.ids, vocab);
    CHECK(decoded == line + " " + corpus[0]);
  }
}
