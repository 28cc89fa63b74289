#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "absa/lexicon.hpp"

using namespace absa;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

lexicon::Lexicon fixture_lexicon() {
  return lexicon::Lexicon::from_tsv(
      read_file(std::string(ABSA_TEST_DATA_DIR) + "/lexicon_fa.tsv"));
}

}  // namespace

TEST_CASE("normalize_phrase trims and collapses ASCII whitespace") {
  CHECK(lexicon::normalize_phrase("") == "");
  CHECK(lexicon::normalize_phrase("   ") == "");
  CHECK(lexicon::normalize_phrase("word") == "word");
  CHECK(lexicon::normalize_phrase("  two   words \t here\n") == "two words here");
  // Multi-byte UTF-8 passes through untouched.
  CHECK(lexicon::normalize_phrase("  ارزش   خرید ") ==
        "ارزش خرید");
}

TEST_CASE("lexicon loads the fixture file") {
  const lexicon::Lexicon lex = fixture_lexicon();
  CHECK(lex.size() == 3);
  const auto* taste = lex.lookup("طعم");  // طعم
  REQUIRE(taste != nullptr);
  CHECK(taste->size() == 5);
  CHECK((*taste)[0] == "چاشنی");  // چاشنی
  CHECK(lex.lookup("unknown") == nullptr);
  // Lookup normalizes its argument.
  CHECK(lex.lookup("  طعم ") != nullptr);
  CHECK(lex.lookup("ارزش   خرید") != nullptr);
}

TEST_CASE("enrichment reproduces the published auxiliary strings byte for byte") {
  const lexicon::Lexicon lex = fixture_lexicon();
  const std::string cases =
      read_file(std::string(ABSA_TEST_DATA_DIR) + "/enrich_cases_fa.tsv");
  std::istringstream lines(cases);
  std::string line;
  int checked = 0;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    const std::string aspect = line.substr(0, tab);
    const std::string expected = line.substr(tab + 1);
    const lexicon::EnrichedAspect got = lexicon::enrich_aspect(lex, aspect);
    CHECK(got.rendered == expected);
    CHECK(got.headword == aspect);
    ++checked;
  }
  CHECK(checked == 3);
}

TEST_CASE("enrichment joins with the Persian list separator and conjunction") {
  const lexicon::Lexicon lex =
      lexicon::Lexicon::from_tsv("head\ts1|s2|s3\none\tonly\n");
  CHECK(lexicon::enrich_aspect(lex, "head").rendered ==
        "head، s1، s2 و s3");
  // A single synonym still gets the conjunction, not the list separator.
  CHECK(lexicon::enrich_aspect(lex, "one").rendered == "one و only");
}

TEST_CASE("out-of-lexicon aspects pass through verbatim") {
  const lexicon::Lexicon lex = fixture_lexicon();
  const lexicon::EnrichedAspect got = lexicon::enrich_aspect(lex, "نان");
  CHECK(got.rendered == "نان");
  CHECK(got.synonyms_used.empty());
  // Normalization still applies to the passthrough form.
  CHECK(lexicon::enrich_aspect(lex, "  spaced   out ").rendered == "spaced out");
}

TEST_CASE("enrichment truncates synonyms from the end to fit the budget") {
  const lexicon::Lexicon lex =
      lexicon::Lexicon::from_tsv("h\ta|b|c|d\nmulti word head\tx y|z\n");
  // Full rendering: "h، a، b، c و d" = 6 words (the conjunction counts).
  CHECK(lexicon::enrich_aspect(lex, "h", 32).synonyms_used.size() == 4);
  // Budget 5 drops d: "h، a، b و c".
  lexicon::EnrichedAspect five = lexicon::enrich_aspect(lex, "h", 5);
  CHECK(five.synonyms_used == std::vector<std::string>{"a", "b", "c"});
  CHECK(five.rendered == "h، a، b و c");
  // Budget 3 keeps one synonym: "h و a".
  lexicon::EnrichedAspect three = lexicon::enrich_aspect(lex, "h", 3);
  CHECK(three.synonyms_used == std::vector<std::string>{"a"});
  CHECK(three.rendered == "h و a");
  // Budget 1 (or 2, which cannot fit "h و a") leaves the bare headword.
  CHECK(lexicon::enrich_aspect(lex, "h", 2).rendered == "h");
  CHECK(lexicon::enrich_aspect(lex, "h", 1).rendered == "h");

  // Multi-word phrases count every word: "multi word head، x y و z" is 7.
  CHECK(lexicon::enrich_aspect(lex, "multi word head", 7).synonyms_used.size() == 2);
  CHECK(lexicon::enrich_aspect(lex, "multi word head", 6).synonyms_used ==
        std::vector<std::string>{"x y"});
  // The headword survives even when it alone exceeds the budget.
  CHECK(lexicon::enrich_aspect(lex, "multi word head", 2).rendered ==
        "multi word head");
}

TEST_CASE("enrichment validates its arguments") {
  const lexicon::Lexicon lex = fixture_lexicon();
  CHECK_THROWS_AS(lexicon::enrich_aspect(lex, ""), std::invalid_argument);
  CHECK_THROWS_AS(lexicon::enrich_aspect(lex, "   "), std::invalid_argument);
  CHECK_THROWS_AS(lexicon::enrich_aspect(lex, "x", 0), std::invalid_argument);
  CHECK_THROWS_AS(lexicon::enrich_aspect(lex, "x", -5), std::invalid_argument);
}

TEST_CASE("enrichment is deterministic and repeatable") {
  const lexicon::Lexicon lex = fixture_lexicon();
  const std::string once = lexicon::enrich_aspect(lex, "کلی").rendered;
  const std::string twice = lexicon::enrich_aspect(lex, "کلی").rendered;
  CHECK(once == twice);
}

TEST_CASE("duplicate headword lines merge with order-preserving dedup") {
  const lexicon::Lexicon lex = lexicon::Lexicon::from_tsv(
      "h\ta|b\n"
      "h\tb|c|a|d\n");
  const auto* syns = lex.lookup("h");
  REQUIRE(syns != nullptr);
  CHECK(*syns == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(lex.size() == 1);
}

TEST_CASE("synonym lists drop duplicates and empty segments") {
  const lexicon::Lexicon lex = lexicon::Lexicon::from_tsv("h\ta||a|  |b\n");
  const auto* syns = lex.lookup("h");
  REQUIRE(syns != nullptr);
  CHECK(*syns == std::vector<std::string>{"a", "b"});
}

TEST_CASE("comments and blank lines are skipped") {
  const lexicon::Lexicon lex = lexicon::Lexicon::from_tsv(
      "# comment line\n"
      "\n"
      "   \n"
      "h\ta\n");
  CHECK(lex.size() == 1);
}

TEST_CASE("format errors carry the line number") {
  try {
    lexicon::Lexicon::from_tsv("h\ta\nno tab here\n");
    FAIL("expected FormatError");
  } catch (const lexicon::FormatError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  try {
    lexicon::Lexicon::from_tsv("\torphan synonyms\n");
    FAIL("expected FormatError");
  } catch (const lexicon::FormatError& e) {
    CHECK(e.line() == 1);
  }
}

TEST_CASE("to_tsv round-trips the lexicon") {
  const lexicon::Lexicon lex = lexicon::Lexicon::from_tsv(
      "zeta\tz1|z2\n"
      "alpha\ta1\n"
      "zeta\tz3\n");
  const std::string rendered = lex.to_tsv();
  // Sorted by headword, merged synonyms.
  CHECK(rendered == "alpha\ta1\nzeta\tz1|z2|z3\n");
  const lexicon::Lexicon reloaded = lexicon::Lexicon::from_tsv(rendered);
  CHECK(reloaded.to_tsv() == rendered);
  REQUIRE(reloaded.lookup("zeta") != nullptr);
  CHECK(*reloaded.lookup("zeta") == std::vector<std::string>{"z1", "z2", "z3"});
}

TEST_CASE("fixture lexicon round-trips through to_tsv") {
  const lexicon::Lexicon lex = fixture_lexicon();
  const lexicon::Lexicon reloaded = lexicon::Lexicon::from_tsv(lex.to_tsv());
  CHECK(reloaded.to_tsv() == lex.to_tsv());
  CHECK(reloaded.size() == lex.size());
}
