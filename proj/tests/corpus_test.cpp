#include "scratchtag/corpus.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace scratchtag;

TEST(NormalizeWord, LowercasesAndReplacesDigitRuns) {
  EXPECT_EQ(normalize_word("PS1"), "psNUMBER");
  EXPECT_EQ(normalize_word("The"), "the");
  EXPECT_EQ(normalize_word("2,000"), "NUMBER,NUMBER");
  EXPECT_EQ(normalize_word("PS2"), "psNUMBER");
  EXPECT_EQ(normalize_word("1984"), "NUMBER");
  EXPECT_EQ(normalize_word("U.S."), "u.s.");
}

TEST(NormalizeWord, EmptyTokenThrows) {
  EXPECT_THROW(normalize_word(""), std::invalid_argument);
}

TEST(NormalizeWord, Idempotent) {
  std::mt19937 rng(42);
  const std::string alphabet = "aAzZ09.,-N UMBER";
  for (int i = 0; i < 500; ++i) {
    std::string w;
    std::uniform_int_distribution<std::size_t> len(1, 12);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    const std::size_t n = len(rng);
    for (std::size_t j = 0; j < n; ++j) w += alphabet[pick(rng)];
    const std::string once = normalize_word(w);
    EXPECT_EQ(normalize_word(once), once) << "raw: " << w;
  }
}

TEST(Dictionary, FrequencyOrderWithReservedEntries) {
  std::vector<std::string> tokens;
  for (int i = 0; i < 5; ++i) tokens.push_back("a");
  for (int i = 0; i < 3; ++i) tokens.push_back("b");
  tokens.push_back("c");
  Dictionary d = build_dictionary(tokens, 4);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d.word(0), "PADDING");
  EXPECT_EQ(d.word(1), "RARE");
  EXPECT_EQ(d.word(2), "a");
  EXPECT_EQ(d.word(3), "b");
}

TEST(Dictionary, TiesBrokenByFirstOccurrence) {
  const std::vector<std::string> tokens = {"b", "a", "b", "a"};
  Dictionary d = build_dictionary(tokens, 4);
  EXPECT_EQ(d.word(2), "b");
  EXPECT_EQ(d.word(3), "a");
}

TEST(Dictionary, EmptyStreamKeepsOnlyReserved) {
  Dictionary d = build_dictionary(std::vector<std::string>{}, 10);
  EXPECT_EQ(d.size(), 2u);
}

TEST(Dictionary, TooSmallThrows) {
  EXPECT_THROW(build_dictionary(std::vector<std::string>{"a"}, 2), std::invalid_argument);
}

TEST(Dictionary, ExtendAddsMostCommonUnseenWords) {
  Dictionary base = build_dictionary(std::vector<std::string>{"a", "a", "b"}, 4);
  // new corpus: "a" is already known, "c" outranks "d"
  const std::vector<std::string> extra = {"c", "c", "c", "a", "d", "d"};
  Dictionary grown = extend_dictionary(base, extra, 2);
  ASSERT_EQ(grown.size(), 6u);
  EXPECT_TRUE(base.is_prefix_of(grown));
  EXPECT_EQ(grown.word(4), "c");
  EXPECT_EQ(grown.word(5), "d");
  // fewer new words than requested just yields a shorter dictionary
  Dictionary small = extend_dictionary(base, std::vector<std::string>{"a"}, 5);
  EXPECT_EQ(small.size(), base.size());
}

TEST(Dictionary, GrowKeepsPrefix) {
  const std::vector<std::string> tokens = {"a", "a", "b"};
  Dictionary small = build_dictionary(tokens, 3);
  Dictionary large = build_dictionary(tokens, 4);
  EXPECT_TRUE(small.is_prefix_of(large));
  EXPECT_FALSE(large.is_prefix_of(small));
}

TEST(MapWord, KnownUnknownAndReserved) {
  Dictionary d = build_dictionary(std::vector<std::string>{"Hello", "hello", "world"}, 10);
  EXPECT_EQ(map_word(d, "HELLO"), d.find("hello"));
  EXPECT_EQ(map_word(d, "unseen"), Dictionary::kRare);
  EXPECT_EQ(map_word(d, "PADDING"), Dictionary::kPadding);
  EXPECT_EQ(map_word(d, "RARE"), Dictionary::kRare);
}

TEST(MapWord, NeverOutOfRange) {
  Dictionary d = build_dictionary(std::vector<std::string>{"x"}, 3);
  std::mt19937 rng(7);
  for (int i = 0; i < 200; ++i) {
    std::string w;
    std::uniform_int_distribution<int> len(1, 8);
    std::uniform_int_distribution<int> ch(33, 126);
    const int n = len(rng);
    for (int j = 0; j < n; ++j) w += static_cast<char>(ch(rng));
    const std::int32_t idx = map_word(d, w);
    EXPECT_GE(idx, 0);
    EXPECT_LT(static_cast<std::size_t>(idx), d.size());
  }
}

TEST(DictionaryFile, RoundTrip) {
  Dictionary d = build_dictionary(std::vector<std::string>{"b", "b", "a"}, 5);
  std::stringstream ss;
  save_dictionary(d, ss);
  Dictionary loaded = load_dictionary(ss);
  EXPECT_EQ(loaded.entries(), d.entries());
}

TEST(DictionaryFile, MissingReservedHeaderThrows) {
  std::stringstream ss("a\nb\n");
  EXPECT_THROW(load_dictionary(ss), DataError);
}

TEST(ReadConll, GroupsSentencesAtBlankLines) {
  std::stringstream ss("He PRP B-NP\nruns VBZ B-VP\n\nShe PRP B-NP\n");
  auto sents = read_conll(ss);
  ASSERT_EQ(sents.size(), 2u);
  EXPECT_EQ(sents[0].length(), 2u);
  EXPECT_EQ(sents[0].word(0), "He");
  EXPECT_EQ(sents[0].column(2), (std::vector<std::string>{"B-NP", "B-VP"}));
  EXPECT_EQ(sents[1].length(), 1u);
}

TEST(ReadConll, NoTrailingBlankLineStillEmitsLastSentence) {
  std::stringstream ss("a X\nb Y");
  auto sents = read_conll(ss);
  ASSERT_EQ(sents.size(), 1u);
  EXPECT_EQ(sents[0].length(), 2u);
}

TEST(ReadConll, EmptyFileGivesEmptySequence) {
  std::stringstream ss("");
  EXPECT_TRUE(read_conll(ss).empty());
  std::stringstream blank("\n\n\n");
  EXPECT_TRUE(read_conll(blank).empty());
}

TEST(ReadConll, RaggedRowReportsLineNumber) {
  std::stringstream ss("a X\nb\n\n");
  try {
    read_conll(ss);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ReadConll, ReaderSkipsBadSentenceAndContinues) {
  std::stringstream ss("a X\nb\n\nc Z\n\n");
  ConllReader reader(ss);
  EXPECT_THROW(reader.next(), DataError);
  auto s = reader.next();
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->word(0), "c");
}

TEST(WriteConll, RoundTripsAndAppendsPredictions) {
  std::stringstream in("He PRP B-NP\nruns VBZ B-VP\n\n");
  auto sents = read_conll(in);
  std::stringstream out;
  write_conll(sents, {{"B-NP", "B-VP"}}, out);
  auto again = read_conll(out);
  ASSERT_EQ(again.size(), 1u);
  EXPECT_EQ(again[0].rows[0],
            (std::vector<std::string>{"He", "PRP", "B-NP", "B-NP"}));
  EXPECT_EQ(again[0].rows[1],
            (std::vector<std::string>{"runs", "VBZ", "B-VP", "B-VP"}));
}

TEST(WriteConll, PureRoundTripPreservesContent) {
  std::stringstream in("a\tX\nb\tY\n\nc\tZ\n\n");
  auto sents = read_conll(in);
  std::stringstream out;
  write_conll(sents, {}, out);
  auto again = read_conll(out);
  ASSERT_EQ(again.size(), sents.size());
  for (std::size_t i = 0; i < sents.size(); ++i) EXPECT_EQ(again[i].rows, sents[i].rows);
}

TEST(WriteConll, EmptyListWritesNothing) {
  std::stringstream out;
  write_conll({}, {}, out);
  EXPECT_TRUE(out.str().empty());
}

TEST(WriteConll, LengthMismatchThrows) {
  std::stringstream in("a X\n\n");
  auto sents = read_conll(in);
  EXPECT_THROW(write_conll(sents, {{"A", "B"}}, std::cout), DataError);
}

TEST(CorpusStats, CoverageCountsNonRareTokens) {
  Dictionary d = build_dictionary(std::vector<std::string>{"a", "a", "b"}, 4);
  auto st = corpus_stats(std::vector<std::string>{"a", "b", "zzz", "a"}, d);
  EXPECT_EQ(st.token_count, 4u);
  EXPECT_EQ(st.type_count, 3u);
  EXPECT_DOUBLE_EQ(st.coverage, 0.75);
}

TEST(PlainCorpus, OneSentencePerLine) {
  std::stringstream ss("the cat sat\n\nhello world\n");
  auto sents = read_plain_corpus(ss);
  ASSERT_EQ(sents.size(), 2u);
  EXPECT_EQ(sents[0].size(), 3u);
  EXPECT_EQ(sents[1][1], "world");
}
