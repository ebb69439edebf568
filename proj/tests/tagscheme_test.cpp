#include "scratchtag/tagscheme.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace scratchtag;

TEST(SpansFromTags, IobesTableRow) {
  auto spans = spans_from_tags({"B-NP", "E-NP", "O", "S-VP"}, TagScheme::IOBES);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], (ChunkSpan{"NP", 0, 1}));
  EXPECT_EQ(spans[1], (ChunkSpan{"VP", 3, 3}));
}

TEST(SpansFromTags, IobBStartsNewChunk) {
  auto spans = spans_from_tags({"B-NP", "I-NP", "B-NP"}, TagScheme::IOB);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], (ChunkSpan{"NP", 0, 1}));
  EXPECT_EQ(spans[1], (ChunkSpan{"NP", 2, 2}));
}

TEST(SpansFromTags, AllOutside) {
  EXPECT_TRUE(spans_from_tags({"O", "O", "O"}, TagScheme::IOBES).empty());
}

TEST(SpansFromTags, LenientMalformedContinuationStartsNewSpan) {
  // I-X after O starts a span; a label switch inside I-run splits it.
  auto spans = spans_from_tags({"O", "I-NP", "I-VP"}, TagScheme::IOBES);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], (ChunkSpan{"NP", 1, 1}));
  EXPECT_EQ(spans[1], (ChunkSpan{"VP", 2, 2}));
}

TEST(SpansFromTags, UnknownPrefixThrows) {
  EXPECT_THROW(spans_from_tags({"E-NP"}, TagScheme::IOB), DataError);
  EXPECT_THROW(spans_from_tags({"X-NP"}, TagScheme::IOBES), DataError);
  EXPECT_THROW(spans_from_tags({"BNP"}, TagScheme::IOBES), DataError);
}

TEST(TagsFromSpans, IobesSingleAndMultiWord) {
  EXPECT_EQ(tags_from_spans({{"NP", 0, 0}}, 1, TagScheme::IOBES),
            (std::vector<std::string>{"S-NP"}));
  EXPECT_EQ(tags_from_spans({{"NP", 0, 2}}, 3, TagScheme::IOBES),
            (std::vector<std::string>{"B-NP", "I-NP", "E-NP"}));
  EXPECT_EQ(tags_from_spans({{"NP", 0, 0}}, 1, TagScheme::IOE),
            (std::vector<std::string>{"E-NP"}));
}

TEST(TagsFromSpans, OverlapThrows) {
  EXPECT_THROW(tags_from_spans({{"NP", 0, 1}, {"VP", 1, 2}}, 3, TagScheme::IOBES), DataError);
}

TEST(TagScheme, RoundTripOnRandomSpanSets) {
  std::mt19937 rng(123);
  const std::vector<std::string> labels = {"NP", "VP", "PP"};
  for (int iter = 0; iter < 1000; ++iter) {
    std::uniform_int_distribution<std::size_t> len_dist(1, 12);
    const std::size_t T = len_dist(rng);
    std::vector<ChunkSpan> spans;
    std::size_t pos = 0;
    std::uniform_int_distribution<int> gap(0, 2), width(0, 3), lab(0, 2), coin(0, 1);
    while (pos < T) {
      pos += static_cast<std::size_t>(gap(rng));
      if (pos >= T) break;
      std::size_t end = std::min(T - 1, pos + static_cast<std::size_t>(width(rng)));
      spans.push_back({labels[static_cast<std::size_t>(lab(rng))], pos, end});
      pos = end + 1;
    }
    for (TagScheme scheme : {TagScheme::IOB, TagScheme::IOE, TagScheme::IOBES}) {
      auto tags = tags_from_spans(spans, T, scheme);
      EXPECT_EQ(spans_from_tags(tags, scheme), spans) << "scheme " << scheme_name(scheme);
    }
  }
}

TEST(TagScheme, IobesToIobMapping) {
  EXPECT_EQ(iobes_to_iob({"S-VP"}), (std::vector<std::string>{"B-VP"}));
  EXPECT_EQ(iobes_to_iob({"B-NP", "I-NP", "E-NP"}),
            (std::vector<std::string>{"B-NP", "I-NP", "I-NP"}));
  EXPECT_EQ(iobes_to_iob({"O"}), (std::vector<std::string>{"O"}));
}

TEST(TagScheme, IobesToIobPreservesSpans) {
  std::mt19937 rng(5);
  const std::vector<std::string> labels = {"A", "B"};
  for (int iter = 0; iter < 200; ++iter) {
    std::uniform_int_distribution<std::size_t> len_dist(1, 10);
    const std::size_t T = len_dist(rng);
    std::vector<ChunkSpan> spans;
    std::size_t pos = 0;
    std::uniform_int_distribution<int> gap(0, 1), width(0, 2), lab(0, 1);
    while (pos < T) {
      pos += static_cast<std::size_t>(gap(rng));
      if (pos >= T) break;
      std::size_t end = std::min(T - 1, pos + static_cast<std::size_t>(width(rng)));
      spans.push_back({labels[static_cast<std::size_t>(lab(rng))], pos, end});
      pos = end + 1;
    }
    auto iobes = tags_from_spans(spans, T, TagScheme::IOBES);
    auto iob = iobes_to_iob(iobes);
    EXPECT_EQ(spans_from_tags(iob, TagScheme::IOB), spans_from_tags(iobes, TagScheme::IOBES));
  }
}

TEST(Evaluate, PerfectPrediction) {
  const std::vector<std::vector<std::string>> gold = {{"B-NP", "E-NP", "O"}};
  auto r = evaluate_tags(gold, gold, TagScheme::IOBES);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(r.f1, 1.0);
  EXPECT_DOUBLE_EQ(r.per_word_accuracy, 1.0);
}

TEST(Evaluate, BoundaryErrorCountsZero) {
  const std::vector<std::vector<std::string>> gold = {{"B-NP", "E-NP", "O"}};
  const std::vector<std::vector<std::string>> pred = {{"B-NP", "I-NP", "E-NP"}};
  auto r = evaluate_tags(gold, pred, TagScheme::IOBES);
  EXPECT_EQ(r.correct_spans, 0u);
  EXPECT_DOUBLE_EQ(r.f1, 0.0);
}

TEST(Evaluate, HandScoredHalfF1Fixture) {
  // gold {(NP,0,1),(VP,3,3)}, pred {(NP,0,1),(VP,2,3)} -> P = R = F1 = 1/2
  auto gold = tags_from_spans({{"NP", 0, 1}, {"VP", 3, 3}}, 4, TagScheme::IOBES);
  auto pred = tags_from_spans({{"NP", 0, 1}, {"VP", 2, 3}}, 4, TagScheme::IOBES);
  auto r = evaluate_tags({gold}, {pred}, TagScheme::IOBES);
  EXPECT_DOUBLE_EQ(r.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  EXPECT_DOUBLE_EQ(r.f1, 0.5);
}

TEST(Evaluate, MismatchThrows) {
  EXPECT_THROW(evaluate_tags({{"O"}}, {{"O", "O"}}, TagScheme::IOBES), DataError);
  EXPECT_THROW(evaluate_tags({{"O"}}, {}, TagScheme::IOBES), DataError);
}

TEST(Evaluate, ReportFormat) {
  auto gold = tags_from_spans({{"NP", 0, 1}, {"VP", 3, 3}}, 4, TagScheme::IOBES);
  auto pred = tags_from_spans({{"NP", 0, 1}, {"VP", 2, 3}}, 4, TagScheme::IOBES);
  auto r = evaluate_tags({gold}, {pred}, TagScheme::IOBES);
  EXPECT_EQ(format_report(r), "precision:  50.00%; recall:  50.00%; FB1:  50.00");
  EXPECT_EQ(format_report(r, true),
            "accuracy:  50.00%; precision:  50.00%; recall:  50.00%; FB1:  50.00");
}
