#pragma once

#include <algorithm>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "scratchtag/core.hpp"

namespace scratchtag {

/// Labeled segment of a sentence, positions inclusive and 0-based.
struct ChunkSpan {
  std::string label;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const ChunkSpan& o) const {
    return label == o.label && start == o.start && end == o.end;
  }
  bool operator<(const ChunkSpan& o) const {
    if (start != o.start) return start < o.start;
    if (end != o.end) return end < o.end;
    return label < o.label;
  }
};

enum class TagScheme { IOB, IOE, IOBES };

inline const char* scheme_name(TagScheme s) {
  switch (s) {
    case TagScheme::IOB: return "IOB";
    case TagScheme::IOE: return "IOE";
    default: return "IOBES";
  }
}

namespace detail {

struct ParsedTag {
  char prefix = 'O';   // 'O', 'B', 'I', 'E', 'S'
  std::string label;   // empty for O
};

inline ParsedTag parse_tag(const std::string& tag, TagScheme scheme) {
  if (tag == "O") return {};
  if (tag.size() < 3 || tag[1] != '-')
    throw DataError("malformed tag '" + tag + "'");
  const char p = tag[0];
  const bool ok = (scheme == TagScheme::IOB && (p == 'B' || p == 'I')) ||
                  (scheme == TagScheme::IOE && (p == 'I' || p == 'E')) ||
                  (scheme == TagScheme::IOBES && (p == 'B' || p == 'I' || p == 'E' || p == 'S'));
  if (!ok)
    throw DataError(std::string("unknown prefix '") + p + "' for scheme " + scheme_name(scheme));
  return {p, tag.substr(2)};
}

}  // namespace detail

/// Extracts maximal labeled segments from a tag row. Malformed continuations
/// (e.g. I-X after O) leniently start a new span, mirroring conlleval.
inline std::vector<ChunkSpan> spans_from_tags(const std::vector<std::string>& tags,
                                              TagScheme scheme) {
  std::vector<ChunkSpan> spans;
  std::optional<ChunkSpan> open;
  auto close = [&] {
    if (open) spans.push_back(*open);
    open.reset();
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto t = detail::parse_tag(tags[i], scheme);
    switch (t.prefix) {
      case 'O':
        close();
        break;
      case 'B':
        close();
        open = ChunkSpan{t.label, i, i};
        break;
      case 'S':
        close();
        spans.push_back({t.label, i, i});
        break;
      case 'I':
        if (open && open->label == t.label) {
          open->end = i;
        } else {
          close();
          open = ChunkSpan{t.label, i, i};
        }
        break;
      case 'E':
        if (open && open->label == t.label) {
          open->end = i;
        } else {
          close();
          open = ChunkSpan{t.label, i, i};
        }
        close();
        break;
    }
  }
  close();
  return spans;
}

/// Inverse of spans_from_tags on well-formed input. Spans must be sorted and
/// non-overlapping.
inline std::vector<std::string> tags_from_spans(const std::vector<ChunkSpan>& spans,
                                                std::size_t length, TagScheme scheme) {
  std::vector<std::string> tags(length, "O");
  std::size_t last_end = 0;
  bool first = true;
  for (const auto& s : spans) {
    if (s.start > s.end || s.end >= length)
      throw DataError("span out of bounds");
    if (!first && s.start <= last_end)
      throw DataError("overlapping or unsorted spans");
    first = false;
    last_end = s.end;
    const bool single = s.start == s.end;
    for (std::size_t i = s.start; i <= s.end; ++i) {
      char p;
      switch (scheme) {
        case TagScheme::IOB:
          p = (i == s.start) ? 'B' : 'I';
          break;
        case TagScheme::IOE:
          p = (i == s.end) ? 'E' : 'I';
          break;
        default:  // IOBES
          if (single) p = 'S';
          else if (i == s.start) p = 'B';
          else if (i == s.end) p = 'E';
          else p = 'I';
          break;
      }
      tags[i] = std::string(1, p) + "-" + s.label;
    }
  }
  return tags;
}

/// S -> B, E -> I; B, I, O unchanged.
inline std::vector<std::string> iobes_to_iob(const std::vector<std::string>& tags) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  for (const auto& tag : tags) {
    const auto t = detail::parse_tag(tag, TagScheme::IOBES);
    if (t.prefix == 'S') out.push_back("B-" + t.label);
    else if (t.prefix == 'E') out.push_back("I-" + t.label);
    else out.push_back(tag);
  }
  return out;
}

inline std::vector<std::string> convert_scheme(const std::vector<std::string>& tags,
                                               TagScheme from, TagScheme to) {
  if (from == to) return tags;
  return tags_from_spans(spans_from_tags(tags, from), tags.size(), to);
}

/// Chunk precision/recall/F1 plus per-word accuracy.
struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double per_word_accuracy = 0.0;
  std::size_t gold_spans = 0;
  std::size_t predicted_spans = 0;
  std::size_t correct_spans = 0;
  std::size_t words = 0;
  std::size_t correct_words = 0;
};

/// Exact-match span scoring: a predicted span is correct iff label, start and
/// end all match a gold span of the same sentence.
inline EvalReport evaluate_tags(const std::vector<std::vector<std::string>>& gold,
                                const std::vector<std::vector<std::string>>& predicted,
                                TagScheme scheme) {
  if (gold.size() != predicted.size())
    throw DataError("evaluate: sentence count mismatch");
  EvalReport r;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != predicted[s].size())
      throw DataError("evaluate: tag row length mismatch in sentence " + std::to_string(s));
    r.words += gold[s].size();
    for (std::size_t i = 0; i < gold[s].size(); ++i)
      if (gold[s][i] == predicted[s][i]) ++r.correct_words;
    auto g = spans_from_tags(gold[s], scheme);
    auto p = spans_from_tags(predicted[s], scheme);
    std::sort(g.begin(), g.end());
    std::sort(p.begin(), p.end());
    r.gold_spans += g.size();
    r.predicted_spans += p.size();
    std::vector<ChunkSpan> both;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(both));
    r.correct_spans += both.size();
  }
  if (r.predicted_spans > 0)
    r.precision = static_cast<double>(r.correct_spans) / static_cast<double>(r.predicted_spans);
  if (r.gold_spans > 0)
    r.recall = static_cast<double>(r.correct_spans) / static_cast<double>(r.gold_spans);
  if (r.precision + r.recall > 0)
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  if (r.words > 0)
    r.per_word_accuracy = static_cast<double>(r.correct_words) / static_cast<double>(r.words);
  return r;
}

/// conlleval-style one-liner, percentages with two decimals.
inline std::string format_report(const EvalReport& r, bool with_accuracy = false) {
  char buf[160];
  if (with_accuracy) {
    std::snprintf(buf, sizeof(buf),
                  "accuracy: %6.2f%%; precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f",
                  100.0 * r.per_word_accuracy, 100.0 * r.precision, 100.0 * r.recall,
                  100.0 * r.f1);
  } else {
    std::snprintf(buf, sizeof(buf), "precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f",
                  100.0 * r.precision, 100.0 * r.recall, 100.0 * r.f1);
  }
  return buf;
}

}  // namespace scratchtag
