#pragma once

#include <cctype>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "scratchtag/core.hpp"

namespace scratchtag {

inline constexpr const char* kPaddingWord = "PADDING";
inline constexpr const char* kRareWord = "RARE";

/// Lowercases ASCII letters and replaces every maximal digit run with the
/// literal "NUMBER". The marker itself is preserved, so the function is
/// idempotent.
inline std::string normalize_word(const std::string& raw) {
  if (raw.empty()) throw std::invalid_argument("normalize_word: empty token");
  static constexpr std::string_view kMarker = "NUMBER";
  std::string out;
  out.reserve(raw.size());
  std::size_t i = 0;
  while (i < raw.size()) {
    const unsigned char c = static_cast<unsigned char>(raw[i]);
    if (std::isdigit(c)) {
      while (i < raw.size() && std::isdigit(static_cast<unsigned char>(raw[i]))) ++i;
      out += kMarker;
    } else if (raw.compare(i, kMarker.size(), kMarker) == 0) {
      out += kMarker;
      i += kMarker.size();
    } else {
      out += static_cast<char>(std::tolower(c));
      ++i;
    }
  }
  return out;
}

/// Frequency-ranked word index with PADDING and RARE reserved at 0 and 1.
class Dictionary {
 public:
  static constexpr std::int32_t kPadding = 0;
  static constexpr std::int32_t kRare = 1;

  Dictionary() { reset({}); }
  explicit Dictionary(std::vector<std::string> ranked_words) { reset(std::move(ranked_words)); }

  /// Builds from already-ordered entries including the reserved ones
  /// (e.g. a dictionary file). Validates the reserved header.
  static Dictionary from_entries(std::vector<std::string> entries) {
    if (entries.size() < 2 || entries[0] != kPaddingWord || entries[1] != kRareWord)
      throw DataError("dictionary must start with PADDING and RARE");
    Dictionary d;
    d.entries_ = std::move(entries);
    d.index_.clear();
    for (std::size_t i = 0; i < d.entries_.size(); ++i) {
      if (!d.index_.emplace(d.entries_[i], static_cast<std::int32_t>(i)).second)
        throw DataError("duplicate dictionary entry '" + d.entries_[i] + "'");
    }
    return d;
  }

  std::size_t size() const { return entries_.size(); }
  const std::string& word(std::int32_t index) const { return entries_.at(index); }
  const std::vector<std::string>& entries() const { return entries_; }

  /// Index of an exact (already normalized) entry, or -1.
  std::int32_t find(const std::string& entry) const {
    auto it = index_.find(entry);
    return it == index_.end() ? -1 : it->second;
  }

  bool is_prefix_of(const Dictionary& larger) const {
    if (size() > larger.size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (entries_[i] != larger.entries_[i]) return false;
    return true;
  }

 private:
  void reset(std::vector<std::string> ranked) {
    entries_ = {kPaddingWord, kRareWord};
    for (auto& w : ranked) entries_.push_back(std::move(w));
    index_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i)
      index_.emplace(entries_[i], static_cast<std::int32_t>(i));
  }

  std::vector<std::string> entries_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Maps a raw token to its dictionary index, falling back to RARE. The
/// reserved literals map to their own indices.
inline std::int32_t map_word(const Dictionary& dict, const std::string& raw) {
  if (raw == kPaddingWord) return Dictionary::kPadding;
  if (raw == kRareWord) return Dictionary::kRare;
  const std::int32_t idx = dict.find(normalize_word(raw));
  return idx >= 0 ? idx : Dictionary::kRare;
}

/// Counts normalized tokens and keeps the (max_size - 2) most frequent,
/// ties broken by first occurrence. Pass normalize=false for dictionaries
/// over strings that are not words (suffixes, cascaded tags).
class DictionaryBuilder {
 public:
  explicit DictionaryBuilder(bool normalize = true) : normalize_(normalize) {}

  void add(const std::string& raw_token) {
    const std::string w = normalize_ ? normalize_word(raw_token) : raw_token;
    auto [it, inserted] = counts_.emplace(w, Entry{0, order_.size()});
    if (inserted) order_.push_back(w);
    ++it->second.count;
  }

  Dictionary build(std::size_t max_size) const {
    if (max_size < 3)
      throw std::invalid_argument("build_dictionary: max_size must be at least 3");
    std::vector<std::pair<std::string, Entry>> ranked;
    ranked.reserve(order_.size());
    for (std::size_t i = 0; i < order_.size(); ++i)
      ranked.emplace_back(order_[i], counts_.at(order_[i]));
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second.count != b.second.count) return a.second.count > b.second.count;
      return a.second.first_seen < b.second.first_seen;
    });
    if (ranked.size() > max_size - 2) ranked.resize(max_size - 2);
    std::vector<std::string> words;
    words.reserve(ranked.size());
    for (auto& [w, e] : ranked) words.push_back(w);
    return Dictionary(std::move(words));
  }

 private:
  struct Entry {
    std::size_t count;
    std::size_t first_seen;
  };
  bool normalize_ = true;
  std::unordered_map<std::string, Entry> counts_;
  std::vector<std::string> order_;
};

template <typename TokenRange>
Dictionary build_dictionary(const TokenRange& tokens, std::size_t max_size) {
  DictionaryBuilder b;
  for (const auto& t : tokens) b.add(t);
  return b.build(max_size);
}

/// Extends an existing dictionary with the `additional` most frequent new
/// words of another corpus. The old entries keep their indices, so models
/// can be grown onto the result.
template <typename TokenRange>
Dictionary extend_dictionary(const Dictionary& base, const TokenRange& tokens,
                             std::size_t additional) {
  DictionaryBuilder b;
  for (const auto& t : tokens) b.add(t);
  const Dictionary ranked = b.build(std::numeric_limits<std::size_t>::max());
  std::vector<std::string> entries = base.entries();
  for (const auto& w : ranked.entries()) {
    if (entries.size() >= base.size() + additional) break;
    if (base.find(w) < 0) entries.push_back(w);
  }
  return Dictionary::from_entries(std::move(entries));
}

/// Dictionary file: one entry per line, line number = index.
inline void save_dictionary(const Dictionary& dict, std::ostream& out) {
  for (const auto& w : dict.entries()) out << w << '\n';
}

inline Dictionary load_dictionary(std::istream& in) {
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    entries.push_back(line);
  }
  return Dictionary::from_entries(std::move(entries));
}

struct CorpusStats {
  std::size_t token_count = 0;
  std::size_t type_count = 0;
  double coverage = 0.0;  // fraction of tokens mapped to non-RARE indices
};

/// One CoNLL sentence before encoding: tokens with all their columns.
struct RawSentence {
  std::vector<std::vector<std::string>> rows;  // rows[t][col]
  std::size_t word_column = 0;

  std::size_t length() const { return rows.size(); }
  const std::string& word(std::size_t t) const { return rows[t][word_column]; }
  std::vector<std::string> words() const {
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[word_column]);
    return out;
  }
  std::vector<std::string> column(std::size_t col) const {
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
      if (col >= r.size()) throw DataError("column index out of range");
      out.push_back(r[col]);
    }
    return out;
  }
};

/// Position of the verb marker: the first row whose column is not "-",
/// or -1 when the sentence has none.
inline std::int32_t find_verb_position(const RawSentence& raw, std::size_t column) {
  for (std::size_t t = 0; t < raw.length(); ++t)
    if (raw.rows[t].size() > column && raw.rows[t][column] != "-")
      return static_cast<std::int32_t>(t);
  return -1;
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

}  // namespace detail

/// Streaming CoNLL reader: one token per line, columns split on runs of
/// spaces/tabs, sentences separated by blank lines. Ragged rows raise a
/// DataError carrying the line number; the reader stays usable so callers
/// may skip the bad sentence and continue.
class ConllReader {
 public:
  explicit ConllReader(std::istream& in, std::size_t word_column = 0)
      : in_(in), word_column_(word_column) {}

  /// Returns the next sentence, or nullopt at end of input.
  std::optional<RawSentence> next() {
    RawSentence sent;
    sent.word_column = word_column_;
    std::string line;
    std::size_t columns = 0;
    bool bad = false;
    std::size_t bad_line = 0;
    while (std::getline(in_, line)) {
      ++line_number_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      auto fields = detail::split_fields(line);
      if (fields.empty()) {
        if (sent.rows.empty() && !bad) continue;  // leading/extra blank lines
        break;
      }
      if (sent.rows.empty() && !bad) {
        columns = fields.size();
      } else if (fields.size() != columns && !bad) {
        bad = true;
        bad_line = line_number_;
      }
      sent.rows.push_back(std::move(fields));
    }
    if (bad)
      throw DataError("ragged CoNLL row at line " + std::to_string(bad_line));
    if (sent.rows.empty()) return std::nullopt;
    if (word_column_ >= columns)
      throw DataError("word column " + std::to_string(word_column_) + " missing");
    return sent;
  }

 private:
  std::istream& in_;
  std::size_t word_column_;
  std::size_t line_number_ = 0;
};

inline std::vector<RawSentence> read_conll(std::istream& in, std::size_t word_column = 0) {
  std::vector<RawSentence> out;
  ConllReader reader(in, word_column);
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

/// Writes sentences back out with the predicted tag appended as the final
/// column. Pass an empty prediction list to reproduce the input columns.
inline void write_conll(const std::vector<RawSentence>& sentences,
                        const std::vector<std::vector<std::string>>& predictions,
                        std::ostream& out) {
  if (!predictions.empty() && predictions.size() != sentences.size())
    throw DataError("write_conll: prediction count mismatch");
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    if (!predictions.empty() && predictions[s].size() != sentences[s].length())
      throw DataError("write_conll: tag row length mismatch in sentence " + std::to_string(s));
    for (std::size_t t = 0; t < sentences[s].length(); ++t) {
      const auto& row = sentences[s].rows[t];
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out << ' ';
        out << row[c];
      }
      if (!predictions.empty()) out << ' ' << predictions[s][t];
      out << '\n';
    }
    out << '\n';
  }
}

/// Plain-text corpus: whitespace-tokenized, one sentence per line.
inline std::vector<std::vector<std::string>> read_plain_corpus(std::istream& in) {
  std::vector<std::vector<std::string>> sentences;
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = detail::split_fields(line);
    if (!tokens.empty()) sentences.push_back(std::move(tokens));
  }
  return sentences;
}

template <typename TokenRange>
CorpusStats corpus_stats(const TokenRange& tokens, const Dictionary& dict) {
  CorpusStats st;
  std::unordered_map<std::string, bool> seen;
  std::size_t covered = 0;
  for (const auto& t : tokens) {
    ++st.token_count;
    const std::string w = normalize_word(t);
    seen.emplace(w, true);
    if (dict.find(w) >= 0 && dict.find(w) != Dictionary::kRare) ++covered;
  }
  st.type_count = seen.size();
  st.coverage = st.token_count ? static_cast<double>(covered) / st.token_count : 0.0;
  return st;
}

}  // namespace scratchtag
