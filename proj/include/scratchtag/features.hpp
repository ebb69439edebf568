#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "scratchtag/corpus.hpp"
#include "scratchtag/tagscheme.hpp"

namespace scratchtag {

// ---------------------------------------------------------------------------
// Capitalization

enum class CapsCategory : std::int32_t {
  Lower = 0,    // all letters lowercase
  AllCaps = 1,  // all letters uppercase
  InitCap = 2,  // first character uppercase, not all caps
  HasCap = 3,   // some other uppercase letter
  NoCaps = 4,   // no letters at all, or PADDING
};

inline constexpr std::size_t kCapsCategories = 5;

inline CapsCategory caps_feature(const std::string& raw) {
  if (raw == kPaddingWord) return CapsCategory::NoCaps;
  std::size_t letters = 0, lower = 0, upper = 0;
  for (unsigned char c : raw) {
    if (std::isalpha(c)) {
      ++letters;
      if (std::islower(c)) ++lower;
      else ++upper;
    }
  }
  if (letters == 0) return CapsCategory::NoCaps;
  if (lower == letters) return CapsCategory::Lower;
  if (upper == letters) return CapsCategory::AllCaps;
  if (std::isupper(static_cast<unsigned char>(raw[0]))) return CapsCategory::InitCap;
  return CapsCategory::HasCap;
}

// ---------------------------------------------------------------------------
// Suffixes

/// Lowercased last n characters, or the whole lowercased word if shorter.
inline std::string word_suffix(const std::string& raw, std::size_t n) {
  const std::size_t start = raw.size() > n ? raw.size() - n : 0;
  std::string s = raw.substr(start);
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::int32_t suffix_feature(const Dictionary& suffixes, const std::string& raw,
                                   std::size_t n) {
  const std::int32_t idx = suffixes.find(word_suffix(raw, n));
  return idx >= 0 ? idx : Dictionary::kRare;
}

// ---------------------------------------------------------------------------
// Gazetteer

enum class GazCategory : std::int32_t { LOC = 0, PER = 1, ORG = 2, MISC = 3 };
inline constexpr std::size_t kGazCategories = 4;

inline const char* gaz_category_name(GazCategory c) {
  switch (c) {
    case GazCategory::LOC: return "LOC";
    case GazCategory::PER: return "PER";
    case GazCategory::ORG: return "ORG";
    default: return "MISC";
  }
}

/// Category-labeled entity phrase lists, stored lowercased. Matching marks
/// every word inside any n-gram that exactly equals a phrase of the category.
class Gazetteer {
 public:
  void add(GazCategory cat, const std::string& phrase) {
    std::string p = lowercase(phrase);
    if (p.empty()) throw DataError("empty gazetteer phrase");
    auto& set = phrases_[static_cast<std::size_t>(cat)];
    std::size_t words = 1;
    for (char c : p)
      if (c == ' ') ++words;
    max_words_[static_cast<std::size_t>(cat)] =
        std::max(max_words_[static_cast<std::size_t>(cat)], words);
    set.insert(std::move(p));
  }

  /// Lines "CATEGORY<TAB>phrase words"; blank lines ignored.
  static Gazetteer load(std::istream& in) {
    Gazetteer g;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      auto fields = detail::split_fields(line);
      if (fields.empty()) continue;
      if (fields.size() < 2)
        throw DataError("gazetteer line " + std::to_string(line_no) + ": missing phrase");
      GazCategory cat;
      if (fields[0] == "LOC") cat = GazCategory::LOC;
      else if (fields[0] == "PER") cat = GazCategory::PER;
      else if (fields[0] == "ORG") cat = GazCategory::ORG;
      else if (fields[0] == "MISC") cat = GazCategory::MISC;
      else
        throw DataError("gazetteer line " + std::to_string(line_no) + ": unknown category '" +
                        fields[0] + "'");
      std::string phrase = fields[1];
      for (std::size_t i = 2; i < fields.size(); ++i) phrase += " " + fields[i];
      g.add(cat, phrase);
    }
    return g;
  }

  const std::unordered_set<std::string>& phrases(GazCategory cat) const {
    return phrases_[static_cast<std::size_t>(cat)];
  }

  /// One binary row per category; rows[c][t] == 1 iff word t lies inside a
  /// matching phrase of category c.
  std::array<std::vector<std::int32_t>, kGazCategories> match(
      const std::vector<std::string>& words) const {
    std::array<std::vector<std::int32_t>, kGazCategories> rows;
    const std::size_t T = words.size();
    std::vector<std::string> low(T);
    for (std::size_t t = 0; t < T; ++t) low[t] = lowercase(words[t]);
    for (std::size_t c = 0; c < kGazCategories; ++c) {
      rows[c].assign(T, 0);
      const auto& set = phrases_[c];
      if (set.empty()) continue;
      for (std::size_t i = 0; i < T; ++i) {
        std::string ngram;
        for (std::size_t len = 1; len <= max_words_[c] && i + len <= T; ++len) {
          if (len > 1) ngram += ' ';
          ngram += low[i + len - 1];
          if (set.count(ngram)) {
            for (std::size_t t = i; t < i + len; ++t) rows[c][t] = 1;
          }
        }
      }
    }
    return rows;
  }

  static std::string lowercase(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
  }

 private:
  std::array<std::unordered_set<std::string>, kGazCategories> phrases_;
  std::array<std::size_t, kGazCategories> max_words_{0, 0, 0, 0};
};

inline std::array<std::vector<std::int32_t>, kGazCategories> gazetteer_features(
    const std::vector<std::string>& words, const Gazetteer& g) {
  return g.match(words);
}

// ---------------------------------------------------------------------------
// Relative position

/// Encodes clamp(i - pos, [-clip, clip]) shifted into [0, 2*clip].
inline std::int32_t relative_position_feature(std::ptrdiff_t i, std::ptrdiff_t pos,
                                              std::ptrdiff_t clip) {
  if (clip < 1) throw std::invalid_argument("relative_position_feature: clip must be >= 1");
  const std::ptrdiff_t d = std::max(-clip, std::min(clip, i - pos));
  return static_cast<std::int32_t>(d + clip);
}

inline std::size_t relative_position_entries(std::size_t clip) { return 2 * clip + 1; }

// ---------------------------------------------------------------------------
// Parse trees

/// Constituency tree node. Leaves carry an empty label and cover the word
/// span [start, end]; initially each leaf is a single word.
struct ParseNode {
  std::string label;
  std::vector<ParseNode> children;
  std::size_t start = 0;
  std::size_t end = 0;

  bool is_leaf() const { return children.empty() && label.empty(); }
};

struct ParseTree {
  ParseNode root;
  std::vector<std::string> leaf_words;

  std::size_t leaf_count() const { return leaf_words.size(); }
};

namespace detail {

inline void assign_spans(ParseNode& node, std::size_t& next_leaf) {
  if (node.is_leaf()) {
    node.start = node.end = next_leaf++;
    return;
  }
  for (auto& c : node.children) assign_spans(c, next_leaf);
  node.start = node.children.front().start;
  node.end = node.children.back().end;
}

}  // namespace detail

/// Parses one bracketed tree, e.g. "(S (NP They) (VP are))". Labels and words
/// are whitespace-separated, parentheses delimit nodes.
inline ParseTree parse_tree_from_string(const std::string& text) {
  ParseTree tree;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  auto read_atom = [&]() -> std::string {
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) &&
           text[j] != '(' && text[j] != ')')
      ++j;
    std::string atom = text.substr(i, j - i);
    i = j;
    return atom;
  };
  std::function<ParseNode()> parse_node = [&]() -> ParseNode {
    // caller consumed '('
    skip_ws();
    ParseNode node;
    node.label = read_atom();
    if (node.label.empty()) throw DataError("parse tree: node without label");
    while (true) {
      skip_ws();
      if (i >= text.size()) throw DataError("parse tree: unbalanced parentheses");
      if (text[i] == ')') {
        ++i;
        break;
      }
      if (text[i] == '(') {
        ++i;
        node.children.push_back(parse_node());
      } else {
        ParseNode leaf;
        std::string word = read_atom();
        tree.leaf_words.push_back(word);
        node.children.push_back(std::move(leaf));
      }
    }
    if (node.children.empty()) throw DataError("parse tree: node '" + node.label + "' is empty");
    return node;
  };
  skip_ws();
  if (i >= text.size() || text[i] != '(') throw DataError("parse tree: expected '('");
  ++i;
  tree.root = parse_node();
  skip_ws();
  if (i != text.size()) throw DataError("parse tree: trailing input");
  std::size_t next_leaf = 0;
  detail::assign_spans(tree.root, next_leaf);
  return tree;
}

namespace detail {

/// Collapses every internal node whose children are all leaves into a single
/// leaf covering its span; one simultaneous pass.
inline ParseNode trim_terminal_branches(const ParseNode& node) {
  if (node.is_leaf()) return node;
  bool all_leaves = true;
  for (const auto& c : node.children)
    if (!c.is_leaf()) all_leaves = false;
  if (all_leaves) {
    ParseNode leaf;
    leaf.start = node.start;
    leaf.end = node.end;
    return leaf;
  }
  ParseNode out;
  out.label = node.label;
  out.start = node.start;
  out.end = node.end;
  out.children.reserve(node.children.size());
  for (const auto& c : node.children) out.children.push_back(trim_terminal_branches(c));
  return out;
}

/// Segments = maximal runs of adjacent leaf children, labeled by their parent.
/// Leaf children of the root stay unlabeled ("O").
inline void collect_leaf_segments(const ParseNode& node, bool is_root,
                                  std::vector<ChunkSpan>& out) {
  std::size_t i = 0;
  while (i < node.children.size()) {
    if (node.children[i].is_leaf()) {
      std::size_t j = i;
      while (j + 1 < node.children.size() && node.children[j + 1].is_leaf()) ++j;
      if (!is_root)
        out.push_back({node.label, node.children[i].start, node.children[j].end});
      i = j + 1;
    } else {
      collect_leaf_segments(node.children[i], false, out);
      ++i;
    }
  }
}

}  // namespace detail

inline std::vector<ChunkSpan> parse_level_segments(const ParseNode& root) {
  std::vector<ChunkSpan> segments;
  if (!root.is_leaf()) detail::collect_leaf_segments(root, true, segments);
  std::sort(segments.begin(), segments.end());
  return segments;
}

/// IOBES tag rows for levels 0..depth. Level 0 codes the tree leaves'
/// segmentation; each next level is recomputed after one trimming pass.
inline std::vector<std::vector<std::string>> parse_levels(const ParseTree& tree,
                                                          std::size_t depth) {
  std::vector<std::vector<std::string>> levels;
  levels.reserve(depth + 1);
  ParseNode current = tree.root;
  for (std::size_t level = 0; level <= depth; ++level) {
    levels.push_back(tags_from_spans(parse_level_segments(current), tree.leaf_count(),
                                     TagScheme::IOBES));
    current = detail::trim_terminal_branches(current);
  }
  return levels;
}

// ---------------------------------------------------------------------------
// Cascaded tags

/// Maps externally produced tags through their own dictionary, RARE fallback.
inline std::vector<std::int32_t> cascade_feature(const std::vector<std::string>& tags,
                                                 const Dictionary& dict) {
  std::vector<std::int32_t> out;
  out.reserve(tags.size());
  for (const auto& t : tags) {
    const std::int32_t idx = dict.find(t);
    out.push_back(idx >= 0 ? idx : Dictionary::kRare);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature pipeline

enum class ExtractorKind : std::uint8_t {
  Word = 0,
  Caps = 1,
  Suffix = 2,
  Gazetteer = 3,
  Cascade = 4,
  ParseLevel = 5,
  RelPosition = 6,
};

/// One discrete per-word feature: how to extract it and how to embed it.
struct FeatureConfig {
  std::string name;
  ExtractorKind kind = ExtractorKind::Word;
  std::size_t dim = 5;            // d^k_wrd
  Dictionary dict;                // Word, Suffix, Cascade, ParseLevel
  std::size_t suffix_len = 2;     // Suffix
  std::size_t source_column = 0;  // Cascade
  GazCategory category = GazCategory::LOC;  // Gazetteer
  std::size_t level = 0;          // ParseLevel
  std::size_t clip = 31;          // RelPosition
  std::size_t anchor = 0;         // RelPosition: 0 = word to tag, 1 = verb

  std::size_t table_rows() const {
    switch (kind) {
      case ExtractorKind::Caps: return kCapsCategories;
      case ExtractorKind::Gazetteer: return 2;
      case ExtractorKind::RelPosition: return relative_position_entries(clip);
      default: return dict.size();
    }
  }

  /// Index used for PADDING positions. RelPosition indices are computed from
  /// the padded coordinates instead.
  std::int32_t padding_index() const {
    switch (kind) {
      case ExtractorKind::Caps: return static_cast<std::int32_t>(CapsCategory::NoCaps);
      case ExtractorKind::Gazetteer: return 0;
      case ExtractorKind::Suffix: return Dictionary::kRare;
      case ExtractorKind::RelPosition: return 0;  // unused
      default: return Dictionary::kPadding;
    }
  }
};

/// The spec's Sentence: raw words plus one index row per feature. Rows for
/// RelPosition features stay empty; the network generates them per anchor.
struct Sentence {
  std::vector<std::string> raw_words;
  std::vector<std::vector<std::int32_t>> feature_rows;
  std::vector<std::int32_t> gold_tags;  // empty when unlabeled
  std::int32_t verb_position = -1;      // SRL only; -1 when absent

  std::size_t length() const { return raw_words.size(); }
};

/// Turns raw sentences into index rows for a fixed feature stack.
class SentenceEncoder {
 public:
  std::vector<FeatureConfig> features;
  std::shared_ptr<const Gazetteer> gazetteer;

  bool needs_columns() const {
    for (const auto& f : features)
      if (f.kind == ExtractorKind::Cascade) return true;
    return false;
  }
  bool needs_trees() const {
    for (const auto& f : features)
      if (f.kind == ExtractorKind::ParseLevel) return true;
    return false;
  }

  Sentence encode(const RawSentence& raw, const ParseTree* tree = nullptr) const {
    Sentence s;
    s.raw_words = raw.words();
    const std::size_t T = s.raw_words.size();
    s.feature_rows.resize(features.size());

    std::optional<std::array<std::vector<std::int32_t>, kGazCategories>> gaz_rows;
    std::vector<std::vector<std::string>> tree_levels;
    if (tree != nullptr && needs_trees()) {
      if (tree->leaf_count() != T)
        throw DataError("parse tree has " + std::to_string(tree->leaf_count()) +
                        " leaves for a sentence of length " + std::to_string(T));
      std::size_t max_level = 0;
      for (const auto& f : features)
        if (f.kind == ExtractorKind::ParseLevel) max_level = std::max(max_level, f.level);
      tree_levels = parse_levels(*tree, max_level);
    }

    for (std::size_t k = 0; k < features.size(); ++k) {
      const auto& f = features[k];
      auto& row = s.feature_rows[k];
      switch (f.kind) {
        case ExtractorKind::Word:
          row.reserve(T);
          for (const auto& w : s.raw_words) row.push_back(map_word(f.dict, w));
          break;
        case ExtractorKind::Caps:
          row.reserve(T);
          for (const auto& w : s.raw_words)
            row.push_back(static_cast<std::int32_t>(caps_feature(w)));
          break;
        case ExtractorKind::Suffix:
          row.reserve(T);
          for (const auto& w : s.raw_words)
            row.push_back(suffix_feature(f.dict, w, f.suffix_len));
          break;
        case ExtractorKind::Gazetteer: {
          if (!gazetteer) throw DataError("gazetteer feature without gazetteer data");
          if (!gaz_rows) gaz_rows = gazetteer->match(s.raw_words);
          row = (*gaz_rows)[static_cast<std::size_t>(f.category)];
          break;
        }
        case ExtractorKind::Cascade:
          row = cascade_feature(raw.column(f.source_column), f.dict);
          break;
        case ExtractorKind::ParseLevel: {
          if (tree == nullptr) throw DataError("parse-level feature without a parse tree");
          row = cascade_feature(tree_levels[f.level], f.dict);
          break;
        }
        case ExtractorKind::RelPosition:
          break;  // generated at forward time from the anchor
      }
    }
    return s;
  }
};

}  // namespace scratchtag
