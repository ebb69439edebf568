#pragma once

#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "scratchtag/corpus.hpp"
#include "scratchtag/crf.hpp"
#include "scratchtag/features.hpp"
#include "scratchtag/net.hpp"
#include "scratchtag/tagscheme.hpp"

namespace scratchtag {

enum class Loss : std::uint8_t { WLL = 0, SLL = 1 };

inline TableSpec table_spec_for(const FeatureConfig& f) {
  TableSpec t;
  t.rows = f.table_rows();
  t.dim = f.dim;
  t.padding_index = f.padding_index();
  t.rel_position = f.kind == ExtractorKind::RelPosition;
  t.clip = f.clip;
  t.anchor = f.anchor;
  return t;
}

inline NetworkSpec make_network_spec(Architecture arch,
                                     const std::vector<FeatureConfig>& features,
                                     std::size_t window, std::vector<std::size_t> hidden,
                                     std::size_t tag_count) {
  NetworkSpec spec;
  spec.arch = arch;
  spec.window = window;
  spec.hidden = std::move(hidden);
  spec.tags = tag_count;
  for (const auto& f : features) spec.tables.push_back(table_spec_for(f));
  return spec;
}

/// A trained tagger: the network with its transition scores, the feature
/// stack that feeds it, and the tag inventory it predicts.
struct Model {
  std::string task_name;
  Loss loss = Loss::SLL;
  bool chunked = true;  // tags form IOBES segments (chunk F1); else plain tags
  std::int32_t verb_column = -1;  // input column carrying the verb marker, -1 none
  SentenceEncoder encoder;
  std::vector<std::string> tags;
  Network net;
  TransitionParams transitions;

  std::size_t tag_count() const { return tags.size(); }

  std::int32_t tag_index(const std::string& tag) const {
    for (std::size_t i = 0; i < tags.size(); ++i)
      if (tags[i] == tag) return static_cast<std::int32_t>(i);
    return -1;
  }

  Model clone() const {
    Model m;
    m.task_name = task_name;
    m.loss = loss;
    m.chunked = chunked;
    m.verb_column = verb_column;
    m.encoder = encoder;
    m.tags = tags;
    m.net = net.clone();
    m.transitions = transitions;
    return m;
  }

  /// Parameter bytes plus dictionary strings; the dominant part of the
  /// process footprint when tagging.
  std::size_t memory_bytes() const {
    std::size_t bytes = 0;
    auto refs = const_cast<Model*>(this)->net.tensors();
    for (const auto& r : refs) bytes += r.size * sizeof(double);
    bytes += (transitions.transition.size() + transitions.initial.size()) * sizeof(double);
    for (const auto& f : encoder.features)
      for (const auto& e : f.dict.entries()) bytes += e.size() + sizeof(void*);
    for (const auto& t : tags) bytes += t.size();
    return bytes;
  }
};

/// Network scores for every word of an encoded sentence (T x tags).
inline Matrix score_sentence(const Model& model, const Sentence& s) {
  const auto ctx = model.net.embed(s.feature_rows, s.length());
  if (model.net.spec().arch == Architecture::Window)
    return model.net.window_scores_all(ctx, nullptr);
  Matrix f(s.length(), model.tag_count());
  bool needs_verb = false;
  for (const auto& t : model.net.spec().tables)
    if (t.rel_position && t.anchor == 1) needs_verb = true;
  if (needs_verb && s.verb_position < 0)
    throw DataError("sentence approach model needs a verb position");
  for (std::size_t t = 0; t < s.length(); ++t) {
    const std::ptrdiff_t anchors[2] = {static_cast<std::ptrdiff_t>(t), s.verb_position};
    Vector scores = model.net.sentence_scores(ctx, anchors, nullptr);
    for (std::size_t k = 0; k < scores.size(); ++k) f(t, k) = scores[k];
  }
  return f;
}

/// Decodes tag indices: Viterbi under SLL, per-word argmax under WLL
/// (ties pick the smaller tag index).
inline std::vector<std::int32_t> decode_scores(const Model& model, const Matrix& f) {
  if (model.loss == Loss::SLL) return viterbi(f, model.transitions).path;
  std::vector<std::int32_t> path(f.rows());
  for (std::size_t t = 0; t < f.rows(); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < f.cols(); ++k)
      if (f(t, k) > f(t, best)) best = k;
    path[t] = static_cast<std::int32_t>(best);
  }
  return path;
}

inline std::vector<std::string> tag_sentence(const Model& model, const Sentence& s) {
  const auto path = decode_scores(model, score_sentence(model, s));
  std::vector<std::string> out;
  out.reserve(path.size());
  for (auto k : path) out.push_back(model.tags[k]);
  return out;
}

// ---------------------------------------------------------------------------
// Binary model format: magic "SCRT", version u32, little-endian throughout;
// counts and dims as u32, strings length-prefixed UTF-8, tensors row-major
// IEEE-754 64-bit in declared layer order.

namespace io {

inline constexpr char kMagic[4] = {'S', 'C', 'R', 'T'};
inline constexpr std::uint32_t kVersion = 1;

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u8(std::ostream& out, std::uint8_t v) { put_bytes(out, &v, 1); }

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  put_bytes(out, b, 4);
}

inline void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

inline void put_doubles(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    put_bytes(out, b, 8);
  }
}

inline void get_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw ModelError(ModelError::Kind::Truncated, "model file truncated");
}

inline std::uint8_t get_u8(std::istream& in) {
  std::uint8_t v;
  get_bytes(in, &v, 1);
  return v;
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  get_bytes(in, b, 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::string get_str(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  std::string s(n, '\0');
  if (n) get_bytes(in, s.data(), n);
  return s;
}

inline void get_doubles(std::istream& in, std::span<double> values) {
  for (double& v : values) {
    unsigned char b[8];
    get_bytes(in, b, 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
}

}  // namespace io

inline void save_model(const Model& model, std::ostream& out) {
  io::put_bytes(out, io::kMagic, 4);
  io::put_u32(out, io::kVersion);
  io::put_str(out, model.task_name);
  io::put_u8(out, static_cast<std::uint8_t>(model.loss));
  io::put_u8(out, model.chunked ? 1 : 0);
  io::put_u32(out, static_cast<std::uint32_t>(model.verb_column));
  const NetworkSpec& spec = model.net.spec();
  io::put_u8(out, static_cast<std::uint8_t>(spec.arch));
  io::put_u32(out, static_cast<std::uint32_t>(spec.window));
  io::put_u32(out, static_cast<std::uint32_t>(model.tags.size()));
  for (const auto& t : model.tags) io::put_str(out, t);
  io::put_u32(out, static_cast<std::uint32_t>(spec.hidden.size()));
  for (std::size_t h : spec.hidden) io::put_u32(out, static_cast<std::uint32_t>(h));

  io::put_u32(out, static_cast<std::uint32_t>(model.encoder.features.size()));
  for (const auto& f : model.encoder.features) {
    io::put_str(out, f.name);
    io::put_u8(out, static_cast<std::uint8_t>(f.kind));
    io::put_u32(out, static_cast<std::uint32_t>(f.dim));
    io::put_u32(out, static_cast<std::uint32_t>(f.suffix_len));
    io::put_u32(out, static_cast<std::uint32_t>(f.source_column));
    io::put_u8(out, static_cast<std::uint8_t>(f.category));
    io::put_u32(out, static_cast<std::uint32_t>(f.level));
    io::put_u32(out, static_cast<std::uint32_t>(f.clip));
    io::put_u8(out, static_cast<std::uint8_t>(f.anchor));
    const bool has_dict = f.kind == ExtractorKind::Word || f.kind == ExtractorKind::Suffix ||
                          f.kind == ExtractorKind::Cascade || f.kind == ExtractorKind::ParseLevel;
    io::put_u8(out, has_dict ? 1 : 0);
    if (has_dict) {
      io::put_u32(out, static_cast<std::uint32_t>(f.dict.size()));
      for (const auto& e : f.dict.entries()) io::put_str(out, e);
    }
  }

  const bool has_gaz = model.encoder.gazetteer != nullptr;
  io::put_u8(out, has_gaz ? 1 : 0);
  if (has_gaz) {
    for (std::size_t c = 0; c < kGazCategories; ++c) {
      const auto& set = model.encoder.gazetteer->phrases(static_cast<GazCategory>(c));
      std::vector<std::string> sorted(set.begin(), set.end());
      std::sort(sorted.begin(), sorted.end());
      io::put_u32(out, static_cast<std::uint32_t>(sorted.size()));
      for (const auto& p : sorted) io::put_str(out, p);
    }
  }

  auto refs = const_cast<Model&>(model).net.tensors();
  for (const auto& r : refs) io::put_doubles(out, {r.data, r.size});
  io::put_doubles(out, {model.transitions.transition.data(), model.transitions.transition.size()});
  io::put_doubles(out, model.transitions.initial);
}

inline Model load_model(std::istream& in) {
  char magic[4];
  io::get_bytes(in, magic, 4);
  if (std::memcmp(magic, io::kMagic, 4) != 0)
    throw ModelError(ModelError::Kind::BadMagic, "not a model file (bad magic)");
  const std::uint32_t version = io::get_u32(in);
  if (version != io::kVersion)
    throw ModelError(ModelError::Kind::BadVersion,
                     "unsupported model format version " + std::to_string(version));
  Model model;
  model.task_name = io::get_str(in);
  model.loss = static_cast<Loss>(io::get_u8(in));
  model.chunked = io::get_u8(in) != 0;
  model.verb_column = static_cast<std::int32_t>(io::get_u32(in));
  const auto arch = static_cast<Architecture>(io::get_u8(in));
  const std::size_t window = io::get_u32(in);
  const std::uint32_t tag_count = io::get_u32(in);
  for (std::uint32_t i = 0; i < tag_count; ++i) model.tags.push_back(io::get_str(in));
  std::vector<std::size_t> hidden(io::get_u32(in));
  for (auto& h : hidden) h = io::get_u32(in);

  const std::uint32_t feature_count = io::get_u32(in);
  for (std::uint32_t k = 0; k < feature_count; ++k) {
    FeatureConfig f;
    f.name = io::get_str(in);
    f.kind = static_cast<ExtractorKind>(io::get_u8(in));
    f.dim = io::get_u32(in);
    f.suffix_len = io::get_u32(in);
    f.source_column = io::get_u32(in);
    f.category = static_cast<GazCategory>(io::get_u8(in));
    f.level = io::get_u32(in);
    f.clip = io::get_u32(in);
    f.anchor = io::get_u8(in);
    if (io::get_u8(in) != 0) {
      std::vector<std::string> entries(io::get_u32(in));
      for (auto& e : entries) e = io::get_str(in);
      f.dict = Dictionary::from_entries(std::move(entries));
    }
    model.encoder.features.push_back(std::move(f));
  }

  if (io::get_u8(in) != 0) {
    auto gaz = std::make_shared<Gazetteer>();
    for (std::size_t c = 0; c < kGazCategories; ++c) {
      const std::uint32_t n = io::get_u32(in);
      for (std::uint32_t i = 0; i < n; ++i)
        gaz->add(static_cast<GazCategory>(c), io::get_str(in));
    }
    model.encoder.gazetteer = std::move(gaz);
  }

  NetworkSpec spec = make_network_spec(arch, model.encoder.features, window, std::move(hidden),
                                       model.tags.size());
  try {
    model.net = Network::init(spec, 0);
  } catch (const std::invalid_argument& e) {
    throw ModelError(ModelError::Kind::Inconsistent, e.what());
  }
  auto refs = model.net.tensors();
  for (auto& r : refs) io::get_doubles(in, {r.data, r.size});
  model.transitions = TransitionParams(model.tags.size());
  io::get_doubles(in, {model.transitions.transition.data(), model.transitions.transition.size()});
  io::get_doubles(in, {model.transitions.initial.data(), model.transitions.initial.size()});
  if (in.peek() != std::istream::traits_type::eof())
    throw ModelError(ModelError::Kind::Inconsistent, "trailing bytes after model payload");
  return model;
}

// ---------------------------------------------------------------------------
// Embedding text export: one line per word, "word v1 ... v_d".

inline void save_embeddings(const Dictionary& dict, const Matrix& table, std::ostream& out) {
  if (dict.size() != table.rows()) throw DataError("save_embeddings: dictionary/table mismatch");
  char buf[40];
  for (std::size_t w = 0; w < table.rows(); ++w) {
    out << dict.word(static_cast<std::int32_t>(w));
    for (std::size_t j = 0; j < table.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), " %.17g", table(w, j));
      out << buf;
    }
    out << '\n';
  }
}

struct Embeddings {
  std::vector<std::string> words;
  Matrix vectors;  // one row per word
  std::unordered_map<std::string, std::size_t> index;

  std::size_t dim() const { return vectors.cols(); }
};

inline Embeddings load_embeddings(std::istream& in) {
  std::vector<std::string> words;
  std::vector<Vector> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = detail::split_fields(line);
    if (fields.empty()) continue;
    Vector v;
    v.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        v.push_back(std::stod(fields[i]));
      } catch (const std::exception&) {
        throw DataError("embeddings line " + std::to_string(line_no) + ": bad number '" +
                        fields[i] + "'");
      }
    }
    if (!rows.empty() && v.size() != rows.front().size())
      throw DataError("embeddings line " + std::to_string(line_no) + ": dimension mismatch");
    words.push_back(fields[0]);
    rows.push_back(std::move(v));
  }
  Embeddings e;
  e.words = std::move(words);
  e.vectors = Matrix(e.words.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t w = 0; w < rows.size(); ++w)
    for (std::size_t j = 0; j < rows[w].size(); ++j) e.vectors(w, j) = rows[w][j];
  for (std::size_t w = 0; w < e.words.size(); ++w) e.index.emplace(e.words[w], w);
  return e;
}

}  // namespace scratchtag
