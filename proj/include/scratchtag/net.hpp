#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scratchtag/core.hpp"

namespace scratchtag {

enum class Architecture : std::uint8_t { Window = 0, Sentence = 1 };

/// One lookup table: `rows` discrete values embedded in `dim` dimensions.
/// Relative-position tables have no externally supplied index row; their
/// indices are computed from an anchor position (0 = word to tag, 1 = verb).
struct TableSpec {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::int32_t padding_index = 0;
  bool rel_position = false;
  std::size_t clip = 0;
  std::size_t anchor = 0;
};

/// Shapes of a window or sentence network. `hidden` lists hidden-unit counts:
/// for the window approach they are the linear layers between the
/// concatenated window and the tag scores (possibly none); for the sentence
/// approach the first entry is the convolution output size and the rest are
/// the linear layers after the max.
struct NetworkSpec {
  Architecture arch = Architecture::Window;
  std::vector<TableSpec> tables;
  std::size_t window = 5;  // d_win
  std::vector<std::size_t> hidden;
  std::size_t tags = 0;

  std::size_t feature_dim() const {
    std::size_t d = 0;
    for (const auto& t : tables) d += t.dim;
    return d;
  }
  std::size_t pad() const { return window / 2; }

  void validate() const {
    if (window == 0 || window % 2 == 0)
      throw std::invalid_argument("network spec: window size must be odd");
    if (tags == 0) throw std::invalid_argument("network spec: no output tags");
    if (tables.empty()) throw std::invalid_argument("network spec: no lookup tables");
    for (const auto& t : tables) {
      if (t.dim == 0 || t.rows == 0)
        throw std::invalid_argument("network spec: empty lookup table");
      if (t.rel_position && arch != Architecture::Sentence)
        throw std::invalid_argument(
            "network spec: relative-position features require the sentence approach");
      if (t.rel_position && (t.clip == 0 || t.rows != 2 * t.clip + 1))
        throw std::invalid_argument(
            "network spec: relative-position table must have 2*clip+1 rows");
      if (!t.rel_position &&
          (t.padding_index < 0 || static_cast<std::size_t>(t.padding_index) >= t.rows))
        throw std::invalid_argument("network spec: padding index out of range");
    }
    if (arch == Architecture::Sentence && hidden.empty())
      throw std::invalid_argument("network spec: sentence approach needs a convolution size");
    for (std::size_t h : hidden)
      if (h == 0) throw std::invalid_argument("network spec: zero-size hidden layer");
  }
};

// ---------------------------------------------------------------------------
// Layer primitives

struct Linear {
  Matrix weight;  // out x in
  Vector bias;    // out

  Linear() = default;
  Linear(std::size_t out, std::size_t in) : weight(out, in), bias(out, 0.0) {}

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
  std::size_t fan_in() const { return weight.cols(); }
};

struct LinearGrad {
  Matrix weight;
  Vector bias;

  LinearGrad() = default;
  explicit LinearGrad(const Linear& l)
      : weight(l.out_dim(), l.in_dim(), 0.0), bias(l.out_dim(), 0.0) {}
};

inline Vector linear_forward(const Linear& l, std::span<const double> in) {
  if (in.size() != l.in_dim())
    throw std::invalid_argument("linear_forward: shape mismatch");
  Vector out(l.out_dim());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = l.bias[i] + dot(l.weight.row_span(i), in);
  return out;
}

/// Accumulates parameter gradients and, when grad_in is non-empty, the
/// gradient with respect to the input.
inline void linear_backward(const Linear& l, std::span<const double> in,
                            std::span<const double> grad_out, LinearGrad& grads,
                            std::span<double> grad_in) {
  if (in.size() != l.in_dim() || grad_out.size() != l.out_dim())
    throw std::invalid_argument("linear_backward: shape mismatch");
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const double g = grad_out[i];
    grads.bias[i] += g;
    axpy(g, in, grads.weight.row_span(i));
    if (!grad_in.empty()) axpy(g, l.weight.row_span(i), grad_in);
  }
}

inline double hardtanh(double x) { return x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x); }

inline Vector hardtanh_forward(std::span<const double> in) {
  Vector out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = hardtanh(in[i]);
  return out;
}

/// `pre` is the input the forward pass saw; the gradient passes inside
/// [-1, 1] (inclusive) and is zero outside.
inline Vector hardtanh_backward(std::span<const double> pre, std::span<const double> grad_out) {
  Vector g(pre.size(), 0.0);
  for (std::size_t i = 0; i < pre.size(); ++i)
    if (pre[i] >= -1.0 && pre[i] <= 1.0) g[i] = grad_out[i];
  return g;
}

/// Concatenation of `window` consecutive position vectors centered at padded
/// position `center`; contiguous by construction of the position-major layout.
inline std::span<const double> window_view(const Matrix& seq, std::size_t center,
                                           std::size_t window) {
  const std::size_t half = window / 2;
  if (center < half || center + half >= seq.rows())
    throw std::invalid_argument("window_view: window exceeds matrix bounds");
  return {seq.row(center - half), window * seq.cols()};
}

/// Gathers lookup rows for every feature: output row t is the concatenation
/// of the per-feature embeddings of position t.
inline Matrix lookup_forward(std::span<const Matrix> tables,
                             const std::vector<std::vector<std::int32_t>>& rows) {
  if (tables.size() != rows.size())
    throw std::invalid_argument("lookup_forward: table/row count mismatch");
  const std::size_t T = rows.empty() ? 0 : rows[0].size();
  std::size_t d = 0;
  for (const auto& t : tables) d += t.cols();
  Matrix out(T, d);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < tables.size(); ++k) {
    if (rows[k].size() != T)
      throw std::invalid_argument("lookup_forward: ragged feature rows");
    const std::size_t dim = tables[k].cols();
    for (std::size_t t = 0; t < T; ++t) {
      const std::int32_t idx = rows[k][t];
      if (idx < 0 || static_cast<std::size_t>(idx) >= tables[k].rows())
        throw std::out_of_range("lookup_forward: index out of range");
      const double* src = tables[k].row(idx);
      double* dst = out.row(t) + offset;
      for (std::size_t j = 0; j < dim; ++j) dst[j] = src[j];
    }
    offset += dim;
  }
  return out;
}

/// Applies the same filter bank to every window of the padded sequence.
inline Matrix conv_forward(const Linear& filter, const Matrix& padded, std::size_t window) {
  const std::size_t d = padded.cols();
  if (filter.in_dim() != window * d)
    throw std::invalid_argument("conv_forward: filter/input shape mismatch");
  if (padded.rows() < window)
    throw std::invalid_argument("conv_forward: sequence shorter than the window");
  const std::size_t T = padded.rows() + 1 - window;
  Matrix out(T, filter.out_dim());
  for (std::size_t t = 0; t < T; ++t) {
    const std::span<const double> win{padded.row(t), window * d};
    double* o = out.row(t);
    for (std::size_t i = 0; i < filter.out_dim(); ++i)
      o[i] = filter.bias[i] + dot(filter.weight.row_span(i), win);
  }
  return out;
}

/// Parameter gradients summed over all windows; input gradients accumulated
/// window by window into grad_in (same shape as padded) when provided.
inline void conv_backward(const Linear& filter, const Matrix& padded, std::size_t window,
                          const Matrix& grad_out, LinearGrad& grads, Matrix* grad_in) {
  const std::size_t d = padded.cols();
  const std::size_t T = grad_out.rows();
  if (padded.rows() + 1 - window != T || grad_out.cols() != filter.out_dim())
    throw std::invalid_argument("conv_backward: shape mismatch");
  for (std::size_t t = 0; t < T; ++t) {
    const std::span<const double> win{padded.row(t), window * d};
    std::span<double> gwin;
    if (grad_in != nullptr) gwin = {grad_in->row(t), window * d};
    for (std::size_t i = 0; i < filter.out_dim(); ++i) {
      const double g = grad_out(t, i);
      if (g == 0.0) continue;
      grads.bias[i] += g;
      axpy(g, win, grads.weight.row_span(i));
      if (grad_in != nullptr) axpy(g, filter.weight.row_span(i), gwin);
    }
  }
}

struct MaxResult {
  Vector values;                    // per column, max over positions
  std::vector<std::int32_t> argmax;  // position of the max, ties -> smallest
};

inline MaxResult max_forward(const Matrix& in) {
  if (in.rows() == 0) throw std::invalid_argument("max_forward: empty sequence");
  MaxResult r;
  r.values.assign(in.cols(), 0.0);
  r.argmax.assign(in.cols(), 0);
  for (std::size_t i = 0; i < in.cols(); ++i) {
    double best = in(0, i);
    std::int32_t arg = 0;
    for (std::size_t t = 1; t < in.rows(); ++t) {
      if (in(t, i) > best) {
        best = in(t, i);
        arg = static_cast<std::int32_t>(t);
      }
    }
    r.values[i] = best;
    r.argmax[i] = arg;
  }
  return r;
}

/// Routes each column's gradient to the position that won the max.
inline void max_backward(const std::vector<std::int32_t>& argmax,
                         std::span<const double> grad_out, Matrix& grad_in) {
  for (std::size_t i = 0; i < argmax.size(); ++i)
    grad_in(argmax[i], i) += grad_out[i];
}

// ---------------------------------------------------------------------------
// Gradients

/// Sparse lookup gradients: only rows of values that occur in the example.
struct LookupGrad {
  std::map<std::int32_t, Vector> rows;

  void add(std::int32_t index, std::span<const double> grad) {
    auto [it, inserted] = rows.try_emplace(index, grad.size(), 0.0);
    axpy(1.0, grad, it->second);
  }
};

struct NetworkGrads {
  std::vector<LookupGrad> tables;
  LinearGrad conv;
  std::vector<LinearGrad> hidden;
  LinearGrad output;
};

// ---------------------------------------------------------------------------
// Traces

struct MlpTrace {
  std::vector<Vector> pre;  // pre-activation output of each hidden linear
  std::vector<Vector> act;  // after HardTanh
};

struct WindowTrace {
  std::size_t t = 0;  // unpadded center position
  MlpTrace mlp;
};

struct SentenceTrace {
  std::vector<std::vector<std::int32_t>> rows;  // padded rows for every table
  Matrix embedded;                              // (T + 2*pad) x feature_dim
  Matrix conv_out;                              // T x hidden[0]
  std::vector<std::int32_t> argmax;
  Vector max_out;
  MlpTrace mlp;
};

/// Per-sentence gather shared across positions: padded index rows and the
/// embedded matrix. Relative-position tables stay empty/zero until a forward
/// pass fills them for a concrete anchor.
struct SentenceContext {
  std::vector<std::vector<std::int32_t>> padded_rows;
  Matrix embedded;
  std::size_t length = 0;  // unpadded T
};

// ---------------------------------------------------------------------------
// Network

/// Window or sentence network. Parameter tensors are shared_ptr-held so that
/// multi-task models can physically share lookup tables (and the first
/// hidden/convolution layer); the class itself is move-only and deep copies
/// go through clone().
class Network {
 public:
  Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  /// Fan-in initialization: every tensor uniform on [-a, a] with
  /// a = sqrt(3) * fan_in^(-1/4); fan-ins are 1 for lookup tables and the
  /// input dimension for linear/convolution layers.
  static Network init(const NetworkSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    return init(spec, rng);
  }

  static Network init(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    Network net;
    net.spec_ = spec;
    for (const auto& t : spec.tables) {
      auto m = std::make_shared<Matrix>(t.rows, t.dim);
      uniform_init({m->data(), m->size()}, 1, rng);
      net.tables_.push_back(std::move(m));
    }
    std::size_t in = spec.feature_dim();
    if (spec.arch == Architecture::Window) in *= spec.window;
    auto make_linear = [&rng](std::size_t out, std::size_t in_dim) {
      auto l = std::make_shared<Linear>(out, in_dim);
      uniform_init({l->weight.data(), l->weight.size()}, in_dim, rng);
      uniform_init({l->bias.data(), l->bias.size()}, in_dim, rng);
      return l;
    };
    std::size_t first_mlp = 0;
    if (spec.arch == Architecture::Sentence) {
      net.conv_ = make_linear(spec.hidden[0], spec.feature_dim() * spec.window);
      in = spec.hidden[0];
      first_mlp = 1;
    }
    for (std::size_t h = first_mlp; h < spec.hidden.size(); ++h) {
      net.hidden_.push_back(make_linear(spec.hidden[h], in));
      in = spec.hidden[h];
    }
    net.output_ = make_linear(spec.tags, in);
    return net;
  }

  Network clone() const {
    Network net;
    net.spec_ = spec_;
    for (const auto& t : tables_) net.tables_.push_back(std::make_shared<Matrix>(*t));
    if (conv_) net.conv_ = std::make_shared<Linear>(*conv_);
    for (const auto& h : hidden_) net.hidden_.push_back(std::make_shared<Linear>(*h));
    net.output_ = std::make_shared<Linear>(*output_);
    return net;
  }

  const NetworkSpec& spec() const { return spec_; }
  std::size_t table_count() const { return tables_.size(); }
  Matrix& table(std::size_t k) { return *tables_[k]; }
  const Matrix& table(std::size_t k) const { return *tables_[k]; }
  bool has_conv() const { return conv_ != nullptr; }
  Linear& conv() { return *conv_; }
  const Linear& conv() const { return *conv_; }
  std::size_t hidden_count() const { return hidden_.size(); }
  Linear& hidden(std::size_t i) { return *hidden_[i]; }
  const Linear& hidden(std::size_t i) const { return *hidden_[i]; }
  Linear& output() { return *output_; }
  const Linear& output() const { return *output_; }

  /// Aliases this network's lookup tables to another's (multi-task sharing).
  void share_tables_with(Network& owner) {
    if (owner.tables_.size() != tables_.size())
      throw std::invalid_argument("share_tables_with: table count mismatch");
    for (std::size_t k = 0; k < tables_.size(); ++k) {
      if (owner.tables_[k]->rows() != tables_[k]->rows() ||
          owner.tables_[k]->cols() != tables_[k]->cols())
        throw std::invalid_argument("share_tables_with: table shape mismatch");
      tables_[k] = owner.tables_[k];
    }
  }

  /// Aliases the first trained layer (first hidden linear, or the convolution
  /// for the sentence approach).
  void share_first_layer_with(Network& owner) {
    if (spec_.arch != owner.spec_.arch)
      throw std::invalid_argument("share_first_layer_with: architecture mismatch");
    if (spec_.arch == Architecture::Sentence) {
      if (!owner.conv_ || !conv_ || owner.conv_->weight.size() != conv_->weight.size())
        throw std::invalid_argument("share_first_layer_with: convolution shape mismatch");
      conv_ = owner.conv_;
    } else {
      if (hidden_.empty() || owner.hidden_.empty() ||
          owner.hidden_[0]->weight.size() != hidden_[0]->weight.size())
        throw std::invalid_argument("share_first_layer_with: hidden shape mismatch");
      hidden_[0] = owner.hidden_[0];
    }
  }

  bool shares_tables_with(const Network& other) const {
    for (std::size_t k = 0; k < tables_.size(); ++k)
      if (tables_[k] != other.tables_[k]) return false;
    return true;
  }

  // -- forward / backward ---------------------------------------------------

  SentenceContext embed(const std::vector<std::vector<std::int32_t>>& feature_rows,
                        std::size_t length) const {
    if (feature_rows.size() != spec_.tables.size())
      throw std::invalid_argument("embed: feature row count mismatch");
    SentenceContext ctx;
    ctx.length = length;
    const std::size_t pad = spec_.pad();
    const std::size_t padded_len = length + 2 * pad;
    ctx.padded_rows.resize(spec_.tables.size());
    ctx.embedded = Matrix(padded_len, spec_.feature_dim());
    std::size_t offset = 0;
    for (std::size_t k = 0; k < spec_.tables.size(); ++k) {
      const auto& ts = spec_.tables[k];
      if (ts.rel_position) {
        offset += ts.dim;
        continue;  // filled per anchor
      }
      if (feature_rows[k].size() != length)
        throw std::invalid_argument("embed: feature row length mismatch");
      auto& padded = ctx.padded_rows[k];
      padded.assign(padded_len, ts.padding_index);
      for (std::size_t t = 0; t < length; ++t) {
        const std::int32_t idx = feature_rows[k][t];
        if (idx < 0 || static_cast<std::size_t>(idx) >= ts.rows)
          throw std::out_of_range("embed: feature index out of range");
        padded[pad + t] = idx;
      }
      gather(k, padded, offset, ctx.embedded);
      offset += ts.dim;
    }
    return ctx;
  }

  /// Tag scores for the word at (unpadded) position t, window approach.
  Vector window_scores(const SentenceContext& ctx, std::size_t t, WindowTrace* trace) const {
    if (spec_.arch != Architecture::Window)
      throw std::invalid_argument("window_scores: not a window network");
    const auto input = window_view(ctx.embedded, t + spec_.pad(), spec_.window);
    if (trace != nullptr) trace->t = t;
    return mlp_forward(input, trace ? &trace->mlp : nullptr);
  }

  /// Score matrix (T x tags) over the whole sentence, window approach.
  Matrix window_scores_all(const SentenceContext& ctx, std::vector<WindowTrace>* traces) const {
    Matrix f(ctx.length, spec_.tags);
    if (traces != nullptr) traces->assign(ctx.length, {});
    for (std::size_t t = 0; t < ctx.length; ++t) {
      Vector s = window_scores(ctx, t, traces ? &(*traces)[t] : nullptr);
      for (std::size_t k = 0; k < s.size(); ++k) f(t, k) = s[k];
    }
    return f;
  }

  void window_backward(const SentenceContext& ctx, const WindowTrace& trace,
                       std::span<const double> grad_scores, NetworkGrads& grads) const {
    const auto input = window_view(ctx.embedded, trace.t + spec_.pad(), spec_.window);
    Vector grad_input(input.size(), 0.0);
    mlp_backward(input, trace.mlp, grad_scores, grads, grad_input);
    scatter_window(ctx.padded_rows, trace.t, grad_input, grads);
  }

  /// Tag scores for one anchored word, sentence approach. anchors[a] gives
  /// the unpadded position for relative-position tables with anchor id a.
  Vector sentence_scores(const SentenceContext& ctx, std::span<const std::ptrdiff_t> anchors,
                         SentenceTrace* trace) const {
    if (spec_.arch != Architecture::Sentence)
      throw std::invalid_argument("sentence_scores: not a sentence network");
    SentenceTrace local;
    SentenceTrace& tr = trace ? *trace : local;
    tr.rows = ctx.padded_rows;
    tr.embedded = ctx.embedded;
    fill_positions(tr, anchors, ctx.length);
    tr.conv_out = conv_forward(*conv_, tr.embedded, spec_.window);
    MaxResult mx = max_forward(tr.conv_out);
    tr.argmax = std::move(mx.argmax);
    tr.max_out = std::move(mx.values);
    return mlp_forward(tr.max_out, &tr.mlp);
  }

  void sentence_backward(const SentenceTrace& trace, std::span<const double> grad_scores,
                         NetworkGrads& grads) const {
    Vector grad_max(trace.max_out.size(), 0.0);
    mlp_backward(trace.max_out, trace.mlp, grad_scores, grads, grad_max);
    Matrix grad_conv(trace.conv_out.rows(), trace.conv_out.cols());
    max_backward(trace.argmax, grad_max, grad_conv);
    Matrix grad_embedded(trace.embedded.rows(), trace.embedded.cols());
    conv_backward(*conv_, trace.embedded, spec_.window, grad_conv, grads.conv, &grad_embedded);
    scatter_embedded(trace.rows, grad_embedded, grads);
  }

  NetworkGrads zero_grads() const {
    NetworkGrads g;
    g.tables.resize(tables_.size());
    if (conv_) g.conv = LinearGrad(*conv_);
    for (const auto& h : hidden_) g.hidden.emplace_back(*h);
    g.output = LinearGrad(*output_);
    return g;
  }

  /// Named views over every dense parameter tensor (lookup tables included),
  /// with the fan-in that scales its learning rate.
  struct TensorRef {
    std::string name;
    double* data;
    std::size_t size;
    std::size_t fan_in;
  };

  std::vector<TensorRef> tensors() {
    std::vector<TensorRef> out;
    for (std::size_t k = 0; k < tables_.size(); ++k)
      out.push_back({"table" + std::to_string(k), tables_[k]->data(), tables_[k]->size(), 1});
    auto add_linear = [&out](const std::string& name, Linear& l) {
      out.push_back({name + ".weight", l.weight.data(), l.weight.size(), l.fan_in()});
      out.push_back({name + ".bias", l.bias.data(), l.bias.size(), l.fan_in()});
    };
    if (conv_) add_linear("conv", *conv_);
    for (std::size_t i = 0; i < hidden_.size(); ++i)
      add_linear("hidden" + std::to_string(i), *hidden_[i]);
    add_linear("output", *output_);
    return out;
  }

 private:
  void gather(std::size_t k, const std::vector<std::int32_t>& padded_rows, std::size_t offset,
              Matrix& embedded) const {
    const Matrix& table = *tables_[k];
    const std::size_t dim = table.cols();
    for (std::size_t p = 0; p < padded_rows.size(); ++p) {
      const double* src = table.row(padded_rows[p]);
      double* dst = embedded.row(p) + offset;
      for (std::size_t j = 0; j < dim; ++j) dst[j] = src[j];
    }
  }

  /// Computes relative-position rows over the padded coordinates and gathers
  /// their embeddings.
  void fill_positions(SentenceTrace& tr, std::span<const std::ptrdiff_t> anchors,
                      std::size_t length) const {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(spec_.pad());
    std::size_t offset = 0;
    for (std::size_t k = 0; k < spec_.tables.size(); ++k) {
      const auto& ts = spec_.tables[k];
      if (ts.rel_position) {
        if (ts.anchor >= anchors.size())
          throw std::invalid_argument("sentence_scores: missing anchor position");
        const std::ptrdiff_t pos = anchors[ts.anchor];
        auto& row = tr.rows[k];
        row.resize(length + 2 * spec_.pad());
        for (std::size_t p = 0; p < row.size(); ++p) {
          const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(p) - pad;
          row[p] = relative_position_index(i, pos, static_cast<std::ptrdiff_t>(ts.clip));
        }
        gather(k, row, offset, tr.embedded);
      }
      offset += ts.dim;
    }
  }

  static std::int32_t relative_position_index(std::ptrdiff_t i, std::ptrdiff_t pos,
                                              std::ptrdiff_t clip) {
    const std::ptrdiff_t d = std::max(-clip, std::min(clip, i - pos));
    return static_cast<std::int32_t>(d + clip);
  }

  Vector mlp_forward(std::span<const double> input, MlpTrace* trace) const {
    MlpTrace local;
    MlpTrace& tr = trace ? *trace : local;
    tr.pre.clear();
    tr.act.clear();
    std::span<const double> x = input;
    for (const auto& h : hidden_) {
      tr.pre.push_back(linear_forward(*h, x));
      tr.act.push_back(hardtanh_forward(tr.pre.back()));
      x = tr.act.back();
    }
    return linear_forward(*output_, x);
  }

  void mlp_backward(std::span<const double> input, const MlpTrace& trace,
                    std::span<const double> grad_scores, NetworkGrads& grads,
                    std::span<double> grad_input) const {
    std::span<const double> last = trace.act.empty() ? input : std::span<const double>(trace.act.back());
    Vector g(last.size(), 0.0);
    linear_backward(*output_, last, grad_scores, grads.output, g);
    for (std::size_t i = hidden_.size(); i-- > 0;) {
      Vector gpre = hardtanh_backward(trace.pre[i], g);
      std::span<const double> in = i == 0 ? input : std::span<const double>(trace.act[i - 1]);
      if (i == 0) {
        linear_backward(*hidden_[0], in, gpre, grads.hidden[0], grad_input);
      } else {
        g.assign(in.size(), 0.0);
        linear_backward(*hidden_[i], in, gpre, grads.hidden[i], g);
      }
    }
    if (hidden_.empty()) {
      for (std::size_t j = 0; j < grad_input.size(); ++j) grad_input[j] += g[j];
    }
  }

  void scatter_window(const std::vector<std::vector<std::int32_t>>& padded_rows, std::size_t t,
                      const Vector& grad_input, NetworkGrads& grads) const {
    const std::size_t d = spec_.feature_dim();
    for (std::size_t w = 0; w < spec_.window; ++w) {
      const std::size_t p = t + w;  // padded coordinate of window slot w
      std::size_t offset = 0;
      for (std::size_t k = 0; k < spec_.tables.size(); ++k) {
        const std::size_t dim = spec_.tables[k].dim;
        grads.tables[k].add(padded_rows[k][p],
                            {grad_input.data() + w * d + offset, dim});
        offset += dim;
      }
    }
  }

  void scatter_embedded(const std::vector<std::vector<std::int32_t>>& rows,
                        const Matrix& grad_embedded, NetworkGrads& grads) const {
    for (std::size_t p = 0; p < grad_embedded.rows(); ++p) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < spec_.tables.size(); ++k) {
        const std::size_t dim = spec_.tables[k].dim;
        grads.tables[k].add(rows[k][p], {grad_embedded.row(p) + offset, dim});
        offset += dim;
      }
    }
  }

  NetworkSpec spec_;
  std::vector<std::shared_ptr<Matrix>> tables_;
  std::shared_ptr<Linear> conv_;
  std::vector<std::shared_ptr<Linear>> hidden_;
  std::shared_ptr<Linear> output_;
};

}  // namespace scratchtag
