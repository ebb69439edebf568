#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <variant>
#include <vector>

#include "scratchtag/crf.hpp"
#include "scratchtag/model.hpp"
#include "scratchtag/net.hpp"

namespace scratchtag {

// ---------------------------------------------------------------------------
// SGD

struct SgdOptions {
  bool fan_in_rates = true;       // divide the rate by each layer's fan-in
  bool update_embeddings = true;  // false freezes every lookup table
};

namespace detail {

inline void check_finite(std::span<const double> values, const char* what) {
  if (!all_finite(values))
    throw TrainError(std::string("non-finite gradient in ") + what);
}

}  // namespace detail

/// theta <- theta - (lr / fan_in) * grad for every tensor; lookup tables have
/// fan-in 1, linear and convolution layers their input dimension.
inline void sgd_step(Network& net, const NetworkGrads& grads, double lr,
                     const SgdOptions& opts = {}) {
  if (opts.update_embeddings) {
    for (std::size_t k = 0; k < grads.tables.size(); ++k) {
      Matrix& table = net.table(k);
      for (const auto& [index, grad] : grads.tables[k].rows) {
        detail::check_finite(grad, "lookup table");
        axpy(-lr, grad, table.row_span(index));
      }
    }
  }
  auto apply = [&](Linear& l, const LinearGrad& g, const char* what) {
    const double rate = opts.fan_in_rates ? lr / static_cast<double>(l.fan_in()) : lr;
    detail::check_finite({g.weight.data(), g.weight.size()}, what);
    detail::check_finite(g.bias, what);
    axpy(-rate, {g.weight.data(), g.weight.size()}, {l.weight.data(), l.weight.size()});
    axpy(-rate, g.bias, l.bias);
  };
  if (net.has_conv()) apply(net.conv(), grads.conv, "convolution");
  for (std::size_t i = 0; i < net.hidden_count(); ++i)
    apply(net.hidden(i), grads.hidden[i], "hidden layer");
  apply(net.output(), grads.output, "output layer");
}

/// Transition scores take the plain global rate.
inline void sgd_step(TransitionParams& trans, const TransitionGrads& grads, double lr) {
  detail::check_finite({grads.transition.data(), grads.transition.size()}, "transitions");
  detail::check_finite(grads.initial, "initial scores");
  axpy(-lr, {grads.transition.data(), grads.transition.size()},
       {trans.transition.data(), trans.transition.size()});
  axpy(-lr, grads.initial, trans.initial);
}

inline void zero_grads(NetworkGrads& g) {
  for (auto& t : g.tables) t.rows.clear();
  g.conv.weight.fill(0.0);
  std::fill(g.conv.bias.begin(), g.conv.bias.end(), 0.0);
  for (auto& h : g.hidden) {
    h.weight.fill(0.0);
    std::fill(h.bias.begin(), h.bias.end(), 0.0);
  }
  g.output.weight.fill(0.0);
  std::fill(g.output.bias.begin(), g.output.bias.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Per-example losses and gradients

namespace detail {

inline std::array<std::ptrdiff_t, 2> anchors_for(const Model& model, const Sentence& s,
                                                 std::size_t word_pos) {
  for (const auto& t : model.net.spec().tables)
    if (t.rel_position && t.anchor == 1 && s.verb_position < 0)
      throw DataError("sentence approach model needs a verb position");
  return {static_cast<std::ptrdiff_t>(word_pos),
          static_cast<std::ptrdiff_t>(s.verb_position)};
}

}  // namespace detail

/// One stochastic step on the word-level criterion for the word at position t.
/// Returns the loss before the update.
inline double wll_step(Model& model, const Sentence& s, std::size_t t, double lr,
                       const SgdOptions& opts, NetworkGrads& scratch) {
  zero_grads(scratch);
  const auto ctx = model.net.embed(s.feature_rows, s.length());
  double loss;
  if (model.net.spec().arch == Architecture::Window) {
    WindowTrace trace;
    Vector scores = model.net.window_scores(ctx, t, &trace);
    WllResult r = wll_loss_grad(scores, s.gold_tags[t]);
    loss = r.loss;
    model.net.window_backward(ctx, trace, r.grad, scratch);
  } else {
    SentenceTrace trace;
    const auto anchors = detail::anchors_for(model, s, t);
    Vector scores = model.net.sentence_scores(ctx, anchors, &trace);
    WllResult r = wll_loss_grad(scores, s.gold_tags[t]);
    loss = r.loss;
    model.net.sentence_backward(trace, r.grad, scratch);
  }
  sgd_step(model.net, scratch, lr, opts);
  return loss;
}

/// One stochastic step on the sentence-level criterion for a whole sentence.
inline double sll_step(Model& model, const Sentence& s, double lr, const SgdOptions& opts,
                       NetworkGrads& scratch) {
  zero_grads(scratch);
  const auto ctx = model.net.embed(s.feature_rows, s.length());
  const std::size_t T = s.length();
  Matrix f(T, model.tag_count());
  std::vector<WindowTrace> wtraces;
  std::vector<SentenceTrace> straces;
  if (model.net.spec().arch == Architecture::Window) {
    f = model.net.window_scores_all(ctx, &wtraces);
  } else {
    straces.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      const auto anchors = detail::anchors_for(model, s, t);
      Vector scores = model.net.sentence_scores(ctx, anchors, &straces[t]);
      for (std::size_t k = 0; k < scores.size(); ++k) f(t, k) = scores[k];
    }
  }
  SllResult r = sll_loss_grad(f, model.transitions, s.gold_tags);
  for (std::size_t t = 0; t < T; ++t) {
    if (model.net.spec().arch == Architecture::Window)
      model.net.window_backward(ctx, wtraces[t], r.score_grad.row_span(t), scratch);
    else
      model.net.sentence_backward(straces[t], r.score_grad.row_span(t), scratch);
  }
  sgd_step(model.net, scratch, lr, opts);
  sgd_step(model.transitions, r.transition_grad, lr);
  return r.loss;
}

// ---------------------------------------------------------------------------
// Supervised training

struct TaskSpec {
  std::string name;
  Architecture arch = Architecture::Window;
  std::vector<FeatureConfig> features;
  std::shared_ptr<const Gazetteer> gazetteer;  // when any Gazetteer feature
  std::size_t window = 5;
  std::vector<std::size_t> hidden = {300};
  std::vector<std::string> tags;  // IOBES strings for chunked tasks
  bool chunked = true;
  Loss loss = Loss::SLL;
  std::int32_t verb_column = -1;  // stored in the model for tagging time
  std::vector<Sentence> train;
  std::vector<Sentence> dev;
};

/// How gold annotations sit in a CoNLL corpus.
struct CorpusOptions {
  std::size_t tag_column = static_cast<std::size_t>(-1);  // -1: unlabeled
  TagScheme input_scheme = TagScheme::IOBES;  // chunked tasks: scheme of the tag column
  bool chunked = true;
  std::ptrdiff_t verb_column = -1;  // SRL: column whose non-"-" row marks the verb

  bool has_tags() const { return tag_column != static_cast<std::size_t>(-1); }
};

inline std::vector<std::string> gold_tag_row(const RawSentence& raw, const CorpusOptions& opts) {
  auto tags = raw.column(opts.tag_column);
  if (opts.chunked && opts.input_scheme != TagScheme::IOBES)
    tags = convert_scheme(tags, opts.input_scheme, TagScheme::IOBES);
  return tags;
}

/// Distinct gold tags (after conversion to IOBES for chunked tasks), sorted.
inline std::vector<std::string> collect_tags(const std::vector<RawSentence>& corpus,
                                             const CorpusOptions& opts) {
  std::set<std::string> tags;
  for (const auto& raw : corpus)
    for (const auto& t : gold_tag_row(raw, opts)) tags.insert(t);
  return {tags.begin(), tags.end()};
}

inline std::vector<Sentence> encode_corpus(const SentenceEncoder& encoder,
                                           const std::vector<RawSentence>& corpus,
                                           const std::vector<std::string>& tags,
                                           const CorpusOptions& opts,
                                           const std::vector<ParseTree>* trees = nullptr) {
  if (trees != nullptr && trees->size() != corpus.size())
    throw DataError("encode_corpus: tree/sentence count mismatch");
  std::unordered_map<std::string, std::int32_t> tag_index;
  for (std::size_t i = 0; i < tags.size(); ++i)
    tag_index.emplace(tags[i], static_cast<std::int32_t>(i));
  std::vector<Sentence> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& raw = corpus[i];
    Sentence s = encoder.encode(raw, trees ? &(*trees)[i] : nullptr);
    if (opts.has_tags()) {
      for (const auto& t : gold_tag_row(raw, opts)) {
        const auto it = tag_index.find(t);
        if (it == tag_index.end()) throw DataError("unknown gold tag '" + t + "'");
        s.gold_tags.push_back(it->second);
      }
    }
    if (opts.verb_column >= 0)
      s.verb_position = find_verb_position(raw, static_cast<std::size_t>(opts.verb_column));
    out.push_back(std::move(s));
  }
  return out;
}

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  bool fan_in_rates = true;
  bool update_embeddings = true;
  std::size_t patience = 0;  // 0 = run every epoch; else stop on stagnation
  std::ostream* log = nullptr;
  std::function<void(std::size_t epoch, std::size_t task, const Model&)> per_epoch;
  std::function<void(std::size_t task, Model&)> init_model;  // runs before any step
};

struct EpochStats {
  double mean_loss = 0.0;
  double metric = 0.0;  // chunk F1 for chunked tasks, per-word accuracy otherwise
  EvalReport report;
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> epochs;
};

inline Model make_model(const TaskSpec& task, std::uint64_t seed) {
  Model m;
  m.task_name = task.name;
  m.loss = task.loss;
  m.chunked = task.chunked;
  m.verb_column = task.verb_column;
  m.encoder.features = task.features;
  m.encoder.gazetteer = task.gazetteer;
  m.tags = task.tags;
  NetworkSpec spec = make_network_spec(task.arch, task.features, task.window, task.hidden,
                                       task.tags.size());
  Rng rng(seed);
  m.net = Network::init(spec, rng);
  m.transitions = TransitionParams(task.tags.size());
  uniform_init({m.transitions.transition.data(), m.transitions.transition.size()}, 1, rng);
  uniform_init(m.transitions.initial, 1, rng);
  return m;
}

inline EvalReport evaluate_model(const Model& model, const std::vector<Sentence>& data) {
  std::vector<std::vector<std::string>> gold, predicted;
  gold.reserve(data.size());
  predicted.reserve(data.size());
  for (const auto& s : data) {
    std::vector<std::string> g;
    g.reserve(s.length());
    for (auto y : s.gold_tags) g.push_back(model.tags[y]);
    gold.push_back(std::move(g));
    predicted.push_back(tag_sentence(model, s));
  }
  if (model.chunked) return evaluate_tags(gold, predicted, TagScheme::IOBES);
  EvalReport r;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    r.words += gold[i].size();
    for (std::size_t t = 0; t < gold[i].size(); ++t)
      if (gold[i][t] == predicted[i][t]) ++r.correct_words;
  }
  if (r.words > 0)
    r.per_word_accuracy = static_cast<double>(r.correct_words) / static_cast<double>(r.words);
  return r;
}

enum class SharedDepth : std::uint8_t { Lookup = 0, LookupAndFirstLayer = 1 };

namespace detail {

// WLL iterates word windows, SLL whole sentences.
struct ExampleQueue {
  std::vector<std::pair<std::size_t, std::size_t>> pool;  // (sentence, position)
  std::size_t cursor = 0;
  Rng rng;

  void build(const TaskSpec& task) {
    pool.clear();
    for (std::size_t i = 0; i < task.train.size(); ++i) {
      if (task.loss == Loss::WLL) {
        for (std::size_t t = 0; t < task.train[i].length(); ++t) pool.emplace_back(i, t);
      } else {
        pool.emplace_back(i, 0);
      }
    }
  }
  void reshuffle() {
    std::shuffle(pool.begin(), pool.end(), rng);
    cursor = 0;
  }
};

}  // namespace detail

/// Joint training with physically shared lookup tables (and optionally the
/// first trained layer), alternating one example per task so every task gets
/// equal weight. With a single task this is exactly supervised training.
inline std::vector<TrainResult> train_multitask(const std::vector<TaskSpec>& tasks,
                                                SharedDepth depth, const TrainConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("train_multitask: no tasks");
  for (const auto& t : tasks)
    if (t.train.empty()) throw DataError("task '" + t.name + "' has an empty training corpus");

  std::vector<TrainResult> results;
  for (std::size_t k = 0; k < tasks.size(); ++k)
    results.push_back({make_model(tasks[k], cfg.seed + k), {}});
  for (std::size_t k = 1; k < tasks.size(); ++k) {
    results[k].model.net.share_tables_with(results[0].model.net);
    if (depth == SharedDepth::LookupAndFirstLayer)
      results[k].model.net.share_first_layer_with(results[0].model.net);
  }
  if (cfg.init_model)
    for (std::size_t k = 0; k < tasks.size(); ++k) cfg.init_model(k, results[k].model);

  std::vector<detail::ExampleQueue> queues(tasks.size());
  std::vector<NetworkGrads> scratch;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    queues[k].build(tasks[k]);
    queues[k].rng.seed(cfg.seed + 0x9E3779B97F4A7C15ULL * (k + 1));
    scratch.push_back(results[k].model.net.zero_grads());
  }
  const SgdOptions opts{cfg.fan_in_rates, cfg.update_embeddings};

  double best_metric = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::size_t steps_per_task = 0;
    for (auto& q : queues) {
      q.reshuffle();
      steps_per_task = std::max(steps_per_task, q.pool.size());
    }
    std::vector<double> loss_sum(tasks.size(), 0.0);
    for (std::size_t step = 0; step < steps_per_task; ++step) {
      for (std::size_t k = 0; k < tasks.size(); ++k) {
        auto& q = queues[k];
        if (q.cursor == q.pool.size()) q.reshuffle();
        const auto [si, t] = q.pool[q.cursor++];
        const Sentence& s = tasks[k].train[si];
        Model& m = results[k].model;
        if (tasks[k].loss == Loss::WLL)
          loss_sum[k] += wll_step(m, s, t, cfg.learning_rate, opts, scratch[k]);
        else
          loss_sum[k] += sll_step(m, s, cfg.learning_rate, opts, scratch[k]);
      }
    }
    double metric_sum = 0.0;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      EpochStats st;
      st.mean_loss = loss_sum[k] / static_cast<double>(steps_per_task);
      const auto& eval_set = tasks[k].dev.empty() ? tasks[k].train : tasks[k].dev;
      st.report = evaluate_model(results[k].model, eval_set);
      st.metric = tasks[k].chunked ? st.report.f1 : st.report.per_word_accuracy;
      metric_sum += st.metric;
      results[k].epochs.push_back(st);
      if (cfg.log != nullptr) {
        (*cfg.log) << (tasks.size() > 1 ? tasks[k].name + " " : "") << "epoch " << epoch
                   << " loss " << st.mean_loss << " metric " << st.metric << '\n';
      }
      if (cfg.per_epoch) cfg.per_epoch(epoch, k, results[k].model);
    }
    if (cfg.patience > 0) {
      const double metric = metric_sum / static_cast<double>(tasks.size());
      if (metric > best_metric) {
        best_metric = metric;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  return results;
}

inline TrainResult train_supervised(const TaskSpec& task, const TrainConfig& cfg) {
  auto results = train_multitask({task}, SharedDepth::Lookup, cfg);
  return std::move(results.front());
}

// ---------------------------------------------------------------------------
// Embedding transfer

/// Overwrites word-lookup rows for every embedding word present in the
/// model's word dictionary; everything else keeps its current value.
/// Returns the number of rows initialized.
inline std::size_t pretrain_init(Model& model, const Embeddings& emb) {
  std::size_t word_feature = model.encoder.features.size();
  for (std::size_t k = 0; k < model.encoder.features.size(); ++k)
    if (model.encoder.features[k].kind == ExtractorKind::Word) {
      word_feature = k;
      break;
    }
  if (word_feature == model.encoder.features.size())
    throw DataError("pretrain_init: model has no word feature");
  Matrix& table = model.net.table(word_feature);
  if (emb.vectors.rows() > 0 && emb.dim() != table.cols())
    throw DataError("pretrain_init: embedding dimension " + std::to_string(emb.dim()) +
                    " does not match lookup dimension " + std::to_string(table.cols()));
  const Dictionary& dict = model.encoder.features[word_feature].dict;
  std::size_t copied = 0;
  for (std::size_t w = 0; w < emb.words.size(); ++w) {
    const std::int32_t idx = dict.find(emb.words[w]);
    if (idx < 0) continue;
    for (std::size_t j = 0; j < table.cols(); ++j) table(idx, j) = emb.vectors(w, j);
    ++copied;
  }
  return copied;
}

// ---------------------------------------------------------------------------
// Language model (ranking criterion)

struct LmConfig {
  std::size_t window = 11;  // d_win
  std::size_t hidden = 100;
  std::size_t word_dim = 50;
  double learning_rate = 0.01;
  std::size_t iterations = 1000000;
  std::size_t eval_every = 100000;
  std::size_t eval_windows = 500;     // held-out windows per checkpoint
  std::size_t eval_negatives = 25;    // corruptions sampled per held-out window
  double validation_fraction = 0.02;  // tail of the corpus held out
  std::uint64_t seed = 1;
  bool fan_in_rates = true;
  std::ostream* log = nullptr;
};

struct LanguageModel {
  Dictionary dict;
  Network net;  // window scorer with a single output
};

struct LmResult {
  LanguageModel lm;
  std::vector<double> validation_losses;  // one per checkpoint, first before training

  Matrix embeddings() const { return lm.net.table(0); }
};

namespace detail {

struct LmWindowScorer {
  const Network& net;
  std::size_t window;

  /// Scores the window of text centered at `center` of sentence `words`,
  /// replacing the central word by `replace` when replace >= 0.
  double score(const std::vector<std::int32_t>& words, std::size_t center,
               std::int32_t replace, SentenceContext* ctx_out, WindowTrace* trace) const {
    const std::size_t half = window / 2;
    std::vector<std::int32_t> tokens(window, Dictionary::kPadding);
    for (std::size_t w = 0; w < window; ++w) {
      const std::ptrdiff_t i =
          static_cast<std::ptrdiff_t>(center) + static_cast<std::ptrdiff_t>(w) -
          static_cast<std::ptrdiff_t>(half);
      if (i >= 0 && static_cast<std::size_t>(i) < words.size()) tokens[w] = words[i];
    }
    if (replace >= 0) tokens[half] = replace;
    SentenceContext ctx = net.embed({tokens}, window);
    Vector s = net.window_scores(ctx, half, trace);
    if (ctx_out != nullptr) *ctx_out = std::move(ctx);
    return s[0];
  }
};

}  // namespace detail

/// Trains the window scorer by stochastic gradient on the pairwise ranking
/// criterion: sample a text window, corrupt its central word with a uniform
/// dictionary word, and require the genuine window to score higher by a
/// margin. Mean held-out ranking loss is reported on a fixed evaluation set
/// before training and after every eval_every iterations.
inline LmResult train_lm(const std::vector<std::vector<std::int32_t>>& corpus,
                         const Dictionary& dict, const LmConfig& cfg,
                         const Embeddings* warm_start = nullptr) {
  if (dict.size() < 2) throw DataError("train_lm: dictionary too small");
  if (corpus.empty()) throw DataError("train_lm: empty corpus");
  if (cfg.window % 2 == 0) throw std::invalid_argument("train_lm: window must be odd");

  std::size_t held_out = static_cast<std::size_t>(
      std::floor(cfg.validation_fraction * static_cast<double>(corpus.size())));
  held_out = std::min(held_out, corpus.size() - 1);
  const std::size_t train_count = corpus.size() - held_out;

  LmResult result;
  result.lm.dict = dict;
  NetworkSpec spec;
  spec.arch = Architecture::Window;
  spec.window = cfg.window;
  spec.hidden = {cfg.hidden};
  spec.tags = 1;
  spec.tables.push_back({dict.size(), cfg.word_dim, Dictionary::kPadding, false, 0, 0});
  result.lm.net = Network::init(spec, cfg.seed);
  Network& net = result.lm.net;
  if (warm_start != nullptr) {
    Matrix& table = net.table(0);
    if (warm_start->vectors.rows() > 0 && warm_start->dim() != table.cols())
      throw DataError("train_lm: warm-start embedding dimension mismatch");
    for (std::size_t w = 0; w < warm_start->words.size(); ++w) {
      const std::int32_t idx = dict.find(warm_start->words[w]);
      if (idx < 0) continue;
      for (std::size_t j = 0; j < table.cols(); ++j) table(idx, j) = warm_start->vectors(w, j);
    }
  }

  const detail::LmWindowScorer scorer{net, cfg.window};
  const SgdOptions opts{cfg.fan_in_rates, true};

  // Fixed evaluation pairs so checkpoint losses are comparable.
  struct EvalPair {
    std::size_t sentence;
    std::size_t center;
    std::int32_t corrupt;
  };
  std::vector<EvalPair> eval_pairs;
  {
    Rng eval_rng(cfg.seed ^ 0xE7A1ull);
    const std::size_t eval_base = held_out > 0 ? train_count : 0;
    const std::size_t eval_count = held_out > 0 ? held_out : corpus.size();
    std::uniform_int_distribution<std::size_t> pick_sentence(0, eval_count - 1);
    std::uniform_int_distribution<std::int32_t> pick_word(
        0, static_cast<std::int32_t>(dict.size()) - 1);
    for (std::size_t i = 0; i < cfg.eval_windows; ++i) {
      const std::size_t si = eval_base + pick_sentence(eval_rng);
      std::uniform_int_distribution<std::size_t> pick_pos(0, corpus[si].size() - 1);
      const std::size_t center = pick_pos(eval_rng);
      for (std::size_t n = 0; n < cfg.eval_negatives; ++n)
        eval_pairs.push_back({si, center, pick_word(eval_rng)});
    }
  }
  auto held_out_loss = [&]() {
    double total = 0.0;
    for (const auto& p : eval_pairs) {
      const double s_pos = scorer.score(corpus[p.sentence], p.center, -1, nullptr, nullptr);
      const double s_neg =
          scorer.score(corpus[p.sentence], p.center, p.corrupt, nullptr, nullptr);
      total += ranking_loss_grad(s_pos, s_neg).loss;
    }
    return eval_pairs.empty() ? 0.0 : total / static_cast<double>(eval_pairs.size());
  };

  auto checkpoint = [&](std::size_t iteration) {
    const double loss = held_out_loss();
    result.validation_losses.push_back(loss);
    if (cfg.log != nullptr)
      (*cfg.log) << "lm checkpoint " << result.validation_losses.size() - 1 << " iteration "
                 << iteration << " ranking-loss " << loss << '\n';
  };

  Rng rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick_sentence(0, train_count - 1);
  std::uniform_int_distribution<std::int32_t> pick_word(
      0, static_cast<std::int32_t>(dict.size()) - 1);
  NetworkGrads scratch = net.zero_grads();

  checkpoint(0);
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const std::size_t si = pick_sentence(rng);
    const auto& words = corpus[si];
    std::uniform_int_distribution<std::size_t> pick_pos(0, words.size() - 1);
    const std::size_t center = pick_pos(rng);
    const std::int32_t corrupt = pick_word(rng);

    SentenceContext pos_ctx, neg_ctx;
    WindowTrace pos_trace, neg_trace;
    const double s_pos = scorer.score(words, center, -1, &pos_ctx, &pos_trace);
    const double s_neg = scorer.score(words, center, corrupt, &neg_ctx, &neg_trace);
    const RankingResult r = ranking_loss_grad(s_pos, s_neg);
    if (r.loss > 0.0) {
      zero_grads(scratch);
      const double gp[1] = {r.grad_pos};
      const double gn[1] = {r.grad_neg};
      net.window_backward(pos_ctx, pos_trace, gp, scratch);
      net.window_backward(neg_ctx, neg_trace, gn, scratch);
      sgd_step(net, scratch, cfg.learning_rate, opts);
    }
    if (cfg.eval_every > 0 && it % cfg.eval_every == 0) checkpoint(it);
  }
  return result;
}

/// Continues an LM (or any model whose first table is the word table) with a
/// larger dictionary: existing rows are kept bit-exactly, new rows are
/// freshly initialized.
inline void grow_dictionary(LanguageModel& lm, const Dictionary& larger, std::uint64_t seed) {
  if (!lm.dict.is_prefix_of(larger))
    throw DataError("grow_dictionary: old dictionary is not a prefix of the new one");
  const NetworkSpec& old_spec = lm.net.spec();
  NetworkSpec spec = old_spec;
  spec.tables[0].rows = larger.size();
  Network grown = Network::init(spec, seed);
  // copy the shared prefix of the word table and every other tensor wholesale
  Matrix& new_table = grown.table(0);
  const Matrix& old_table = lm.net.table(0);
  for (std::size_t w = 0; w < old_table.rows(); ++w)
    for (std::size_t j = 0; j < old_table.cols(); ++j) new_table(w, j) = old_table(w, j);
  auto old_refs = lm.net.tensors();
  auto new_refs = grown.tensors();
  for (std::size_t i = 1; i < old_refs.size(); ++i)
    std::copy(old_refs[i].data, old_refs[i].data + old_refs[i].size, new_refs[i].data);
  lm.net = std::move(grown);
  lm.dict = larger;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct WllInstance {
  Sentence sentence;
  std::size_t position = 0;
};
struct SllInstance {
  Sentence sentence;
};
/// Ranking check on an LM-style scorer (single output): the genuine window
/// is `sentence` centered at `center`, the corrupted one replaces the center
/// word of the word feature (row 0) with `corrupt`.
struct RankingInstance {
  Sentence sentence;
  std::size_t center = 0;
  std::int32_t corrupt = 0;
};

using GradCheckInstance = std::variant<WllInstance, SllInstance, RankingInstance>;

struct GradCheckConfig {
  double step = 1e-3;
  double tolerance = 1e-4;
  double absolute_floor = 1e-8;
  std::size_t max_checks_per_tensor = 0;  // 0 = every scalar
  std::uint64_t sample_seed = 7;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t checked = 0;

  bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

namespace detail {

inline double instance_loss(Model& model, const GradCheckInstance& inst) {
  if (const auto* w = std::get_if<WllInstance>(&inst)) {
    const auto ctx = model.net.embed(w->sentence.feature_rows, w->sentence.length());
    Vector scores;
    if (model.net.spec().arch == Architecture::Window) {
      scores = model.net.window_scores(ctx, w->position, nullptr);
    } else {
      const auto anchors = anchors_for(model, w->sentence, w->position);
      scores = model.net.sentence_scores(ctx, anchors, nullptr);
    }
    return wll_loss_grad(scores, w->sentence.gold_tags[w->position]).loss;
  }
  if (const auto* s = std::get_if<SllInstance>(&inst)) {
    const Matrix f = score_sentence(model, s->sentence);
    return sll_loss_grad(f, model.transitions, s->sentence.gold_tags).loss;
  }
  const auto& r = std::get<RankingInstance>(inst);
  Sentence corrupted = r.sentence;
  corrupted.feature_rows[0][r.center] = r.corrupt;
  const auto pos_ctx = model.net.embed(r.sentence.feature_rows, r.sentence.length());
  const auto neg_ctx = model.net.embed(corrupted.feature_rows, corrupted.length());
  const double s_pos = model.net.window_scores(pos_ctx, r.center, nullptr)[0];
  const double s_neg = model.net.window_scores(neg_ctx, r.center, nullptr)[0];
  return ranking_loss_grad(s_pos, s_neg).loss;
}

/// Analytic gradients for the instance, flattened in net.tensors() order;
/// transition gradients appended for SLL instances.
inline std::vector<Vector> instance_grads(Model& model, const GradCheckInstance& inst,
                                          bool& has_transitions) {
  NetworkGrads grads = model.net.zero_grads();
  TransitionGrads tgrads(model.tag_count());
  has_transitions = false;
  if (const auto* w = std::get_if<WllInstance>(&inst)) {
    const auto ctx = model.net.embed(w->sentence.feature_rows, w->sentence.length());
    if (model.net.spec().arch == Architecture::Window) {
      WindowTrace trace;
      Vector scores = model.net.window_scores(ctx, w->position, &trace);
      WllResult r = wll_loss_grad(scores, w->sentence.gold_tags[w->position]);
      model.net.window_backward(ctx, trace, r.grad, grads);
    } else {
      SentenceTrace trace;
      const auto anchors = anchors_for(model, w->sentence, w->position);
      Vector scores = model.net.sentence_scores(ctx, anchors, &trace);
      WllResult r = wll_loss_grad(scores, w->sentence.gold_tags[w->position]);
      model.net.sentence_backward(trace, r.grad, grads);
    }
  } else if (const auto* s = std::get_if<SllInstance>(&inst)) {
    has_transitions = true;
    const auto ctx = model.net.embed(s->sentence.feature_rows, s->sentence.length());
    const std::size_t T = s->sentence.length();
    Matrix f(T, model.tag_count());
    std::vector<WindowTrace> wtraces;
    std::vector<SentenceTrace> straces;
    if (model.net.spec().arch == Architecture::Window) {
      f = model.net.window_scores_all(ctx, &wtraces);
    } else {
      straces.resize(T);
      for (std::size_t t = 0; t < T; ++t) {
        const auto anchors = anchors_for(model, s->sentence, t);
        Vector scores = model.net.sentence_scores(ctx, anchors, &straces[t]);
        for (std::size_t k = 0; k < scores.size(); ++k) f(t, k) = scores[k];
      }
    }
    SllResult r = sll_loss_grad(f, model.transitions, s->sentence.gold_tags);
    tgrads = std::move(r.transition_grad);
    for (std::size_t t = 0; t < T; ++t) {
      if (model.net.spec().arch == Architecture::Window)
        model.net.window_backward(ctx, wtraces[t], r.score_grad.row_span(t), grads);
      else
        model.net.sentence_backward(straces[t], r.score_grad.row_span(t), grads);
    }
  } else {
    const auto& rk = std::get<RankingInstance>(inst);
    Sentence corrupted = rk.sentence;
    corrupted.feature_rows[0][rk.center] = rk.corrupt;
    const auto pos_ctx = model.net.embed(rk.sentence.feature_rows, rk.sentence.length());
    const auto neg_ctx = model.net.embed(corrupted.feature_rows, corrupted.length());
    WindowTrace pos_trace, neg_trace;
    const double s_pos = model.net.window_scores(pos_ctx, rk.center, &pos_trace)[0];
    const double s_neg = model.net.window_scores(neg_ctx, rk.center, &neg_trace)[0];
    RankingResult r = ranking_loss_grad(s_pos, s_neg);
    const double gp[1] = {r.grad_pos};
    const double gn[1] = {r.grad_neg};
    model.net.window_backward(pos_ctx, pos_trace, gp, grads);
    model.net.window_backward(neg_ctx, neg_trace, gn, grads);
  }

  // flatten in tensors() order
  std::vector<Vector> flat;
  const auto& spec = model.net.spec();
  for (std::size_t k = 0; k < spec.tables.size(); ++k) {
    Vector dense(spec.tables[k].rows * spec.tables[k].dim, 0.0);
    for (const auto& [index, grad] : grads.tables[k].rows)
      for (std::size_t j = 0; j < grad.size(); ++j)
        dense[static_cast<std::size_t>(index) * grad.size() + j] = grad[j];
    flat.push_back(std::move(dense));
  }
  auto push_linear = [&flat](const LinearGrad& g) {
    flat.emplace_back(g.weight.data(), g.weight.data() + g.weight.size());
    flat.push_back(g.bias);
  };
  if (model.net.has_conv()) push_linear(grads.conv);
  for (const auto& h : grads.hidden) push_linear(h);
  push_linear(grads.output);
  if (has_transitions) {
    flat.emplace_back(tgrads.transition.data(),
                      tgrads.transition.data() + tgrads.transition.size());
    flat.push_back(tgrads.initial);
  }
  return flat;
}

}  // namespace detail

/// Compares the analytic gradient of every trainable scalar (sampled when a
/// tensor exceeds max_checks_per_tensor) against central finite differences.
inline GradCheckReport gradient_check(Model& model, const GradCheckInstance& inst,
                                      const GradCheckConfig& cfg = {}) {
  bool has_transitions = false;
  const std::vector<Vector> analytic = detail::instance_grads(model, inst, has_transitions);

  std::vector<Network::TensorRef> refs = model.net.tensors();
  if (has_transitions) {
    refs.push_back({"transitions", model.transitions.transition.data(),
                    model.transitions.transition.size(), 1});
    refs.push_back({"initial", model.transitions.initial.data(),
                    model.transitions.initial.size(), 1});
  }

  GradCheckReport report;
  Rng rng(cfg.sample_seed);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    std::vector<std::size_t> indices;
    if (cfg.max_checks_per_tensor > 0 && refs[r].size > cfg.max_checks_per_tensor) {
      std::uniform_int_distribution<std::size_t> pick(0, refs[r].size - 1);
      for (std::size_t i = 0; i < cfg.max_checks_per_tensor; ++i) indices.push_back(pick(rng));
    } else {
      indices.resize(refs[r].size);
      std::iota(indices.begin(), indices.end(), 0);
    }
    for (std::size_t i : indices) {
      double& param = refs[r].data[i];
      const double saved = param;
      param = saved + cfg.step;
      const double up = detail::instance_loss(model, inst);
      param = saved - cfg.step;
      const double down = detail::instance_loss(model, inst);
      param = saved;
      const double fd = (up - down) / (2.0 * cfg.step);
      const double an = analytic[r][i];
      ++report.checked;
      const double diff = std::abs(fd - an);
      if (diff <= cfg.absolute_floor) continue;
      const double rel = diff / std::max(std::abs(fd), std::abs(an));
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = refs[r].name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Ensembles and neighbors

/// Per-position majority vote over aligned tag rows; ties go to the earliest
/// model proposing a maximal tag.
inline std::vector<std::string> ensemble_vote(
    const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) throw std::invalid_argument("ensemble_vote: no models");
  const std::size_t T = rows[0].size();
  for (const auto& r : rows)
    if (r.size() != T) throw DataError("ensemble_vote: misaligned tag rows");
  std::vector<std::string> out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<std::pair<std::string, std::size_t>> counts;  // first-proposal order
    for (const auto& r : rows) {
      bool found = false;
      for (auto& [tag, n] : counts)
        if (tag == r[t]) {
          ++n;
          found = true;
          break;
        }
      if (!found) counts.emplace_back(r[t], 1);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
      if (counts[i].second > counts[best].second) best = i;
    out.push_back(counts[best].first);
  }
  return out;
}

struct Neighbor {
  std::string word;
  double distance = 0.0;
};

/// k nearest words by Euclidean distance, the query itself excluded.
inline std::vector<Neighbor> embed_neighbors(const Embeddings& emb, const std::string& word,
                                             std::size_t k) {
  const auto it = emb.index.find(word);
  if (it == emb.index.end()) throw DataError("embed_neighbors: unknown word '" + word + "'");
  const std::size_t q = it->second;
  std::vector<std::pair<double, std::size_t>> dists;
  dists.reserve(emb.words.size());
  for (std::size_t w = 0; w < emb.words.size(); ++w) {
    if (w == q) continue;
    double d2 = 0.0;
    for (std::size_t j = 0; j < emb.dim(); ++j) {
      const double d = emb.vectors(w, j) - emb.vectors(q, j);
      d2 += d * d;
    }
    dists.emplace_back(d2, w);
  }
  std::sort(dists.begin(), dists.end());
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < std::min(k, dists.size()); ++i)
    out.push_back({emb.words[dists[i].second], std::sqrt(dists[i].first)});
  return out;
}

}  // namespace scratchtag
