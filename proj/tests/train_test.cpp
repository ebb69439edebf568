#include "scratchtag/train.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "support/synthetic.hpp"

using namespace scratchtag;

namespace {

std::vector<std::string> range_words(std::size_t n) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i)
    words.push_back(std::string("w") + static_cast<char>('a' + i));
  return words;
}

TaskSpec tiny_window_task(Loss loss, std::size_t tags = 3) {
  TaskSpec task;
  task.name = "tiny";
  task.arch = Architecture::Window;
  FeatureConfig word;
  word.name = "word";
  word.kind = ExtractorKind::Word;
  word.dim = 3;
  word.dict = Dictionary(range_words(7));
  FeatureConfig caps;
  caps.name = "caps";
  caps.kind = ExtractorKind::Caps;
  caps.dim = 2;
  task.features = {word, caps};
  task.window = 3;
  task.hidden = {5};
  for (std::size_t k = 0; k < tags; ++k) task.tags.push_back(std::string(1, 'a' + k));
  task.chunked = false;
  task.loss = loss;
  return task;
}

Sentence random_sentence(const Model& model, std::size_t T, Rng& rng, bool with_verb = false) {
  Sentence s;
  const auto& spec = model.net.spec();
  s.feature_rows.resize(spec.tables.size());
  for (std::size_t t = 0; t < T; ++t) s.raw_words.push_back("w");
  for (std::size_t k = 0; k < spec.tables.size(); ++k) {
    if (spec.tables[k].rel_position) continue;
    std::uniform_int_distribution<std::int32_t> pick(
        0, static_cast<std::int32_t>(spec.tables[k].rows) - 1);
    for (std::size_t t = 0; t < T; ++t) s.feature_rows[k].push_back(pick(rng));
  }
  std::uniform_int_distribution<std::int32_t> tag(0,
                                                  static_cast<std::int32_t>(spec.tags) - 1);
  for (std::size_t t = 0; t < T; ++t) s.gold_tags.push_back(tag(rng));
  if (with_verb)
    s.verb_position = std::uniform_int_distribution<std::int32_t>(
        0, static_cast<std::int32_t>(T) - 1)(rng);
  return s;
}

void damp_parameters(Model& model, double factor) {
  for (auto& ref : model.net.tensors())
    for (std::size_t i = 0; i < ref.size; ++i) ref.data[i] *= factor;
}

}  // namespace

TEST(SgdStep, ZeroGradientIsIdentity) {
  Model m = make_model(tiny_window_task(Loss::WLL), 1);
  Model before = m.clone();
  NetworkGrads grads = m.net.zero_grads();
  sgd_step(m.net, grads, 0.5);
  EXPECT_TRUE(m.net.table(0) == before.net.table(0));
  EXPECT_TRUE(m.net.hidden(0).weight == before.net.hidden(0).weight);
}

TEST(SgdStep, RatesFollowFanIn) {
  Model m = make_model(tiny_window_task(Loss::WLL), 2);
  NetworkGrads grads = m.net.zero_grads();
  Vector unit(3, 1.0);
  grads.tables[0].add(4, unit);
  grads.hidden[0].weight(0, 0) = 1.0;
  const double lookup_before = m.net.table(0)(4, 0);
  const double hidden_before = m.net.hidden(0).weight(0, 0);
  const double lr = 0.1;
  sgd_step(m.net, grads, lr);
  // lookup fan-in is 1, linear fan-in is its input dimension (5 dims x 3 window)
  EXPECT_NEAR(m.net.table(0)(4, 0), lookup_before - lr, 1e-15);
  EXPECT_NEAR(m.net.hidden(0).weight(0, 0), hidden_before - lr / 15.0, 1e-15);
}

TEST(SgdStep, FrozenEmbeddingsSkipLookupTables) {
  Model m = make_model(tiny_window_task(Loss::WLL), 3);
  NetworkGrads grads = m.net.zero_grads();
  Vector unit(3, 1.0);
  grads.tables[0].add(2, unit);
  const double before = m.net.table(0)(2, 0);
  sgd_step(m.net, grads, 0.1, {true, false});
  EXPECT_DOUBLE_EQ(m.net.table(0)(2, 0), before);
}

TEST(SgdStep, NanGradientAborts) {
  Model m = make_model(tiny_window_task(Loss::WLL), 4);
  NetworkGrads grads = m.net.zero_grads();
  grads.output.bias[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(sgd_step(m.net, grads, 0.1), TrainError);
}

TEST(Criteria, WllEqualsSllOnSingleWordSentencesWithZeroTransitions) {
  Rng rng(31);
  Model m = make_model(tiny_window_task(Loss::SLL), 5);
  m.transitions = TransitionParams(m.tag_count());  // zero transition and initial scores
  for (int iter = 0; iter < 10; ++iter) {
    Sentence s = random_sentence(m, 1, rng);
    const Matrix f = score_sentence(m, s);
    const auto wll = wll_loss_grad(f.row_span(0), s.gold_tags[0]);
    const auto sll = sll_loss_grad(f, m.transitions, s.gold_tags);
    EXPECT_NEAR(wll.loss, sll.loss, 1e-12);
    for (std::size_t k = 0; k < m.tag_count(); ++k)
      EXPECT_NEAR(wll.grad[k], sll.score_grad(0, k), 1e-12);
  }
}

TEST(GradientCheck, WindowNetworkWordLevel) {
  Rng rng(41);
  Model m = make_model(tiny_window_task(Loss::WLL), 6);
  damp_parameters(m, 0.5);
  Sentence s = random_sentence(m, 4, rng);
  auto report = gradient_check(m, WllInstance{s, 2});
  EXPECT_LE(report.max_rel_error, 1e-4) << report.worst_tensor;
  EXPECT_GT(report.checked, 100u);
}

TEST(GradientCheck, WindowNetworkSentenceLevel) {
  Rng rng(43);
  Model m = make_model(tiny_window_task(Loss::SLL), 7);
  damp_parameters(m, 0.5);
  Sentence s = random_sentence(m, 4, rng);
  auto report = gradient_check(m, SllInstance{s});
  EXPECT_LE(report.max_rel_error, 1e-4) << report.worst_tensor;
}

TEST(GradientCheck, ConvMaxSentenceNetworkSentenceLevel) {
  TaskSpec task;
  task.name = "conv";
  task.arch = Architecture::Sentence;
  FeatureConfig word;
  word.name = "word";
  word.kind = ExtractorKind::Word;
  word.dim = 3;
  word.dict = Dictionary(range_words(6));
  FeatureConfig dist_word;
  dist_word.name = "dist-word";
  dist_word.kind = ExtractorKind::RelPosition;
  dist_word.dim = 2;
  dist_word.clip = 4;
  dist_word.anchor = 0;
  FeatureConfig dist_verb = dist_word;
  dist_verb.name = "dist-verb";
  dist_verb.anchor = 1;
  task.features = {word, dist_word, dist_verb};
  task.window = 3;
  task.hidden = {6, 5};
  task.tags = {"a", "b", "c"};
  task.chunked = false;
  task.loss = Loss::SLL;

  Model m = make_model(task, 8);
  damp_parameters(m, 0.5);
  Rng rng(47);
  Sentence s = random_sentence(m, 4, rng, true);
  auto report = gradient_check(m, SllInstance{s});
  EXPECT_LE(report.max_rel_error, 1e-4) << report.worst_tensor;
}

TEST(GradientCheck, SingleLinearLayerNetwork) {
  // no hidden layers: the concatenated window feeds the scoring layer directly
  TaskSpec task = tiny_window_task(Loss::SLL);
  task.hidden = {};
  Model m = make_model(task, 23);
  damp_parameters(m, 0.5);
  Rng rng(59);
  Sentence s = random_sentence(m, 3, rng);
  auto sll = gradient_check(m, SllInstance{s});
  EXPECT_LE(sll.max_rel_error, 1e-4) << sll.worst_tensor;
  auto wll = gradient_check(m, WllInstance{s, 1});
  EXPECT_LE(wll.max_rel_error, 1e-4) << wll.worst_tensor;
}

TEST(ConvexConfiguration, LinearModelOverFixedSparseLookups) {
  // the convex setup: a single linear layer and every lookup table frozen to
  // a one-hot (sparse) representation, trained with the sentence-level
  // criterion; no dedicated code path, just configuration
  auto chunk = synth::make_chunk_task(400, 100, 91, Loss::SLL, 8, 0);
  TaskSpec task = chunk.task;
  task.hidden = {};
  task.features[0].dim = task.features[0].dict.size();  // one-hot width
  {
    SentenceEncoder enc;
    enc.features = task.features;
    CorpusOptions opts;
    opts.tag_column = 1;
    task.train = encode_corpus(enc, synth::to_raw(synth::chunk_corpus(400, 91)), task.tags, opts);
    task.dev = encode_corpus(enc, synth::to_raw(synth::chunk_corpus(100, 92)), task.tags, opts);
  }
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 10;
  cfg.seed = 12;
  cfg.fan_in_rates = false;
  cfg.update_embeddings = false;
  cfg.init_model = [](std::size_t, Model& m) {
    Matrix& words = m.net.table(0);
    words.fill(0.0);
    for (std::size_t i = 0; i < words.rows(); ++i) words(i, i) = 1.0;
  };
  const TrainResult r = train_supervised(task, cfg);
  // the frozen table kept its one-hot rows
  EXPECT_DOUBLE_EQ(r.model.net.table(0)(3, 3), 1.0);
  EXPECT_DOUBLE_EQ(r.model.net.table(0)(3, 4), 0.0);
  EXPECT_EQ(r.model.net.hidden_count(), 0u);
  // a linear model over sparse inputs still learns this corpus
  EXPECT_GT(r.epochs.back().report.per_word_accuracy, 0.9);
}

TEST(TrainSupervised, LossTrendsDownAcrossSeeds) {
  auto chunk = synth::make_chunk_task(200, 50, 7, Loss::SLL);
  std::vector<std::vector<double>> losses;  // per seed, per epoch
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig cfg;
    cfg.learning_rate = 0.02;
    cfg.epochs = 4;
    cfg.seed = seed;
    TrainResult r = train_supervised(chunk.task, cfg);
    std::vector<double> epoch_losses;
    for (const auto& e : r.epochs) epoch_losses.push_back(e.mean_loss);
    losses.push_back(std::move(epoch_losses));
  }
  for (std::size_t e = 1; e < 4; ++e) {
    std::vector<double> prev, cur;
    for (const auto& l : losses) {
      prev.push_back(l[e - 1]);
      cur.push_back(l[e]);
    }
    std::sort(prev.begin(), prev.end());
    std::sort(cur.begin(), cur.end());
    EXPECT_LT(cur[2], prev[2]) << "median loss rose at epoch " << e + 1;
  }
}

TEST(GradientCheck, RankingScorer) {
  TaskSpec task;
  task.name = "lm";
  task.arch = Architecture::Window;
  FeatureConfig word;
  word.name = "word";
  word.kind = ExtractorKind::Word;
  word.dim = 4;
  word.dict = Dictionary(range_words(8));
  task.features = {word};
  task.window = 5;
  task.hidden = {6};
  task.tags = {"score"};
  task.chunked = false;
  Model m = make_model(task, 9);
  damp_parameters(m, 0.5);
  Rng rng(53);
  Sentence s = random_sentence(m, 5, rng);
  RankingInstance inst{s, 2, 3};
  // only check instances away from the hinge kink
  auto report = gradient_check(m, inst);
  EXPECT_LE(report.max_rel_error, 1e-4) << report.worst_tensor;
}

TEST(PretrainInit, OverwritesMatchingRowsOnly) {
  Model m = make_model(tiny_window_task(Loss::WLL), 10);
  const Matrix before = m.net.table(0);
  Embeddings emb;
  emb.words = {"wa", "nonexistent"};
  emb.vectors = Matrix(2, 3);
  for (std::size_t j = 0; j < 3; ++j) emb.vectors(0, j) = 9.0 + static_cast<double>(j);
  for (std::size_t w = 0; w < emb.words.size(); ++w) emb.index.emplace(emb.words[w], w);
  EXPECT_EQ(pretrain_init(m, emb), 1u);
  const auto idx = m.encoder.features[0].dict.find("wa");
  ASSERT_GE(idx, 0);
  EXPECT_DOUBLE_EQ(m.net.table(0)(idx, 0), 9.0);
  // untouched rows keep their random init
  EXPECT_DOUBLE_EQ(m.net.table(0)(0, 0), before(0, 0));
}

TEST(PretrainInit, EmptyFileLeavesModelUnchanged) {
  Model m = make_model(tiny_window_task(Loss::WLL), 11);
  const Matrix before = m.net.table(0);
  Embeddings emb;
  emb.vectors = Matrix(0, 0);
  EXPECT_EQ(pretrain_init(m, emb), 0u);
  EXPECT_TRUE(m.net.table(0) == before);
}

TEST(PretrainInit, DimensionMismatchThrows) {
  Model m = make_model(tiny_window_task(Loss::WLL), 12);
  Embeddings emb;
  emb.words = {"wa"};
  emb.vectors = Matrix(1, 5);
  emb.index.emplace("wa", 0);
  EXPECT_THROW(pretrain_init(m, emb), DataError);
}

TEST(GrowDictionary, PreservesOldRowsBitExactly) {
  Dictionary small(range_words(4));
  Dictionary large(range_words(7));
  LmConfig cfg;
  cfg.window = 3;
  cfg.hidden = 4;
  cfg.word_dim = 3;
  cfg.iterations = 0;
  cfg.eval_windows = 2;
  cfg.eval_negatives = 2;
  LmResult r = train_lm({{2, 3, 4}, {3, 2, 5}}, small, cfg);
  const Matrix before = r.lm.net.table(0);
  const Matrix hidden_before = r.lm.net.hidden(0).weight;
  grow_dictionary(r.lm, large, 99);
  EXPECT_EQ(r.lm.dict.size(), large.size());
  EXPECT_EQ(r.lm.net.table(0).rows(), large.size());
  for (std::size_t w = 0; w < before.rows(); ++w)
    for (std::size_t j = 0; j < before.cols(); ++j)
      EXPECT_EQ(r.lm.net.table(0)(w, j), before(w, j));
  EXPECT_TRUE(r.lm.net.hidden(0).weight == hidden_before);

  // same size is the identity
  const Matrix grown = r.lm.net.table(0);
  grow_dictionary(r.lm, large, 100);
  EXPECT_TRUE(r.lm.net.table(0) == grown);

  Dictionary incompatible(std::vector<std::string>{"zz"});
  EXPECT_THROW(grow_dictionary(r.lm, incompatible, 1), DataError);
}

TEST(EnsembleVote, MajorityAndTieBreak) {
  EXPECT_EQ(ensemble_vote({{"A", "B"}}), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(ensemble_vote({{"A"}, {"A"}, {"B"}}), (std::vector<std::string>{"A"}));
  EXPECT_EQ(ensemble_vote({{"A"}, {"B"}}), (std::vector<std::string>{"A"}));
  EXPECT_EQ(ensemble_vote({{"B"}, {"A"}, {"A"}, {"B"}}), (std::vector<std::string>{"B"}));
  EXPECT_THROW(ensemble_vote({{"A"}, {"A", "B"}}), DataError);
}

TEST(EmbedNeighbors, HandComputedDistances) {
  Embeddings emb;
  emb.words = {"p", "q", "r"};
  emb.vectors = Matrix(3, 2);
  emb.vectors(0, 0) = 0.0;
  emb.vectors(0, 1) = 0.0;
  emb.vectors(1, 0) = 3.0;
  emb.vectors(1, 1) = 4.0;  // distance 5 from p
  emb.vectors(2, 0) = 1.0;
  emb.vectors(2, 1) = 0.0;  // distance 1 from p
  for (std::size_t w = 0; w < 3; ++w) emb.index.emplace(emb.words[w], w);
  auto nn = embed_neighbors(emb, "p", 2);
  ASSERT_EQ(nn.size(), 2u);
  EXPECT_EQ(nn[0].word, "r");
  EXPECT_DOUBLE_EQ(nn[0].distance, 1.0);
  EXPECT_EQ(nn[1].word, "q");
  EXPECT_DOUBLE_EQ(nn[1].distance, 5.0);
  EXPECT_THROW(embed_neighbors(emb, "zzz", 1), DataError);
}

TEST(EmbedNeighbors, DuplicateRowRanksFirstAndQueryExcluded) {
  Embeddings emb;
  emb.words = {"p", "twin", "far"};
  emb.vectors = Matrix(3, 1);
  emb.vectors(2, 0) = 10.0;
  for (std::size_t w = 0; w < 3; ++w) emb.index.emplace(emb.words[w], w);
  auto nn = embed_neighbors(emb, "p", 5);
  ASSERT_EQ(nn.size(), 2u);  // query excluded, k capped
  EXPECT_EQ(nn[0].word, "twin");
  EXPECT_DOUBLE_EQ(nn[0].distance, 0.0);
}

TEST(TrainSupervised, LearnsTinyChunkCorpusAndLogs) {
  auto chunk = synth::make_chunk_task(800, 150, 77, Loss::SLL);
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.epochs = 10;
  cfg.seed = 5;
  std::ostringstream log;
  cfg.log = &log;
  TrainResult r = train_supervised(chunk.task, cfg);
  ASSERT_EQ(r.epochs.size(), 10u);
  EXPECT_GT(r.epochs.back().report.per_word_accuracy, 0.9);
  EXPECT_LT(r.epochs.back().mean_loss, r.epochs.front().mean_loss);
  EXPECT_NE(log.str().find("epoch 1 loss"), std::string::npos);
}

TEST(TrainSupervised, EmptyCorpusThrows) {
  TaskSpec task = tiny_window_task(Loss::WLL);
  TrainConfig cfg;
  EXPECT_THROW(train_supervised(task, cfg), DataError);
}

TEST(TrainMultitask, SingleTaskReproducesSupervisedBitExactly) {
  auto chunk = synth::make_chunk_task(60, 20, 11, Loss::SLL);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 21;
  TrainResult a = train_supervised(chunk.task, cfg);
  auto b = train_multitask({chunk.task}, SharedDepth::LookupAndFirstLayer, cfg);
  std::ostringstream sa, sb;
  save_model(a.model, sa);
  save_model(b[0].model, sb);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(TrainMultitask, SharedLookupStaysIdenticalAcrossTasks) {
  auto chunk = synth::make_chunk_task(80, 20, 13, Loss::SLL);
  TaskSpec class_task = synth::make_class_task(chunk, 80, 14);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;
  auto results = train_multitask({chunk.task, class_task}, SharedDepth::Lookup, cfg);
  ASSERT_EQ(results.size(), 2u);
  EXPECT_TRUE(results[0].model.net.table(0) == results[1].model.net.table(0));
  // private layers diverge
  EXPECT_FALSE(results[0].model.net.output().weight == results[1].model.net.output().weight);
}

TEST(TrainLm, CorruptionEqualToCenterCancelsExactly) {
  // identical positive and negative windows: loss is max(0, 1) = 1 and the
  // opposite gradients cancel through the shared scorer
  TaskSpec lm_task;
  lm_task.arch = Architecture::Window;
  FeatureConfig word;
  word.kind = ExtractorKind::Word;
  word.name = "word";
  word.dim = 3;
  word.dict = Dictionary(range_words(5));
  lm_task.features = {word};
  lm_task.window = 3;
  lm_task.hidden = {4};
  lm_task.tags = {"score"};
  Model m = make_model(lm_task, 17);
  const Sentence s{{"x", "x", "x"}, {{2, 3, 4}}, {}, -1};
  const auto ctx = m.net.embed(s.feature_rows, 3);
  WindowTrace tr_pos, tr_neg;
  const double s_pos = m.net.window_scores(ctx, 1, &tr_pos)[0];
  const double s_neg = m.net.window_scores(ctx, 1, &tr_neg)[0];
  const auto r = ranking_loss_grad(s_pos, s_neg);
  EXPECT_DOUBLE_EQ(r.loss, 1.0);
  NetworkGrads grads = m.net.zero_grads();
  const double gp[1] = {r.grad_pos};
  const double gn[1] = {r.grad_neg};
  m.net.window_backward(ctx, tr_pos, gp, grads);
  m.net.window_backward(ctx, tr_neg, gn, grads);
  Model before = m.clone();
  sgd_step(m.net, grads, 0.3);
  EXPECT_TRUE(m.net.table(0) == before.net.table(0));
  EXPECT_TRUE(m.net.hidden(0).weight == before.net.hidden(0).weight);
  EXPECT_TRUE(m.net.output().weight == before.net.output().weight);
}

TEST(TrainLm, RunsAndReportsCheckpoints) {
  auto corpus_text = synth::class_corpus(20000, 3);
  std::vector<std::string> tokens;
  for (const auto& s : corpus_text) tokens.insert(tokens.end(), s.begin(), s.end());
  Dictionary dict = build_dictionary(tokens, 100);
  std::vector<std::vector<std::int32_t>> corpus;
  for (const auto& s : corpus_text) {
    std::vector<std::int32_t> row;
    for (const auto& w : s) row.push_back(map_word(dict, w));
    corpus.push_back(std::move(row));
  }
  LmConfig cfg;
  cfg.window = 5;
  cfg.hidden = 16;
  cfg.word_dim = 8;
  cfg.iterations = 50000;
  cfg.eval_every = 25000;
  cfg.eval_windows = 200;
  cfg.eval_negatives = 10;
  cfg.validation_fraction = 0.1;
  cfg.seed = 2;
  LmResult r = train_lm(corpus, dict, cfg);
  ASSERT_EQ(r.validation_losses.size(), 3u);  // initial + 2 checkpoints
  EXPECT_EQ(r.embeddings().rows(), dict.size());
  EXPECT_LT(r.validation_losses.back(), r.validation_losses.front());
  EXPECT_THROW(train_lm({}, dict, cfg), DataError);
}
