// scratch-tagger: train, run and score window/sentence taggers from the
// command line. Exit codes: 2 usage, 3 data problems, 4 model problems.

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "scratchtag/scratchtag.hpp"

using namespace scratchtag;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitModel = 4;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

std::size_t resolve_column(int column, std::size_t width, const char* what) {
  long c = column;
  if (c < 0) c += static_cast<long>(width);
  if (c < 0 || c >= static_cast<long>(width))
    throw DataError(std::string(what) + " column " + std::to_string(column) +
                    " out of range for " + std::to_string(width) + " columns");
  return static_cast<std::size_t>(c);
}

bool tags_look_chunked(const std::vector<std::string>& tags) {
  for (const auto& t : tags) {
    if (t == "O") continue;
    if (t.size() >= 3 && t[1] == '-' &&
        (t[0] == 'B' || t[0] == 'I' || t[0] == 'E' || t[0] == 'S'))
      continue;
    return false;
  }
  return true;
}

std::size_t tagging_workers() {
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SCRATCH_TAGGER_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && cap >= 1) workers = std::min<std::size_t>(workers, cap);
  }
  return workers;
}

std::vector<ParseTree> load_trees(const std::string& path) {
  auto in = open_input(path);
  std::vector<ParseTree> trees;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    trees.push_back(parse_tree_from_string(line));
  }
  return trees;
}

// ---------------------------------------------------------------------------
// build-dict

struct BuildDictArgs {
  std::string input, out;
  std::size_t size = 100000;
  bool conll = false;
  int word_column = 0;
};

int cmd_build_dict(const BuildDictArgs& args) {
  auto in = open_input(args.input);
  DictionaryBuilder builder;
  std::size_t tokens = 0;
  if (args.conll) {
    for (const auto& sent : read_conll(in)) {
      for (const auto& row : sent.rows) {
        builder.add(row[resolve_column(args.word_column, row.size(), "word")]);
        ++tokens;
      }
    }
  } else {
    for (const auto& sent : read_plain_corpus(in)) {
      for (const auto& w : sent) builder.add(w);
      tokens += sent.size();
    }
  }
  Dictionary dict = builder.build(args.size);
  auto out = open_output(args.out);
  save_dictionary(dict, out);
  std::cerr << "built dictionary of " << dict.size() << " entries from " << tokens
            << " tokens\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string train_path, dev_path, out_path;
  std::string dict_path, gazetteer_path, embeddings_path;
  std::string trees_path, dev_trees_path;
  std::string arch = "window";
  std::string loss = "sll";
  std::string scheme = "iobes";
  std::string task_name = "task";
  int word_column = 0;
  int tag_column = -1;
  int verb_column = 0;
  bool has_verb_column = false;
  std::size_t dict_size = 100000;
  std::size_t window = 5;
  std::size_t word_dim = 50;
  std::size_t caps_dim = 5;
  bool no_caps = false;
  std::size_t suffix_length = 0;
  std::size_t suffix_dim = 5;
  std::size_t suffix_size = 1000;
  std::size_t gazetteer_dim = 5;
  std::size_t feature_dim = 5;
  std::size_t parse_levels_depth = 0;
  bool has_parse_levels = false;
  std::size_t parse_dim = 5;
  std::size_t position_dim = 5;
  std::size_t clip = 31;
  std::vector<std::size_t> hidden;
  std::vector<std::string> cascade_specs;  // name=column
  double learning_rate = 0.01;
  std::size_t epochs = 10;
  std::size_t patience = 0;
  std::uint64_t seed = 1;
  bool fixed_embeddings = false;
  bool no_fan_in = false;
  bool checkpoints = false;
};

int cmd_train(const TrainArgs& args) {
  auto train_in = open_input(args.train_path);
  std::vector<RawSentence> raw_train = read_conll(
      train_in, 0);  // word column fixed after width known
  if (raw_train.empty()) throw DataError("training corpus is empty");
  const std::size_t width = raw_train[0].rows[0].size();
  const std::size_t word_col = resolve_column(args.word_column, width, "word");
  for (auto& s : raw_train) s.word_column = word_col;

  std::vector<RawSentence> raw_dev;
  if (!args.dev_path.empty()) {
    auto dev_in = open_input(args.dev_path);
    raw_dev = read_conll(dev_in, word_col);
  }

  CorpusOptions opts;
  opts.tag_column = resolve_column(args.tag_column, width, "tag");
  opts.input_scheme = args.scheme == "iob" ? TagScheme::IOB : TagScheme::IOBES;
  if (args.has_verb_column)
    opts.verb_column = static_cast<std::ptrdiff_t>(resolve_column(args.verb_column, width, "verb"));

  TaskSpec task;
  task.name = args.task_name;
  task.arch = args.arch == "sentence" ? Architecture::Sentence : Architecture::Window;
  task.loss = args.loss == "wll" ? Loss::WLL : Loss::SLL;
  task.window = args.window;
  task.hidden = args.hidden;
  if (task.hidden.empty())
    task.hidden = task.arch == Architecture::Sentence ? std::vector<std::size_t>{300, 500}
                                                      : std::vector<std::size_t>{300};

  // collect tags first so the chunked flag drives scheme conversion
  {
    CorpusOptions probe = opts;
    probe.chunked = false;
    auto probe_tags = collect_tags(raw_train, probe);
    task.chunked = tags_look_chunked(probe_tags);
  }
  opts.chunked = task.chunked;
  task.tags = collect_tags(raw_train, opts);

  // feature stack
  Dictionary dict;
  if (!args.dict_path.empty()) {
    auto dict_in = open_input(args.dict_path);
    dict = load_dictionary(dict_in);
  } else {
    DictionaryBuilder builder;
    for (const auto& s : raw_train)
      for (const auto& row : s.rows) builder.add(row[word_col]);
    dict = builder.build(args.dict_size);
  }
  FeatureConfig word;
  word.name = "word";
  word.kind = ExtractorKind::Word;
  word.dim = args.word_dim;
  word.dict = dict;
  task.features.push_back(std::move(word));

  if (!args.no_caps) {
    FeatureConfig caps;
    caps.name = "caps";
    caps.kind = ExtractorKind::Caps;
    caps.dim = args.caps_dim;
    task.features.push_back(std::move(caps));
  }
  if (args.suffix_length > 0) {
    DictionaryBuilder builder(false);
    for (const auto& s : raw_train)
      for (const auto& row : s.rows) builder.add(word_suffix(row[word_col], args.suffix_length));
    FeatureConfig suffix;
    suffix.name = "suffix" + std::to_string(args.suffix_length);
    suffix.kind = ExtractorKind::Suffix;
    suffix.dim = args.suffix_dim;
    suffix.suffix_len = args.suffix_length;
    suffix.dict = builder.build(args.suffix_size);
    task.features.push_back(std::move(suffix));
  }
  std::shared_ptr<Gazetteer> gazetteer;
  if (!args.gazetteer_path.empty()) {
    auto gaz_in = open_input(args.gazetteer_path);
    gazetteer = std::make_shared<Gazetteer>(Gazetteer::load(gaz_in));
    for (std::size_t c = 0; c < kGazCategories; ++c) {
      FeatureConfig gaz;
      gaz.name = std::string("gazetteer-") + gaz_category_name(static_cast<GazCategory>(c));
      gaz.kind = ExtractorKind::Gazetteer;
      gaz.dim = args.gazetteer_dim;
      gaz.category = static_cast<GazCategory>(c);
      task.features.push_back(std::move(gaz));
    }
  }
  for (const auto& spec : args.cascade_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw DataError("bad --feature '" + spec + "', expected name=column");
    const std::size_t col = resolve_column(std::stoi(spec.substr(eq + 1)), width, "feature");
    DictionaryBuilder builder(false);
    for (const auto& s : raw_train)
      for (const auto& row : s.rows) builder.add(row[col]);
    FeatureConfig cascade;
    cascade.name = spec.substr(0, eq);
    cascade.kind = ExtractorKind::Cascade;
    cascade.dim = args.feature_dim;
    cascade.source_column = col;
    cascade.dict = builder.build(100000);
    task.features.push_back(std::move(cascade));
  }
  std::vector<ParseTree> train_trees, dev_trees;
  if (!args.trees_path.empty()) {
    train_trees = load_trees(args.trees_path);
    if (!args.dev_trees_path.empty()) dev_trees = load_trees(args.dev_trees_path);
    const std::size_t depth = args.has_parse_levels ? args.parse_levels_depth : 0;
    std::vector<DictionaryBuilder> builders(depth + 1, DictionaryBuilder(false));
    for (const auto& tree : train_trees) {
      auto levels = parse_levels(tree, depth);
      for (std::size_t lvl = 0; lvl <= depth; ++lvl)
        for (const auto& tag : levels[lvl]) builders[lvl].add(tag);
    }
    for (std::size_t lvl = 0; lvl <= depth; ++lvl) {
      FeatureConfig pt;
      pt.name = "pt" + std::to_string(lvl);
      pt.kind = ExtractorKind::ParseLevel;
      pt.dim = args.parse_dim;
      pt.level = lvl;
      pt.dict = builders[lvl].build(1000);
      task.features.push_back(std::move(pt));
    }
  }
  if (task.arch == Architecture::Sentence) {
    FeatureConfig dist_word;
    dist_word.name = "dist-word";
    dist_word.kind = ExtractorKind::RelPosition;
    dist_word.dim = args.position_dim;
    dist_word.clip = args.clip;
    dist_word.anchor = 0;
    task.features.push_back(std::move(dist_word));
    if (args.has_verb_column) {
      FeatureConfig dist_verb;
      dist_verb.name = "dist-verb";
      dist_verb.kind = ExtractorKind::RelPosition;
      dist_verb.dim = args.position_dim;
      dist_verb.clip = args.clip;
      dist_verb.anchor = 1;
      task.features.push_back(std::move(dist_verb));
    }
  }

  task.gazetteer = gazetteer;
  task.verb_column = static_cast<std::int32_t>(opts.verb_column);
  SentenceEncoder encoder;
  encoder.features = task.features;
  encoder.gazetteer = gazetteer;
  task.train = encode_corpus(encoder, raw_train, task.tags, opts,
                             train_trees.empty() ? nullptr : &train_trees);
  if (!raw_dev.empty())
    task.dev = encode_corpus(encoder, raw_dev, task.tags, opts,
                             dev_trees.empty() ? nullptr : &dev_trees);

  TrainConfig cfg;
  cfg.learning_rate = args.learning_rate;
  cfg.epochs = args.epochs;
  cfg.patience = args.patience;
  cfg.seed = args.seed;
  cfg.fan_in_rates = !args.no_fan_in;
  cfg.update_embeddings = !args.fixed_embeddings;
  cfg.log = &std::cout;
  if (!args.embeddings_path.empty()) {
    auto emb_in = open_input(args.embeddings_path);
    auto embeddings = std::make_shared<Embeddings>(load_embeddings(emb_in));
    cfg.init_model = [embeddings](std::size_t, Model& model) {
      const std::size_t copied = pretrain_init(model, *embeddings);
      std::cerr << "initialized " << copied << " word vectors from pretrained embeddings\n";
    };
  }
  if (args.checkpoints) {
    const std::string base = args.out_path;
    cfg.per_epoch = [base](std::size_t epoch, std::size_t, const Model& model) {
      auto out = open_output(base + ".epoch" + std::to_string(epoch));
      save_model(model, out);
    };
  }

  TrainResult result = train_supervised(task, cfg);
  auto out = open_output(args.out_path);
  save_model(result.model, out);
  std::cerr << "saved model to " << args.out_path << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// lm-train

struct LmTrainArgs {
  std::string corpus_path, dict_path, out_path, init_path, model_out;
  std::size_t dict_size = 100000;
  LmConfig cfg;
};

int cmd_lm_train(const LmTrainArgs& args) {
  auto corpus_in = open_input(args.corpus_path);
  const auto text = read_plain_corpus(corpus_in);
  Dictionary dict;
  if (!args.dict_path.empty()) {
    auto dict_in = open_input(args.dict_path);
    dict = load_dictionary(dict_in);
  } else {
    DictionaryBuilder builder;
    for (const auto& s : text)
      for (const auto& w : s) builder.add(w);
    dict = builder.build(args.dict_size);
  }
  std::vector<std::vector<std::int32_t>> corpus;
  corpus.reserve(text.size());
  for (const auto& s : text) {
    std::vector<std::int32_t> row;
    row.reserve(s.size());
    for (const auto& w : s) row.push_back(map_word(dict, w));
    corpus.push_back(std::move(row));
  }

  std::optional<Embeddings> warm;
  if (!args.init_path.empty()) {
    auto emb_in = open_input(args.init_path);
    warm = load_embeddings(emb_in);
  }
  LmConfig cfg = args.cfg;
  cfg.log = &std::cout;
  LmResult result = train_lm(corpus, dict, cfg, warm ? &*warm : nullptr);
  auto out = open_output(args.out_path);
  save_embeddings(dict, result.lm.net.table(0), out);
  std::cerr << "saved embeddings to " << args.out_path << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// tag

struct TagArgs {
  std::string model_path, input_path, output_path;
  bool plain = false;
  std::string output_scheme = "iobes";
};

int cmd_tag(const TagArgs& args) {
  Model model = [&] {
    auto in = open_input(args.model_path);
    return load_model(in);
  }();
  if (args.plain && model.encoder.needs_columns())
    throw DataError("model uses column features; plain-text input cannot supply them");
  if (model.encoder.needs_trees())
    throw DataError("model uses parse-level features; the tag command cannot supply trees");

  auto in = open_input(args.input_path);
  std::vector<RawSentence> sentences;
  std::size_t skipped = 0;
  if (args.plain) {
    for (auto& tokens : read_plain_corpus(in)) {
      RawSentence raw;
      for (auto& w : tokens) raw.rows.push_back({std::move(w)});
      sentences.push_back(std::move(raw));
    }
  } else {
    ConllReader reader(in);
    while (true) {
      try {
        auto s = reader.next();
        if (!s) break;
        sentences.push_back(std::move(*s));
      } catch (const DataError& e) {
        std::cerr << "warning: skipping malformed sentence (" << e.what() << ")\n";
        ++skipped;
      }
    }
  }

  std::vector<std::vector<std::string>> predictions(sentences.size());
  std::vector<unsigned char> ok(sentences.size(), 1);
  const std::size_t workers = std::min(tagging_workers(), std::max<std::size_t>(sentences.size(), 1));
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failed{0};
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= sentences.size()) break;
      try {
        Sentence s = model.encoder.encode(sentences[i]);
        if (model.verb_column >= 0)
          s.verb_position =
              find_verb_position(sentences[i], static_cast<std::size_t>(model.verb_column));
        predictions[i] = tag_sentence(model, s);
        if (model.chunked && args.output_scheme == "iob")
          predictions[i] = iobes_to_iob(predictions[i]);
      } catch (const DataError&) {
        ok[i] = 0;
        failed.fetch_add(1);
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < sentences.size(); ++i)
    if (!ok[i]) std::cerr << "warning: skipping sentence " << i << " (encoding failed)\n";
  skipped += failed.load();

  std::ofstream file_out;
  std::ostream* out = &std::cout;
  if (!args.output_path.empty()) {
    file_out = open_output(args.output_path);
    out = &file_out;
  }
  std::vector<RawSentence> kept;
  std::vector<std::vector<std::string>> kept_predictions;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (!ok[i]) continue;
    kept.push_back(std::move(sentences[i]));
    kept_predictions.push_back(std::move(predictions[i]));
  }
  write_conll(kept, kept_predictions, *out);
  if (skipped > 0) std::cerr << "skipped " << skipped << " malformed sentences\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string input_path;
  int gold_column = -2;
  int pred_column = -1;
  std::string scheme = "iobes";
  bool pwa = false;
};

int cmd_eval(const EvalArgs& args) {
  auto in = open_input(args.input_path);
  const auto sentences = read_conll(in);
  std::vector<std::vector<std::string>> gold, pred;
  for (const auto& s : sentences) {
    const std::size_t width = s.rows[0].size();
    gold.push_back(s.column(resolve_column(args.gold_column, width, "gold")));
    pred.push_back(s.column(resolve_column(args.pred_column, width, "predicted")));
  }
  if (args.scheme == "none") {
    std::size_t words = 0, correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i)
      for (std::size_t t = 0; t < gold[i].size(); ++t) {
        ++words;
        if (gold[i][t] == pred[i][t]) ++correct;
      }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "accuracy: %6.2f%%",
                  words ? 100.0 * static_cast<double>(correct) / static_cast<double>(words)
                        : 0.0);
    std::cout << buf << '\n';
    return 0;
  }
  const TagScheme scheme = args.scheme == "iob" ? TagScheme::IOB : TagScheme::IOBES;
  const EvalReport report = evaluate_tags(gold, pred, scheme);
  std::cout << format_report(report, args.pwa) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// nn

struct NnArgs {
  std::string embeddings_path, word;
  std::size_t k = 10;
};

int cmd_nn(const NnArgs& args) {
  auto in = open_input(args.embeddings_path);
  const Embeddings emb = load_embeddings(in);
  for (const auto& n : embed_neighbors(emb, args.word, args.k))
    std::cout << n.word << ' ' << n.distance << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// ensemble-vote

struct EnsembleArgs {
  std::vector<std::string> inputs;
  std::string output_path;
};

int cmd_ensemble(const EnsembleArgs& args) {
  std::vector<std::vector<RawSentence>> files;
  for (const auto& path : args.inputs) {
    auto in = open_input(path);
    files.push_back(read_conll(in));
    if (files.back().size() != files.front().size())
      throw DataError("'" + path + "' has a different sentence count");
  }
  std::vector<RawSentence> stripped;
  std::vector<std::vector<std::string>> voted;
  for (std::size_t i = 0; i < files[0].size(); ++i) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& file : files) {
      if (file[i].length() != files[0][i].length())
        throw DataError("sentence " + std::to_string(i) + " is misaligned across inputs");
      rows.push_back(file[i].column(file[i].rows[0].size() - 1));
    }
    voted.push_back(ensemble_vote(rows));
    RawSentence base = files[0][i];
    for (auto& row : base.rows) row.pop_back();  // replaced by the voted tag
    if (base.rows[0].empty())
      throw DataError("input files need at least two columns (word + tag)");
    stripped.push_back(std::move(base));
  }
  std::ofstream file_out;
  std::ostream* out = &std::cout;
  if (!args.output_path.empty()) {
    file_out = open_output(args.output_path);
    out = &file_out;
  }
  write_conll(stripped, voted, *out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scratch-tagger: fast neural sequence tagger"};
  app.require_subcommand(1);
  int rc = 0;

  BuildDictArgs bd;
  auto* build_dict = app.add_subcommand("build-dict", "build a frequency-ranked dictionary");
  build_dict->add_option("--input", bd.input, "token corpus")->required();
  build_dict->add_option("--out", bd.out, "dictionary file to write")->required();
  build_dict->add_option("--size", bd.size, "maximum entries including PADDING/RARE");
  build_dict->add_flag("--conll", bd.conll, "input is CoNLL columns, not plain text");
  build_dict->add_option("--word-column", bd.word_column, "word column for --conll");
  build_dict->callback([&] { rc = cmd_build_dict(bd); });

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train a tagger");
  train->add_option("--train", tr.train_path, "training corpus (CoNLL)")->required();
  train->add_option("--dev", tr.dev_path, "validation corpus (CoNLL)");
  train->add_option("--out", tr.out_path, "model file to write")->required();
  train->add_option("--name", tr.task_name, "task name stored in the model");
  train->add_option("--arch", tr.arch, "window|sentence")
      ->check(CLI::IsMember({"window", "sentence"}));
  train->add_option("--loss", tr.loss, "wll|sll")->check(CLI::IsMember({"wll", "sll"}));
  train->add_option("--scheme", tr.scheme, "gold tag scheme: iobes|iob")
      ->check(CLI::IsMember({"iobes", "iob"}));
  train->add_option("--word-column", tr.word_column, "word column (default 0)");
  train->add_option("--tag-column", tr.tag_column, "gold tag column (default last)");
  auto* verb_opt = train->add_option("--verb-column", tr.verb_column,
                                     "verb marker column (sentence approach, SRL)");
  train->add_option("--dict", tr.dict_path, "word dictionary file (else built from training)");
  train->add_option("--dict-size", tr.dict_size, "size when building the dictionary");
  train->add_option("--window", tr.window, "window / convolution size d_win");
  train->add_option("--word-dim", tr.word_dim, "word embedding dimension");
  train->add_option("--caps-dim", tr.caps_dim, "capitalization embedding dimension");
  train->add_flag("--no-caps", tr.no_caps, "drop the capitalization feature");
  train->add_option("--suffix-length", tr.suffix_length, "suffix feature length (0 = off)");
  train->add_option("--suffix-dim", tr.suffix_dim, "suffix embedding dimension");
  train->add_option("--suffix-size", tr.suffix_size, "suffix dictionary size");
  train->add_option("--gazetteer", tr.gazetteer_path, "gazetteer file (adds 4 features)");
  train->add_option("--gazetteer-dim", tr.gazetteer_dim, "gazetteer embedding dimension");
  train->add_option("--feature", tr.cascade_specs,
                    "cascaded tag feature name=column (repeatable)");
  train->add_option("--feature-dim", tr.feature_dim, "cascaded feature embedding dimension");
  train->add_option("--parse-trees", tr.trees_path, "bracketed trees aligned with --train");
  train->add_option("--dev-parse-trees", tr.dev_trees_path, "trees aligned with --dev");
  auto* levels_opt = train->add_option("--parse-levels", tr.parse_levels_depth,
                                       "deepest parse level feature (default 0)");
  train->add_option("--parse-dim", tr.parse_dim, "parse level embedding dimension");
  train->add_option("--position-dim", tr.position_dim, "relative position embedding dimension");
  train->add_option("--clip", tr.clip, "relative position clip");
  train->add_option("--hidden", tr.hidden,
                    "hidden sizes (default 300; sentence approach 300 500)");
  train->add_option("--lr", tr.learning_rate, "learning rate");
  train->add_option("--epochs", tr.epochs, "training epochs");
  train->add_option("--patience", tr.patience, "stop after N epochs without improvement");
  train->add_option("--seed", tr.seed, "random seed");
  train->add_option("--embeddings", tr.embeddings_path, "pretrained word embeddings (text)");
  train->add_flag("--fixed-embeddings", tr.fixed_embeddings, "freeze every lookup table");
  train->add_flag("--no-fan-in", tr.no_fan_in, "disable per-layer fan-in learning rates");
  train->add_flag("--checkpoints", tr.checkpoints, "save the model after every epoch");
  train->callback([&] {
    tr.has_verb_column = verb_opt->count() > 0;
    tr.has_parse_levels = levels_opt->count() > 0;
    rc = cmd_train(tr);
  });

  LmTrainArgs lm;
  auto* lm_train = app.add_subcommand("lm-train", "train ranking-criterion word embeddings");
  lm_train->add_option("--corpus", lm.corpus_path, "plain text, one sentence per line")
      ->required();
  lm_train->add_option("--out", lm.out_path, "embeddings file to write")->required();
  lm_train->add_option("--dict", lm.dict_path, "dictionary file (else built from corpus)");
  lm_train->add_option("--dict-size", lm.dict_size, "size when building the dictionary");
  lm_train->add_option("--window", lm.cfg.window, "window size d_win");
  lm_train->add_option("--hidden", lm.cfg.hidden, "hidden units");
  lm_train->add_option("--dim", lm.cfg.word_dim, "embedding dimension");
  lm_train->add_option("--lr", lm.cfg.learning_rate, "learning rate");
  lm_train->add_option("--iterations", lm.cfg.iterations, "training iterations");
  lm_train->add_option("--eval-every", lm.cfg.eval_every, "checkpoint cadence");
  lm_train->add_option("--eval-windows", lm.cfg.eval_windows, "held-out windows per checkpoint");
  lm_train->add_option("--eval-negatives", lm.cfg.eval_negatives,
                       "corruptions per held-out window");
  lm_train->add_option("--validation-fraction", lm.cfg.validation_fraction,
                       "tail fraction of the corpus held out");
  lm_train->add_option("--seed", lm.cfg.seed, "random seed");
  lm_train->add_option("--init-embeddings", lm.init_path,
                       "warm-start from embeddings of a smaller dictionary");
  lm_train->callback([&] { rc = cmd_lm_train(lm); });

  TagArgs tg;
  auto* tag = app.add_subcommand("tag", "tag a corpus with a trained model");
  tag->add_option("--model", tg.model_path, "model file")->required();
  tag->add_option("--input", tg.input_path, "corpus to tag")->required();
  tag->add_option("--output", tg.output_path, "output file (default stdout)");
  tag->add_flag("--plain", tg.plain, "input is plain tokenized text, one sentence per line");
  tag->add_option("--output-scheme", tg.output_scheme, "iobes|iob")
      ->check(CLI::IsMember({"iobes", "iob"}));
  tag->callback([&] { rc = cmd_tag(tg); });

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "score a tagged corpus");
  eval->add_option("--input", ev.input_path, "file with gold and predicted columns")
      ->required();
  eval->add_option("--gold-column", ev.gold_column, "gold column (default -2)");
  eval->add_option("--pred-column", ev.pred_column, "predicted column (default last)");
  eval->add_option("--scheme", ev.scheme, "iobes|iob|none (none = accuracy only)")
      ->check(CLI::IsMember({"iobes", "iob", "none"}));
  eval->add_flag("--pwa", ev.pwa, "also print per-word accuracy");
  eval->callback([&] { rc = cmd_eval(ev); });

  NnArgs nn;
  auto* nn_cmd = app.add_subcommand("nn", "nearest neighbors in an embedding file");
  nn_cmd->add_option("--embeddings", nn.embeddings_path, "embeddings file")->required();
  nn_cmd->add_option("--word", nn.word, "query word")->required();
  nn_cmd->add_option("--k", nn.k, "neighbor count");
  nn_cmd->callback([&] { rc = cmd_nn(nn); });

  EnsembleArgs en;
  auto* ensemble = app.add_subcommand("ensemble-vote", "merge tagged files by per-tag voting");
  ensemble->add_option("inputs", en.inputs, "tagged CoNLL files")->required()->expected(-1);
  ensemble->add_option("--out", en.output_path, "output file (default stdout)");
  ensemble->callback([&] { rc = cmd_ensemble(en); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kExitModel;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return rc;
}
