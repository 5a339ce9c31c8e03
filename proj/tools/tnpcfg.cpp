// Command-line front end: train, parse, eval, sweep, bench, inspect, sample.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "json.hpp"
#include "run.hpp"
#include "tnpcfg/checkpoint.hpp"
#include "tnpcfg/experiments.hpp"

namespace fs = std::filesystem;
using namespace tnpcfg;
using namespace tnpcfg::cli;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  fs::path runs = "runs";
  std::size_t threads = 1;
};

struct ConfigFlags {
  fs::path config;
  std::vector<std::string> overrides;
  fs::path train, dev, test;
  std::string seeds;
  std::string dtype;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("-c,--config", f.config, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", f.overrides, "Override a config key, e.g. --set train.max_epochs=2");
  cmd->add_option("--train", f.train, "Training treebank (overrides data.train)");
  cmd->add_option("--dev", f.dev, "Development treebank (overrides data.dev)");
  cmd->add_option("--seeds", f.seeds, "Comma-separated seeds (overrides train.seeds)");
  cmd->add_option("--dtype", f.dtype, "f32 or f64 (overrides model.dtype)");
}

Config resolve_config(const ConfigFlags& f) {
  Config c = f.config.empty() ? Config{} : load_config(f.config);
  for (const auto& o : f.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not of the form key=value");
    set_key(c, o.substr(0, eq), o.substr(eq + 1));
  }
  if (!f.train.empty()) c.train_path = f.train;
  if (!f.dev.empty()) c.dev_path = f.dev;
  if (!f.test.empty()) c.test_path = f.test;
  if (!f.seeds.empty()) set_key(c, "train.seeds", f.seeds);
  if (!f.dtype.empty()) set_key(c, "model.dtype", f.dtype);
  return c;
}

const std::set<std::string>& punctuation(bool strip) {
  static const std::set<std::string> none;
  return strip ? default_punctuation_tags() : none;
}

std::vector<TreeNode> load_trees(const fs::path& path, bool strip, const std::string& role) {
  if (path.empty()) throw std::invalid_argument("no " + role + " treebank given");
  PreprocessStats stats;
  auto trees = preprocess(read_treebank(path), punctuation(strip), &stats);
  std::cerr << role << ": " << trees.size() << " trees from " << path.string() << " (" << stats.dropped_empty
            << " empty and " << stats.dropped_short << " one-word trees dropped)\n";
  return trees;
}

std::vector<Sentence> encode_all(const Vocabulary& vocab, std::span<const TreeNode> trees) {
  std::vector<Sentence> out;
  for (const auto& t : trees) {
    const auto w = words(t);
    out.push_back(vocab.encode(w));
  }
  return out;
}

std::vector<std::size_t> parse_list(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument(what + " has an invalid entry '" + item + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument(what + " is empty");
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

void print_parameters(const ModelConfig& m) {
  std::cout << "parameters: " << parameter_count(m) << " (n=" << m.n << " p=" << m.p << " d=" << m.d << " k=" << m.k
            << " q=" << m.q << " " << to_string(m.dtype) << ")\n";
}

void log_epoch(const EpochRecord& r) {
  std::cerr << "seed " << r.seed << " epoch " << r.epoch << ": dev perplexity " << r.dev_perplexity;
  if (r.epoch > 0) std::cerr << ", train nll " << r.train_nll << ", " << r.wall_seconds << "s";
  if (r.skipped_batches) std::cerr << ", " << r.skipped_batches << " batches skipped";
  std::cerr << "\n";
}

// ---- train ----------------------------------------------------------------

template <typename Real>
void train_and_save(const ModelConfig& model, const Config& c, std::span<const Sentence> train_set,
                    std::span<const Sentence> dev_set, const Vocabulary& vocab, RunManifest& run) {
  const TrainResult<Real> result = train<Real>(model, c.train, train_set, dev_set, log_epoch);
  auto history = open_out(run.output("history.tsv"));
  history << "epoch\tseed\ttrain_nll\tdev_perplexity\twall_seconds\tskipped_batches\n";
  for (const auto& h : result.history) {
    history << h.epoch << '\t' << h.seed << '\t' << h.train_nll << '\t' << h.dev_perplexity << '\t' << h.wall_seconds
            << '\t' << h.skipped_batches << '\n';
  }
  std::vector<Metric> metrics;
  for (const auto& r : result.runs) {
    const std::string seed = std::to_string(r.seed);
    const auto ckpt = make_checkpoint(r.best, vocab,
                                      {{"best_epoch", std::to_string(r.best_epoch)},
                                       {"perplexity_normalization", "per-token"},
                                       {"run", run.digest()}});
    write_checkpoint(run.output("seed-" + seed + ".ckpt"), ckpt);
    metrics.push_back({"dev_perplexity", r.best_dev_perplexity, seed});
    metrics.push_back({"best_epoch", static_cast<double>(r.best_epoch), seed});
    std::cout << "seed " << seed << ": best epoch " << r.best_epoch << ", dev perplexity " << r.best_dev_perplexity
              << "\n";
  }
  auto out = open_out(run.output("metrics.tsv"));
  write_metrics(out, metrics);
}

void cmd_train(const Common& common, const ConfigFlags& flags) {
  const Config c = resolve_config(flags);
  auto train_trees = load_trees(c.train_path, c.strip_punctuation, "train");
  if (c.max_length) {
    std::erase_if(train_trees, [&](const TreeNode& t) { return t.leaf_count() > c.max_length; });
  }
  const auto dev_trees = load_trees(c.dev_path, c.strip_punctuation, "dev");
  const Vocabulary vocab = build_vocab(train_trees, c.vocab_size);
  const ModelConfig model = c.resolve_model(vocab.size());
  print_parameters(model);

  RunManifest run("train", common.runs);
  run.set_all(c.snapshot());
  run.input("train", c.train_path);
  run.input("dev", c.dev_path);
  const auto train_set = encode_all(vocab, train_trees);
  const auto dev_set = encode_all(vocab, dev_trees);
  vocab.write(run.output("vocab.tsv"));

  Config threaded = c;
  threaded.train.threads = common.threads;
  if (model.dtype == Precision::kSingle) {
    train_and_save<float>(model, threaded, train_set, dev_set, vocab, run);
  } else {
    train_and_save<double>(model, threaded, train_set, dev_set, vocab, run);
  }
  run.write();
  std::cout << "run directory: " << run.directory().string() << "\n";
}

// ---- parse ----------------------------------------------------------------

std::vector<std::vector<std::string>> read_sentences(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    out.emplace_back(std::istream_iterator<std::string>(words), std::istream_iterator<std::string>());
  }
  return out;
}

json record(std::size_t id, const Decoded& d) {
  json spans = json::array();
  for (const auto& s : d.tree.spans) spans.push_back({s.begin, s.end, s.label});
  json r{{"id", id}, {"length", d.tree.length}, {"spans", spans}};
  if (d.error.empty()) {
    r["log_likelihood"] = d.log_likelihood;
  } else {
    r["log_likelihood"] = nullptr;
    r["error"] = d.error;
  }
  return r;
}

void cmd_parse(const Common& common, const fs::path& checkpoint, const fs::path& input, bool treebank,
               const fs::path& output) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  const TdPcfg g = grammar(ckpt);
  const Vocabulary vocab = vocabulary(ckpt);

  std::vector<std::vector<std::string>> tokens;
  if (treebank) {
    for (const auto& t : load_trees(input, true, "input")) tokens.push_back(words(t));
  } else {
    tokens = read_sentences(input);
  }
  std::vector<Sentence> sentences;
  for (const auto& t : tokens) sentences.push_back(vocab.encode(t));

  RunManifest run("parse", common.runs);
  run.set("treebank_input", treebank ? "true" : "false");
  run.input("checkpoint", checkpoint);
  run.input("input", input);
  fs::path target = output;
  if (target.empty()) {
    target = run.output("predictions.jsonl");
  } else {
    run.external_output(target);
  }
  const auto decoded = decode_corpus(g, sentences, common.threads);
  std::ofstream out(target);
  if (!out) throw std::runtime_error("cannot write " + target.string());
  std::size_t failed = 0;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    out << record(i, decoded[i]).dump() << "\n";
    failed += !decoded[i].error.empty();
  }
  run.write();
  std::cerr << "parsed " << decoded.size() << " sentences (" << failed << " without a parse)\n";
  std::cout << target.string() << "\n";
}

// ---- eval -----------------------------------------------------------------

std::vector<ParseTree> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<ParseTree> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      const json r = json::parse(line);
      ParseTree t;
      t.length = r.at("length").get<std::size_t>();
      for (const auto& s : r.at("spans")) {
        t.spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(), s.at(2).get<SymbolId>()});
      }
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + " line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

void cmd_eval(const Common& common, const fs::path& gold_path, const fs::path& pred_path, const std::string& baseline,
              std::uint64_t seed, const std::string& tag, bool strip, const std::string& label_list) {
  const auto trees = load_trees(gold_path, strip, "gold");
  std::vector<GoldTree> gold;
  for (const auto& t : trees) gold.push_back(GoldTree::from(t));

  RunManifest run("eval", common.runs);
  run.input("gold", gold_path);
  run.set("strip_punctuation", strip ? "true" : "false");
  run.set("tag", tag);
  std::vector<ParseTree> pred;
  if (!pred_path.empty()) {
    run.input("predictions", pred_path);
    pred = read_predictions(pred_path);
    if (pred.size() != gold.size()) {
      throw std::invalid_argument("prediction count " + std::to_string(pred.size()) + " differs from gold count " +
                                  std::to_string(gold.size()) + "; first unmatched sentence is " +
                                  std::to_string(std::min(pred.size(), gold.size())));
    }
  } else {
    run.set("baseline", baseline);
    run.set("seed", std::to_string(seed));
    std::mt19937_64 rng(seed);
    for (const auto& g : gold) {
      if (baseline == "left") {
        pred.push_back(left_branching(g.length));
      } else if (baseline == "right") {
        pred.push_back(right_branching(g.length));
      } else if (baseline == "random") {
        pred.push_back(random_tree(g.length, rng));
      } else {
        throw std::invalid_argument("unknown baseline '" + baseline + "' (left, right or random)");
      }
    }
  }

  const CorpusF1 f1 = corpus_f1(gold, pred);
  std::vector<std::string> labels = default_recall_labels();
  if (!label_list.empty()) {
    labels.clear();
    std::stringstream in(label_list);
    for (std::string item; std::getline(in, item, ',');) labels.push_back(item);
    run.set("labels", label_list);
  }
  const auto recall = recall_by_label(gold, pred, labels);
  std::vector<Metric> metrics{{"sentence_f1", f1.mean, tag},
                              {"sentences_scored", static_cast<double>(f1.scored), tag},
                              {"sentences_skipped", static_cast<double>(f1.skipped), tag}};
  std::cout << std::fixed << std::setprecision(2) << "sentence F1  " << f1.mean << "  (" << f1.scored
            << " scored, " << f1.skipped << " without nontrivial gold spans)\n";
  for (const auto& r : recall) {
    std::cout << "recall " << std::left << std::setw(5) << r.label << " ";
    if (r.recall) {
      std::cout << *r.recall << "  (" << r.gold_count << " gold)\n";
      metrics.push_back({"recall_" + r.label, *r.recall, tag});
    } else {
      std::cout << "n/a\n";
    }
  }
  auto out = open_out(run.output("metrics.tsv"));
  write_metrics(out, metrics);
  run.write();
  std::cout << "run directory: " << run.directory().string() << "\n";
}

// ---- sweep ----------------------------------------------------------------

void cmd_sweep(const Common& common, const ConfigFlags& flags, const std::string& p_list) {
  const Config c = resolve_config(flags);
  const auto ps = parse_list(p_list, "--p");
  auto train_trees = load_trees(c.train_path, c.strip_punctuation, "train");
  if (c.max_length) {
    std::erase_if(train_trees, [&](const TreeNode& t) { return t.leaf_count() > c.max_length; });
  }
  const auto dev_trees = load_trees(c.dev_path, c.strip_punctuation, "dev");
  const fs::path test_path = c.test_path.empty() ? c.dev_path : c.test_path;
  const auto test_trees = load_trees(test_path, c.strip_punctuation, "test");
  const Vocabulary vocab = build_vocab(train_trees, c.vocab_size);
  const auto train_set = encode_all(vocab, train_trees);
  const auto dev_set = encode_all(vocab, dev_trees);
  const auto test_set = encode_all(vocab, test_trees);
  std::vector<GoldTree> gold;
  for (const auto& t : test_trees) gold.push_back(GoldTree::from(t));

  ModelConfig base = c.resolve_model(vocab.size());
  base.d = c.d;
  for (std::size_t p : ps) {
    ModelConfig m = base;
    m.p = p;
    m.n = p / 2;
    m.d = c.d ? c.d : ModelConfig::with_defaults(p, m.q).d;
    print_parameters(m);
  }

  RunManifest run("sweep", common.runs);
  run.set_all(c.snapshot());
  run.set("sweep.p", p_list);
  run.input("train", c.train_path);
  run.input("dev", c.dev_path);
  run.input("test", test_path);
  TrainConfig tc = c.train;
  tc.threads = common.threads;
  const auto rows = sweep(base, tc, ps, {train_set, dev_set, test_set, gold}, log_epoch);

  auto summary = open_out(run.output("sweep.tsv"));
  summary << "p\tn\td\tparameters\tmean_f1\tstd_f1\tmedian_perplexity\n";
  auto per_seed = open_out(run.output("sweep_seeds.tsv"));
  per_seed << "p\tseed\tbest_epoch\tinitial_perplexity\tperplexity\tf1\n";
  for (const auto& r : rows) {
    summary << r.p << '\t' << r.n << '\t' << r.d << '\t' << r.parameters << '\t' << r.mean_f1 << '\t' << r.std_f1
            << '\t' << r.median_perplexity << '\n';
    for (const auto& s : r.seeds) {
      per_seed << r.p << '\t' << s.seed << '\t' << s.best_epoch << '\t' << s.initial_perplexity << '\t'
               << s.perplexity << '\t' << s.f1 << '\n';
    }
    std::cout << "p=" << r.p << " n=" << r.n << " d=" << r.d << ": F1 " << r.mean_f1 << " +- " << r.std_f1
              << ", median perplexity " << r.median_perplexity << "\n";
  }
  run.write();
  std::cout << "run directory: " << run.directory().string() << "\n";
}

// ---- bench ----------------------------------------------------------------

void cmd_bench(const Common& common, const std::string& dense, const std::string& factored, std::size_t length,
               std::size_t reps, std::uint64_t seed) {
  RunManifest run("bench", common.runs);
  run.set("dense", dense);
  run.set("factored", factored);
  run.set("length", std::to_string(length));
  run.set("repetitions", std::to_string(reps));
  run.set("seed", std::to_string(seed));
  auto table = open_out(run.output("bench.tsv"));
  table << "path\tm\tn\td\tlength\trepetitions\tmedian_seconds\n";
  auto exponents = open_out(run.output("exponents.tsv"));
  exponents << "path\texponent\n";
  for (const auto& [path, list] : {std::pair{InsidePath::kDense, dense}, std::pair{InsidePath::kFactored, factored}}) {
    if (list.empty()) continue;
    const auto ms = parse_list(list, "--" + to_string(path));
    const auto points = bench_inside(path, ms, length, reps, seed);
    for (const auto& p : points) {
      table << to_string(p.path) << '\t' << p.m << '\t' << p.n << '\t' << p.d << '\t' << p.length << '\t'
            << p.repetitions << '\t' << p.median_seconds << '\n';
      std::cout << to_string(p.path) << " m=" << p.m << ": " << p.median_seconds << "s\n";
    }
    if (points.size() >= 2) {
      const double e = fitted_exponent(points);
      exponents << to_string(path) << '\t' << e << '\n';
      std::cout << to_string(path) << " exponent in m: " << e << "\n";
    }
  }
  run.write();
  std::cout << "run directory: " << run.directory().string() << "\n";
}

// ---- inspect --------------------------------------------------------------

void cmd_inspect(const Common& common, const fs::path& checkpoint, const fs::path& treebank, std::size_t top_k,
                 std::size_t top_labels, std::size_t clusters, std::size_t cluster_size) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  const TdPcfg g = grammar(ckpt);
  const Vocabulary vocab = vocabulary(ckpt);
  const auto trees = load_trees(treebank, true, "treebank");
  std::vector<GoldTree> gold;
  std::vector<std::vector<std::string>> tokens;
  for (const auto& t : trees) {
    gold.push_back(GoldTree::from(t));
    tokens.push_back(words(t));
  }
  const auto sentences = encode_all(vocab, trees);
  const auto pred = trees_of(decode_corpus(g, sentences, common.threads));

  RunManifest run("inspect", common.runs);
  run.input("checkpoint", checkpoint);
  run.input("treebank", treebank);
  run.set("top_k", std::to_string(top_k));
  run.set("top_labels", std::to_string(top_labels));
  run.set("clusters", std::to_string(clusters));
  run.set("cluster_size", std::to_string(cluster_size));

  const Correspondence c = label_correspondence(gold, pred, top_k, top_labels);
  auto table = open_out(run.output("correspondence.tsv"));
  table << "gold\tcount";
  for (SymbolId col : c.columns) table << '\t' << (col < 0 ? std::string("OTHER") : "NT" + std::to_string(col));
  table << '\n';
  for (std::size_t r = 0; r < c.rows.size(); ++r) {
    table << c.rows[r] << '\t' << c.row_counts[r];
    for (double v : c.values[r]) table << '\t' << v;
    table << '\n';
  }
  std::cout << "correspondence: " << c.rows.size() << " gold labels x " << c.columns.size() << " columns\n";

  auto report = open_out(run.output("clusters.tsv"));
  report << "nonterminal\trank\tcount\tconstituent\n";
  std::size_t shown = 0;
  for (SymbolId col : c.columns) {
    if (col < 0 || shown == clusters) continue;
    ++shown;
    const auto list = cluster_report(tokens, pred, col, cluster_size);
    std::cout << "NT" << col << ":";
    for (std::size_t i = 0; i < list.size(); ++i) {
      report << "NT" << col << '\t' << i + 1 << '\t' << list[i].count << '\t' << list[i].constituent << '\n';
      std::cout << (i ? " | " : " ") << list[i].constituent;
    }
    std::cout << "\n";
  }
  run.write();
  std::cout << "run directory: " << run.directory().string() << "\n";
}

// ---- sample ---------------------------------------------------------------

struct SampleFlags {
  std::size_t n = 8, p = 16, q = 64, d = 16;
  std::uint64_t grammar_seed = 7;
  double sharpness = 4.0;
  double nonterminal_mass = 0.4;
  std::size_t count = 1000;
  std::size_t max_length = 30;
  std::uint64_t seed = 1;
  fs::path output;
  fs::path grammar_output;
};

void cmd_sample(const Common& common, const SampleFlags& f) {
  const TdPcfg g = synthetic_td_pcfg(f.n, f.p, f.q, f.d, f.grammar_seed, f.sharpness, f.nonterminal_mass);
  std::vector<std::string> names;
  for (std::size_t i = 0; i + 1 < f.q; ++i) names.push_back("w" + std::to_string(i));
  names.emplace_back(Vocabulary::kUnknown);

  RunManifest run("sample", common.runs);
  for (const auto& [k, v] : std::map<std::string, std::string>{{"n", std::to_string(f.n)},
                                                               {"p", std::to_string(f.p)},
                                                               {"q", std::to_string(f.q)},
                                                               {"d", std::to_string(f.d)},
                                                               {"grammar_seed", std::to_string(f.grammar_seed)},
                                                               {"sharpness", std::to_string(f.sharpness)},
                                                               {"nonterminal_mass", std::to_string(f.nonterminal_mass)},
                                                               {"count", std::to_string(f.count)},
                                                               {"max_length", std::to_string(f.max_length)},
                                                               {"seed", std::to_string(f.seed)}}) {
    run.set(k, v);
  }
  const SampledCorpus corpus = sample_corpus(g, f.count, f.max_length, f.seed);
  std::vector<TreeNode> trees;
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    trees.push_back(to_tree_node(corpus.trees[i], corpus.sentences[i], f.n, names));
  }
  fs::path target = f.output;
  if (target.empty()) {
    target = run.output("samples.mrg");
  } else {
    run.external_output(target);
  }
  write_treebank(target, trees);
  const std::vector<std::size_t> counts(f.q, 0);
  const Vocabulary vocab(names, counts);
  fs::path grammar_target = f.grammar_output;
  if (grammar_target.empty()) {
    grammar_target = run.output("grammar.ckpt");
  } else {
    run.external_output(grammar_target);
  }
  write_checkpoint(grammar_target, make_grammar_checkpoint(g, vocab, {{"generator", "synthetic"}}));
  run.write();
  std::cerr << "sampled " << corpus.sentences.size() << " sentences in " << corpus.attempts << " attempts\n";
  std::cout << target.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-decomposed neural PCFG induction"};
  app.set_version_flag("--version", std::string(TNPCFG_VERSION));
  app.require_subcommand(1);
  Common common;
  app.add_option("--runs", common.runs, "Root directory for run outputs")->capture_default_str();
  app.add_option("-j,--threads", common.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  ConfigFlags train_flags;
  auto* train = app.add_subcommand("train", "Train one model per seed with early stopping on dev perplexity");
  add_config_flags(train, train_flags);

  fs::path parse_ckpt, parse_input, parse_output;
  bool parse_treebank = false;
  auto* parse = app.add_subcommand("parse", "MBR-parse sentences into JSON Lines records");
  parse->add_option("checkpoint", parse_ckpt, "Model or grammar checkpoint")->required()->check(CLI::ExistingFile);
  parse->add_option("input", parse_input, "One tokenized sentence per line")->required()->check(CLI::ExistingFile);
  parse->add_flag("--treebank", parse_treebank, "Input is a bracketed treebank; parse its preprocessed words");
  parse->add_option("-o,--output", parse_output, "Output file (default: inside the run directory)");

  fs::path eval_gold, eval_pred;
  std::string eval_baseline, eval_tag = "-";
  std::uint64_t eval_seed = 0;
  bool eval_keep_punct = false;
  std::string eval_labels;
  auto* eval = app.add_subcommand("eval", "Sentence F1 and label recall against a gold treebank");
  eval->add_option("gold", eval_gold, "Gold treebank")->required()->check(CLI::ExistingFile);
  auto* pred_opt = eval->add_option("predictions", eval_pred, "Predictions from parse")->check(CLI::ExistingFile);
  auto* base_opt = eval->add_option("--baseline", eval_baseline, "left, right or random instead of predictions");
  pred_opt->excludes(base_opt);
  eval->add_option("--seed", eval_seed, "Seed for the random baseline");
  eval->add_option("--tag", eval_tag, "Value of the seed column in metrics.tsv");
  eval->add_option("--labels", eval_labels, "Comma-separated labels for the recall table (default NP,VP,PP,SBAR,ADJP,ADVP)");
  eval->add_flag("--keep-punctuation", eval_keep_punct, "Do not delete punctuation from the gold trees");

  ConfigFlags sweep_flags;
  std::string sweep_ps;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate across preterminal counts with n = p / 2");
  add_config_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--test", sweep_flags.test, "Treebank scored for F1 (default: the dev set)");
  sweep_cmd->add_option("--p", sweep_ps, "Comma-separated preterminal counts")->required();

  std::string bench_dense = "16,32,64", bench_factored = "64,128,256,512";
  std::size_t bench_length = 20, bench_reps = 5;
  std::uint64_t bench_seed = 0;
  auto* bench = app.add_subcommand("bench", "Time dense and factored inside passes and fit exponents in m");
  bench->add_option("--dense", bench_dense, "Sizes m for the dense path (empty to skip)")->capture_default_str();
  bench->add_option("--factored", bench_factored, "Sizes m = d for the factored path")->capture_default_str();
  bench->add_option("--length", bench_length, "Sentence length")->capture_default_str();
  bench->add_option("--reps", bench_reps, "Timed repetitions per size")->capture_default_str();
  bench->add_option("--seed", bench_seed, "Grammar and sentence seed")->capture_default_str();

  fs::path inspect_ckpt, inspect_treebank;
  std::size_t inspect_top_k = 30, inspect_top_labels = 7, inspect_clusters = 5, inspect_cluster_size = 10;
  auto* inspect = app.add_subcommand("inspect", "Label correspondence and constituent clusters of a model");
  inspect->add_option("checkpoint", inspect_ckpt, "Model or grammar checkpoint")->required()->check(CLI::ExistingFile);
  inspect->add_option("treebank", inspect_treebank, "Gold treebank")->required()->check(CLI::ExistingFile);
  inspect->add_option("--top-k", inspect_top_k, "Nonterminal columns before OTHER")->capture_default_str();
  inspect->add_option("--top-labels", inspect_top_labels, "Gold label rows before OTHER")->capture_default_str();
  inspect->add_option("--clusters", inspect_clusters, "Nonterminals to list clusters for")->capture_default_str();
  inspect->add_option("--cluster-size", inspect_cluster_size, "Constituents per cluster")->capture_default_str();

  SampleFlags sample_flags;
  auto* sample = app.add_subcommand("sample", "Write a treebank sampled from a synthetic grammar");
  sample->add_option("--n", sample_flags.n, "Nonterminals")->capture_default_str();
  sample->add_option("--p", sample_flags.p, "Preterminals")->capture_default_str();
  sample->add_option("--q", sample_flags.q, "Vocabulary size")->capture_default_str();
  sample->add_option("--d", sample_flags.d, "Rank")->capture_default_str();
  sample->add_option("--grammar-seed", sample_flags.grammar_seed, "Grammar seed")->capture_default_str();
  sample->add_option("--sharpness", sample_flags.sharpness, "Peakedness of rule weights")->capture_default_str();
  sample->add_option("--nonterminal-mass", sample_flags.nonterminal_mass, "Child mass on nonterminals")
      ->capture_default_str();
  sample->add_option("--count", sample_flags.count, "Sentences")->capture_default_str();
  sample->add_option("--max-length", sample_flags.max_length, "Longest sentence kept")->capture_default_str();
  sample->add_option("--seed", sample_flags.seed, "Sampling seed")->capture_default_str();
  sample->add_option("-o,--output", sample_flags.output, "Treebank path (default: inside the run directory)");
  sample->add_option("--grammar-output", sample_flags.grammar_output, "Grammar checkpoint path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) cmd_train(common, train_flags);
    if (*parse) cmd_parse(common, parse_ckpt, parse_input, parse_treebank, parse_output);
    if (*eval) {
      if (eval_pred.empty() && eval_baseline.empty()) throw std::invalid_argument("eval needs predictions or --baseline");
      cmd_eval(common, eval_gold, eval_pred, eval_baseline, eval_seed, eval_tag, !eval_keep_punct, eval_labels);
    }
    if (*sweep_cmd) cmd_sweep(common, sweep_flags, sweep_ps);
    if (*bench) cmd_bench(common, bench_dense, bench_factored, bench_length, bench_reps, bench_seed);
    if (*inspect) {
      cmd_inspect(common, inspect_ckpt, inspect_treebank, inspect_top_k, inspect_top_labels, inspect_clusters,
                  inspect_cluster_size);
    }
    if (*sample) cmd_sample(common, sample_flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
