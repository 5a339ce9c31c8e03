#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tnpcfg/corpus.hpp"
#include "tnpcfg/decoder.hpp"

namespace tnpcfg {

/// A gold tree reduced to what evaluation needs.
struct GoldTree {
  std::size_t length = 0;
  std::vector<GoldSpan> spans;
  std::vector<std::string> words;

  static GoldTree from(const TreeNode& tree);
};

/// Unlabeled sentence F1 in [0, 100] after removing single-word and
/// whole-sentence spans from both sides. Empty when the gold side has no
/// span left, in which case the sentence is left out of averages.
/// Throws std::invalid_argument when the lengths differ.
std::optional<double> sentence_f1(const GoldTree& gold, const ParseTree& pred);

struct CorpusF1 {
  double mean = 0.0;
  std::size_t scored = 0;
  std::size_t skipped = 0;
};

/// Mean of sentence_f1 over the scored sentences. Throws on misaligned corpora.
CorpusF1 corpus_f1(std::span<const GoldTree> gold, std::span<const ParseTree> pred);

inline const std::vector<std::string>& default_recall_labels() {
  static const std::vector<std::string> labels{"NP", "VP", "PP", "SBAR", "ADJP", "ADVP"};
  return labels;
}

struct LabelRecall {
  std::string label;
  /// Empty when the label never occurs on a nontrivial gold span.
  std::optional<double> recall;
  std::size_t gold_count = 0;
};

/// Percentage of nontrivial gold constituents of each label whose span the
/// prediction contains.
std::vector<LabelRecall> recall_by_label(std::span<const GoldTree> gold, std::span<const ParseTree> pred,
                                         std::span<const std::string> labels);

struct Correspondence {
  /// Gold labels by frequency, then "OTHER" when needed.
  std::vector<std::string> rows;
  /// Nonterminal ids by prediction frequency; -1 stands for OTHER.
  std::vector<SymbolId> columns;
  /// rows x columns proportions; each row sums to one.
  std::vector<std::vector<double>> values;
  std::vector<std::size_t> row_counts;
};

/// Distribution over predicted nonterminals for each gold label, restricted
/// to correctly predicted nontrivial spans. A span with several gold labels
/// (a unary chain) counts under its outermost one.
Correspondence label_correspondence(std::span<const GoldTree> gold, std::span<const ParseTree> pred,
                                    std::size_t top_k = 30, std::size_t top_labels = 7);

struct Cluster {
  std::string constituent;
  std::size_t count = 0;
};

/// Most frequent word sequences predicted under `nonterminal`, by count then text.
std::vector<Cluster> cluster_report(std::span<const std::vector<std::string>> sentences,
                                    std::span<const ParseTree> pred, SymbolId nonterminal, std::size_t top_n = 10);

double mean(std::span<const double> xs);
/// Population standard deviation (divisor N).
double biased_std(std::span<const double> xs);

ParseTree left_branching(std::size_t length);
ParseTree right_branching(std::size_t length);
/// Uniformly random split at every span.
ParseTree random_tree(std::size_t length, std::mt19937_64& rng);

struct Metric {
  std::string name;
  double value = 0.0;
  std::string seed;
};

/// One metric per row: name, value, seed separated by tabs.
void write_metrics(std::ostream& out, std::span<const Metric> metrics);

}  // namespace tnpcfg
