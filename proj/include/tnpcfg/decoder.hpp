#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tnpcfg/grammar.hpp"
#include "tnpcfg/inside.hpp"

namespace tnpcfg {

/// Inclusive word span with an optional symbol label (-1 when unlabeled).
struct LabeledSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  SymbolId label = -1;

  friend bool operator==(const LabeledSpan&, const LabeledSpan&) = default;
  friend auto operator<=>(const LabeledSpan&, const LabeledSpan&) = default;
};

/// A binary bracketing over `length` leaves. `spans` holds the internal
/// spans (width >= 2) in pre-order; `tags` optionally holds one preterminal
/// per leaf for fully labeled derivations.
struct ParseTree {
  std::size_t length = 0;
  std::vector<LabeledSpan> spans;
  std::vector<SymbolId> tags;

  /// Empty when the spans form a valid binary bracketing with exactly
  /// length - 1 internal spans including the full span; otherwise a reason.
  std::string structure_error() const;
  bool is_valid() const { return structure_error().empty(); }
  /// Bracket string such as "((0 1) 2)".
  std::string bracketing() const;
};

/// Span posteriors p(w_ij | w) for every span of width >= 2.
class SpanPosteriors {
 public:
  explicit SpanPosteriors(std::size_t length = 0);

  std::size_t length() const { return length_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * length_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * length_ + j]; }
  /// Sum over spans of width >= 2; equals length - 1 for a proper posterior.
  double total() const;

 private:
  std::size_t length_ = 0;
  std::vector<double> data_;
};

/// Posterior of every span via d log p(w) / d gate, with one multiplicative
/// gate per completed inside vector. Throws std::domain_error when p(w) = 0.
SpanPosteriors span_posteriors(const TdPcfg& g, std::span<const WordId> sentence);

/// Per-span symbol posteriors p(span, A | w): rows indexed like Chart spans
/// of width >= 2, n columns.
struct SymbolPosteriors {
  std::size_t length = 0;
  std::size_t n = 0;
  /// Indexed [width][start * n + symbol].
  std::vector<std::vector<double>> values;

  double operator()(std::size_t i, std::size_t j, std::size_t symbol) const {
    return values[j - i + 1][i * n + symbol];
  }
};

SymbolPosteriors symbol_posteriors(const TdPcfg& g, std::span<const WordId> sentence);

/// Tree maximizing the summed posterior of its spans, with the smallest
/// split point winning ties.
ParseTree mbr_parse(const SpanPosteriors& post);
/// Summed posterior of a tree's internal spans.
double mbr_objective(const SpanPosteriors& post, const ParseTree& tree);

/// Labels each internal span with its most probable nonterminal (smallest id on ties).
ParseTree label_spans(const TdPcfg& g, std::span<const WordId> sentence, const ParseTree& tree);

struct ViterbiResult {
  /// Empty when the sentence has no parse.
  std::optional<ParseTree> tree;
  double log_score = kNegInf;
};

/// Exact most probable labeled derivation over the explicit rule tensor.
ViterbiResult cyk_viterbi_dense(const DensePcfg& g, std::span<const WordId> sentence);

struct ScoredTree {
  ParseTree tree;
  double probability = 0.0;
};

inline constexpr std::size_t kMaxEnumerationLength = 10;

/// Every labeled derivation with nonzero probability. Refuses sentences
/// longer than kMaxEnumerationLength and more than `max_trees` results.
std::vector<ScoredTree> enumerate_trees(const DensePcfg& g, std::span<const WordId> sentence,
                                        std::size_t max_trees = 5'000'000);

/// All unlabeled binary bracketings of `length` leaves (Catalan many).
std::vector<ParseTree> enumerate_bracketings(std::size_t length);

/// Trivial tree for sentences too short to parse: no internal spans.
ParseTree trivial_tree(std::size_t length);

}  // namespace tnpcfg
