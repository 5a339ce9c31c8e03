#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tnpcfg/autodiff.hpp"
#include "tnpcfg/grammar.hpp"

namespace tnpcfg {

using Sentence = std::vector<WordId>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Per-span inside vectors for one sentence.
///
/// Each cell stores a scaled vector whose largest entry is 1 together with a
/// log-scale exponent: the true inside vector is scaled * exp(log_scale).
/// Cells of width one carry emission probabilities on preterminal
/// coordinates; wider cells are nonzero only on nonterminal coordinates.
/// The factored path also keeps the projections V^T s and W^T s, scaled by
/// the same exponent.
class Chart {
 public:
  Chart() = default;
  Chart(std::size_t length, std::size_t symbols, std::size_t rank);

  std::size_t length() const { return length_; }
  std::size_t symbols() const { return symbols_; }
  std::size_t rank() const { return rank_; }
  std::size_t span_count() const { return log_scale_.size(); }

  /// Cell index for the span covering words i..j inclusive.
  std::size_t index(std::size_t i, std::size_t j) const;

  std::span<double> scaled(std::size_t i, std::size_t j);
  std::span<const double> scaled(std::size_t i, std::size_t j) const;
  double& log_scale(std::size_t i, std::size_t j) { return log_scale_[index(i, j)]; }
  double log_scale(std::size_t i, std::size_t j) const { return log_scale_[index(i, j)]; }
  std::span<double> left_projection(std::size_t i, std::size_t j);
  std::span<const double> left_projection(std::size_t i, std::size_t j) const;
  std::span<double> right_projection(std::size_t i, std::size_t j);
  std::span<const double> right_projection(std::size_t i, std::size_t j) const;

  /// log of the unscaled inside probability of `symbol` over i..j.
  double log_inside(std::size_t i, std::size_t j, std::size_t symbol) const;

 private:
  std::size_t length_ = 0;
  std::size_t symbols_ = 0;
  std::size_t rank_ = 0;
  std::vector<double> scaled_;
  std::vector<double> log_scale_;
  std::vector<double> left_;
  std::vector<double> right_;
};

struct InsideResult {
  /// kNegInf when the sentence has probability zero.
  double log_likelihood = kNegInf;
  Chart chart;
  /// Non-empty when the sentence cannot be derived or has zero probability.
  std::string diagnostic;
};

/// Reference O(m^3 l^3) recursion over the explicit rule tensor.
InsideResult inside_dense(const DensePcfg& g, std::span<const WordId> sentence);

/// O(d l^3 + m d l^2) recursion over the Kruskal factors.
InsideResult inside_factored(const TdPcfg& g, std::span<const WordId> sentence);

/// inside_factored per sentence, order preserved. `threads` > 1 splits the
/// batch across worker threads; results are identical for any thread count.
std::vector<double> batch_log_likelihood(const TdPcfg& g, std::span<const Sentence> batch, std::size_t threads = 1);

/// Grammar arrays recorded on a tape: U (n x d), V and W (m x d), the
/// transposed emission matrix (q x p) and the start row (1 x n).
struct GrammarVars {
  ad::Var U;
  ad::Var V;
  ad::Var W;
  ad::Var emission_t;
  ad::Var start;
  std::size_t n = 0;
  std::size_t p = 0;
};

/// Records a fixed TdPcfg as constant tape leaves.
template <typename Real>
GrammarVars grammar_constants(ad::Tape<Real>& tape, const TdPcfg& g);

enum class GateMode {
  kNone,
  /// One scalar gate per span of width >= 2 (rows x 1 per width).
  kSpan,
  /// One gate per span and nonterminal (rows x n per width).
  kSymbol,
};

struct TapeInside {
  ad::Var log_likelihood;
  /// Indexed by span width; entry w covers spans (i, i + w - 1), row i.
  /// Empty for widths 0 and 1 and when gating is off.
  std::vector<ad::Var> gates;
  double log_likelihood_value = kNegInf;
};

/// The factored recursion recorded on a tape so log p(w) is differentiable
/// with respect to every grammar array. Per-span rescaling constants are
/// recorded as constants; log p(w) is invariant to them, so gradients are
/// exact.
template <typename Real>
TapeInside inside_on_tape(ad::Tape<Real>& tape, const GrammarVars& g, std::span<const WordId> sentence,
                          GateMode gates = GateMode::kNone);

}  // namespace tnpcfg
