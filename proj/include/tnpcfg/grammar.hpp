#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace tnpcfg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using SymbolId = std::int32_t;
using WordId = std::int32_t;

/// Thrown for shape/structure violations that make a value unusable.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Index layout shared by every grammar representation.
///
/// Nonterminals occupy [0, n), preterminals occupy [n, m) with m = n + p.
/// Terminals have their own dense id space [0, q). The start symbol is
/// implicit and never indexed.
class SymbolTable {
 public:
  enum class Kind { kNonterminal, kPreterminal };

  SymbolTable() = default;
  SymbolTable(std::size_t n, std::size_t p, std::vector<std::string> words);
  SymbolTable(std::size_t n, std::size_t p, std::size_t q);

  std::size_t n() const { return n_; }
  std::size_t p() const { return p_; }
  std::size_t m() const { return n_ + p_; }
  std::size_t q() const { return id_to_word_.size(); }

  Kind kind(SymbolId s) const;
  bool is_nonterminal(SymbolId s) const { return s >= 0 && static_cast<std::size_t>(s) < n_; }
  bool is_preterminal(SymbolId s) const {
    return static_cast<std::size_t>(s) >= n_ && static_cast<std::size_t>(s) < m();
  }
  /// Position within its own class: [0,n) for nonterminals, [0,p) for preterminals.
  std::size_t local_index(SymbolId s) const;
  SymbolId symbol(Kind kind, std::size_t local) const;

  const std::string& word(WordId id) const { return id_to_word_.at(static_cast<std::size_t>(id)); }
  /// Returns -1 for out-of-vocabulary words.
  WordId find(const std::string& word) const;

 private:
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  std::unordered_map<std::string, WordId> word_to_id_;
  std::vector<std::string> id_to_word_;
};

/// Order-3 binary-rule tensor T[A, B, C] stored flat, A in [0,n), B, C in [0,m).
class RuleTensor {
 public:
  RuleTensor() = default;
  RuleTensor(std::size_t n, std::size_t m) : n_(n), m_(m), data_(n * m * m, 0.0) {}

  std::size_t n() const { return n_; }
  std::size_t m() const { return m_; }

  double& operator()(std::size_t a, std::size_t b, std::size_t c) { return data_[(a * m_ + b) * m_ + c]; }
  double operator()(std::size_t a, std::size_t b, std::size_t c) const { return data_[(a * m_ + b) * m_ + c]; }

  /// Contiguous m*m slice for left-hand side a.
  const double* slice(std::size_t a) const { return data_.data() + a * m_ * m_; }
  double slice_sum(std::size_t a) const;

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<double> data_;
};

/// A PCFG with an explicit rule tensor.
struct DensePcfg {
  RuleTensor rules;  // n x m x m
  Matrix emission;   // p x q
  Vector start;      // n

  std::size_t n() const { return rules.n(); }
  std::size_t m() const { return rules.m(); }
  std::size_t p() const { return m() - n(); }
  std::size_t q() const { return static_cast<std::size_t>(emission.cols()); }
};

/// A PCFG whose rule tensor is given only through its Kruskal factors
/// T = sum_l U[:,l] (x) V[:,l] (x) W[:,l].
struct TdPcfg {
  Matrix U;         // n x d
  Matrix V;         // m x d
  Matrix W;         // m x d
  Matrix emission;  // p x q
  Vector start;     // n

  std::size_t n() const { return static_cast<std::size_t>(U.rows()); }
  std::size_t m() const { return static_cast<std::size_t>(V.rows()); }
  std::size_t p() const { return m() - n(); }
  std::size_t q() const { return static_cast<std::size_t>(emission.cols()); }
  std::size_t rank() const { return static_cast<std::size_t>(U.cols()); }
};

struct Violation {
  std::string condition;
  double deviation = 0.0;
};

/// Lists every violated precondition of the Kruskal normalization result.
/// Empty means the factors are valid.
struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  const Violation* find(const std::string& condition) const;
  std::string to_string() const;
};

inline constexpr double kFactorTolerance = 1e-6;
inline constexpr double kDenseTolerance = 1e-9;

/// Checks non-negativity, U row-normalization and V/W column-normalization.
/// Throws StructuralError only on shape mismatch.
ValidationReport validate_factored(const Matrix& U, const Matrix& V, const Matrix& W,
                                   double tolerance = kFactorTolerance);
inline ValidationReport validate_factored(const TdPcfg& g, double tolerance = kFactorTolerance) {
  return validate_factored(g.U, g.V, g.W, tolerance);
}

/// Checks that Q rows and r are non-negative distributions.
ValidationReport validate_distributions(const Matrix& emission, const Vector& start,
                                        double tolerance = kFactorTolerance);

/// Checks every DensePcfg invariant.
ValidationReport validate_dense(const DensePcfg& g, double tolerance = kDenseTolerance);

/// T[i,j,k] = sum_l U[i,l] V[j,l] W[k,l]; Q and r are copied.
DensePcfg reconstruct_tensor(const TdPcfg& g);

/// Deterministic random grammar: positive entries, then U rows, V/W columns,
/// Q rows and r normalized.
TdPcfg random_td_pcfg(std::size_t n, std::size_t p, std::size_t q, std::size_t d, std::uint64_t seed);

/// Deterministic random dense grammar with normalized slices.
DensePcfg random_dense_pcfg(std::size_t n, std::size_t p, std::size_t q, std::uint64_t seed);

/// Peaked grammar for synthetic corpora. Weights are exp(sharpness * z) with
/// z standard normal. Every V/W column gives total mass `nonterminal_mass`
/// to nonterminals, which keeps the expected sentence length finite for
/// masses below 0.5. Preterminal t emits only words in its own block of
/// q / p ids, so tags are recoverable from words. Requires q >= p.
TdPcfg synthetic_td_pcfg(std::size_t n, std::size_t p, std::size_t q, std::size_t d, std::uint64_t seed,
                         double sharpness = 2.0, double nonterminal_mass = 0.35);

}  // namespace tnpcfg
