#include "tnpcfg/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace tnpcfg {

SymbolTable::SymbolTable(std::size_t n, std::size_t p, std::vector<std::string> words)
    : n_(n), p_(p), id_to_word_(std::move(words)) {
  for (std::size_t i = 0; i < id_to_word_.size(); ++i) {
    auto [it, inserted] = word_to_id_.emplace(id_to_word_[i], static_cast<WordId>(i));
    if (!inserted) throw StructuralError("duplicate word in symbol table: " + id_to_word_[i]);
  }
}

SymbolTable::SymbolTable(std::size_t n, std::size_t p, std::size_t q) : n_(n), p_(p) {
  id_to_word_.reserve(q);
  for (std::size_t i = 0; i < q; ++i) {
    id_to_word_.push_back("w" + std::to_string(i));
    word_to_id_.emplace(id_to_word_.back(), static_cast<WordId>(i));
  }
}

SymbolTable::Kind SymbolTable::kind(SymbolId s) const {
  if (is_nonterminal(s)) return Kind::kNonterminal;
  if (is_preterminal(s)) return Kind::kPreterminal;
  throw StructuralError("symbol id out of range: " + std::to_string(s));
}

std::size_t SymbolTable::local_index(SymbolId s) const {
  return kind(s) == Kind::kNonterminal ? static_cast<std::size_t>(s) : static_cast<std::size_t>(s) - n_;
}

SymbolId SymbolTable::symbol(Kind kind, std::size_t local) const {
  if (kind == Kind::kNonterminal) {
    if (local >= n_) throw StructuralError("nonterminal index out of range");
    return static_cast<SymbolId>(local);
  }
  if (local >= p_) throw StructuralError("preterminal index out of range");
  return static_cast<SymbolId>(n_ + local);
}

WordId SymbolTable::find(const std::string& word) const {
  auto it = word_to_id_.find(word);
  return it == word_to_id_.end() ? -1 : it->second;
}

double RuleTensor::slice_sum(std::size_t a) const {
  const double* s = slice(a);
  double total = 0.0;
  for (std::size_t i = 0; i < m_ * m_; ++i) total += s[i];
  return total;
}

const Violation* ValidationReport::find(const std::string& condition) const {
  for (const auto& v : violations) {
    if (v.condition == condition) return &v;
  }
  return nullptr;
}

std::string ValidationReport::to_string() const {
  if (violations.empty()) return "ok";
  std::ostringstream out;
  for (const auto& v : violations) out << v.condition << " (max deviation " << v.deviation << ")\n";
  return out.str();
}

namespace {

// Records the worst deviation for a condition, merging repeated hits.
void record(ValidationReport& report, const std::string& condition, double deviation, double tolerance) {
  if (!(deviation > tolerance) && std::isfinite(deviation)) return;
  for (auto& v : report.violations) {
    if (v.condition == condition) {
      v.deviation = std::max(v.deviation, deviation);
      return;
    }
  }
  report.violations.push_back({condition, deviation});
}

double most_negative(const Matrix& a) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double x = a.data()[i];
    if (!std::isfinite(x)) return INFINITY;
    worst = std::max(worst, -x);
  }
  return worst;
}

}  // namespace

ValidationReport validate_factored(const Matrix& U, const Matrix& V, const Matrix& W, double tolerance) {
  if (U.cols() == 0 || V.cols() != U.cols() || W.cols() != U.cols()) {
    throw StructuralError("factor matrices must share a positive rank");
  }
  if (V.rows() != W.rows() || V.rows() < U.rows()) {
    throw StructuralError("V and W must have m >= n rows");
  }
  ValidationReport report;
  record(report, "non-negativity", std::max({most_negative(U), most_negative(V), most_negative(W)}), tolerance);
  double row_dev = 0.0;
  for (Eigen::Index i = 0; i < U.rows(); ++i) row_dev = std::max(row_dev, std::abs(U.row(i).sum() - 1.0));
  record(report, "U row-normalization", row_dev, tolerance);
  double v_dev = 0.0;
  double w_dev = 0.0;
  for (Eigen::Index l = 0; l < V.cols(); ++l) {
    v_dev = std::max(v_dev, std::abs(V.col(l).sum() - 1.0));
    w_dev = std::max(w_dev, std::abs(W.col(l).sum() - 1.0));
  }
  record(report, "V column-normalization", v_dev, tolerance);
  record(report, "W column-normalization", w_dev, tolerance);
  return report;
}

ValidationReport validate_distributions(const Matrix& emission, const Vector& start, double tolerance) {
  ValidationReport report;
  Matrix start_row = start.transpose();
  record(report, "non-negativity", std::max(most_negative(emission), most_negative(start_row)), tolerance);
  double q_dev = 0.0;
  for (Eigen::Index i = 0; i < emission.rows(); ++i) q_dev = std::max(q_dev, std::abs(emission.row(i).sum() - 1.0));
  record(report, "Q row-normalization", q_dev, tolerance);
  record(report, "r normalization", std::abs(start.sum() - 1.0), tolerance);
  return report;
}

ValidationReport validate_dense(const DensePcfg& g, double tolerance) {
  if (g.start.size() != static_cast<Eigen::Index>(g.n()) ||
      g.emission.rows() != static_cast<Eigen::Index>(g.p())) {
    throw StructuralError("dense grammar parts disagree on n or p");
  }
  ValidationReport report = validate_distributions(g.emission, g.start, tolerance);
  double negative = 0.0;
  double slice_dev = 0.0;
  for (std::size_t a = 0; a < g.n(); ++a) {
    const double* s = g.rules.slice(a);
    for (std::size_t i = 0; i < g.m() * g.m(); ++i) negative = std::max(negative, -s[i]);
    slice_dev = std::max(slice_dev, std::abs(g.rules.slice_sum(a) - 1.0));
  }
  record(report, "non-negativity", negative, tolerance);
  record(report, "T slice-normalization", slice_dev, tolerance);
  return report;
}

DensePcfg reconstruct_tensor(const TdPcfg& g) {
  const std::size_t n = g.n();
  const std::size_t m = g.m();
  const std::size_t d = g.rank();
  if (d == 0) throw StructuralError("rank-0 factors");
  if (g.V.cols() != g.U.cols() || g.W.cols() != g.U.cols() || g.W.rows() != g.V.rows() || m < n) {
    throw StructuralError("factor dimensions disagree");
  }
  DensePcfg dense{RuleTensor(n, m), g.emission, g.start};
  std::vector<double> vw(m * m);
  for (std::size_t l = 0; l < d; ++l) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < m; ++k) vw[j * m + k] = g.V(j, l) * g.W(k, l);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double u = g.U(i, l);
      if (u == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < m; ++k) dense.rules(i, j, k) += u * vw[j * m + k];
      }
    }
  }
  return dense;
}

namespace {

Matrix positive_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = 1.0 - unit(rng);  // (0, 1]
  return a;
}

void normalize_rows(Matrix& a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i) /= a.row(i).sum();
}

void normalize_cols(Matrix& a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j) a.col(j) /= a.col(j).sum();
}

}  // namespace

TdPcfg random_td_pcfg(std::size_t n, std::size_t p, std::size_t q, std::size_t d, std::uint64_t seed) {
  if (n == 0 || p == 0 || q == 0 || d == 0) throw StructuralError("grammar sizes must be positive");
  std::mt19937_64 rng(seed);
  TdPcfg g;
  g.U = positive_matrix(n, d, rng);
  g.V = positive_matrix(n + p, d, rng);
  g.W = positive_matrix(n + p, d, rng);
  g.emission = positive_matrix(p, q, rng);
  Matrix start = positive_matrix(1, n, rng);
  normalize_rows(g.U);
  normalize_cols(g.V);
  normalize_cols(g.W);
  normalize_rows(g.emission);
  normalize_rows(start);
  g.start = start.row(0).transpose();
  return g;
}

DensePcfg random_dense_pcfg(std::size_t n, std::size_t p, std::size_t q, std::uint64_t seed) {
  if (n == 0 || p == 0 || q == 0) throw StructuralError("grammar sizes must be positive");
  const std::size_t m = n + p;
  std::mt19937_64 rng(seed);
  Matrix rules = positive_matrix(n, m * m, rng);
  normalize_rows(rules);
  DensePcfg g{RuleTensor(n, m), positive_matrix(p, q, rng), Vector()};
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      for (std::size_t c = 0; c < m; ++c) g.rules(a, b, c) = rules(a, b * m + c);
    }
  }
  normalize_rows(g.emission);
  Matrix start = positive_matrix(1, n, rng);
  normalize_rows(start);
  g.start = start.row(0).transpose();
  return g;
}

namespace {

void peaked_block(Matrix& m, Eigen::Index r0, Eigen::Index c0, Eigen::Index rows, Eigen::Index cols, double sharpness,
                  std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(r0 + i, c0 + j) = std::exp(sharpness * z(rng));
  }
}

}  // namespace

TdPcfg synthetic_td_pcfg(std::size_t n, std::size_t p, std::size_t q, std::size_t d, std::uint64_t seed,
                         double sharpness, double nonterminal_mass) {
  if (n == 0 || p == 0 || q == 0 || d == 0) throw StructuralError("grammar sizes must be positive");
  if (q < p) throw StructuralError("synthetic grammars need at least one word per preterminal");
  if (!(nonterminal_mass > 0.0 && nonterminal_mass < 1.0)) throw StructuralError("nonterminal mass must lie in (0, 1)");
  const auto ni = static_cast<Eigen::Index>(n);
  const auto pi = static_cast<Eigen::Index>(p);
  const auto di = static_cast<Eigen::Index>(d);
  std::mt19937_64 rng(seed);
  TdPcfg g;
  g.U = Matrix(ni, di);
  peaked_block(g.U, 0, 0, ni, di, sharpness, rng);
  normalize_rows(g.U);
  for (Matrix* f : {&g.V, &g.W}) {
    *f = Matrix(ni + pi, di);
    peaked_block(*f, 0, 0, ni, di, sharpness, rng);
    peaked_block(*f, ni, 0, pi, di, sharpness, rng);
    for (Eigen::Index l = 0; l < di; ++l) {
      f->col(l).head(ni) *= nonterminal_mass / f->col(l).head(ni).sum();
      f->col(l).tail(pi) *= (1.0 - nonterminal_mass) / f->col(l).tail(pi).sum();
    }
  }
  g.emission = Matrix::Zero(pi, static_cast<Eigen::Index>(q));
  const std::size_t block = q / p;
  for (std::size_t t = 0; t < p; ++t) {
    const std::size_t end = t + 1 == p ? q : (t + 1) * block;
    peaked_block(g.emission, static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t * block), 1,
                 static_cast<Eigen::Index>(end - t * block), 1.0, rng);
  }
  normalize_rows(g.emission);
  Matrix start(1, ni);
  peaked_block(start, 0, 0, 1, ni, sharpness, rng);
  normalize_rows(start);
  g.start = start.row(0).transpose();
  return g;
}

}  // namespace tnpcfg
