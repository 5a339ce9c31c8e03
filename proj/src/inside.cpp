#include "tnpcfg/inside.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

namespace tnpcfg {

Chart::Chart(std::size_t length, std::size_t symbols, std::size_t rank)
    : length_(length), symbols_(symbols), rank_(rank) {
  const std::size_t spans = length * (length + 1) / 2;
  scaled_.assign(spans * symbols, 0.0);
  log_scale_.assign(spans, kNegInf);
  left_.assign(spans * rank, 0.0);
  right_.assign(spans * rank, 0.0);
}

std::size_t Chart::index(std::size_t i, std::size_t j) const {
  if (i > j || j >= length_) throw StructuralError("span out of range");
  const std::size_t w = j - i + 1;
  return (w - 1) * length_ - (w - 1) * (w - 2) / 2 + i;
}

std::span<double> Chart::scaled(std::size_t i, std::size_t j) {
  return {scaled_.data() + index(i, j) * symbols_, symbols_};
}
std::span<const double> Chart::scaled(std::size_t i, std::size_t j) const {
  return {scaled_.data() + index(i, j) * symbols_, symbols_};
}
std::span<double> Chart::left_projection(std::size_t i, std::size_t j) {
  return {left_.data() + index(i, j) * rank_, rank_};
}
std::span<const double> Chart::left_projection(std::size_t i, std::size_t j) const {
  return {left_.data() + index(i, j) * rank_, rank_};
}
std::span<double> Chart::right_projection(std::size_t i, std::size_t j) {
  return {right_.data() + index(i, j) * rank_, rank_};
}
std::span<const double> Chart::right_projection(std::size_t i, std::size_t j) const {
  return {right_.data() + index(i, j) * rank_, rank_};
}

double Chart::log_inside(std::size_t i, std::size_t j, std::size_t symbol) const {
  const double v = scaled(i, j)[symbol];
  return v > 0.0 ? std::log(v) + log_scale(i, j) : kNegInf;
}

namespace {

void check_sentence(std::span<const WordId> sentence, std::size_t q) {
  for (WordId w : sentence) {
    if (w < 0 || static_cast<std::size_t>(w) >= q) {
      throw StructuralError("word id " + std::to_string(w) + " outside vocabulary of size " + std::to_string(q));
    }
  }
}

// Divides `cell` by its largest entry and returns log of that entry
// (kNegInf for an all-zero cell, which is left untouched).
double normalize_cell(std::span<double> cell) {
  double z = 0.0;
  for (double v : cell) z = std::max(z, v);
  if (!(z > 0.0)) return kNegInf;
  for (double& v : cell) v /= z;
  return std::log(z);
}

// Largest combined exponent over the splits of (i, j); kNegInf when every
// split has a zero side.
double split_exponent(const Chart& chart, std::size_t i, std::size_t j) {
  double best = kNegInf;
  for (std::size_t k = i; k < j; ++k) {
    best = std::max(best, chart.log_scale(i, k) + chart.log_scale(k + 1, j));
  }
  return best;
}

double split_factor(const Chart& chart, std::size_t i, std::size_t k, std::size_t j, double exponent) {
  const double e = chart.log_scale(i, k) + chart.log_scale(k + 1, j);
  return std::isfinite(e) ? std::exp(e - exponent) : 0.0;
}

void fill_base(Chart& chart, const Matrix& emission, std::size_t n, std::span<const WordId> sentence) {
  const std::size_t p = static_cast<std::size_t>(emission.rows());
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    auto cell = chart.scaled(i, i);
    for (std::size_t t = 0; t < p; ++t) cell[n + t] = emission(static_cast<Eigen::Index>(t), sentence[i]);
    chart.log_scale(i, i) = normalize_cell(cell);
  }
}

InsideResult finish(Chart chart, const Vector& start) {
  InsideResult result;
  const std::size_t l = chart.length();
  auto root = chart.scaled(0, l - 1);
  double total = 0.0;
  for (Eigen::Index a = 0; a < start.size(); ++a) total += start(a) * root[static_cast<std::size_t>(a)];
  const double c = chart.log_scale(0, l - 1);
  if (total > 0.0 && std::isfinite(c)) {
    result.log_likelihood = c + std::log(total);
  } else {
    result.diagnostic = "sentence has zero probability under the grammar";
  }
  result.chart = std::move(chart);
  return result;
}

InsideResult underivable(std::size_t length) {
  InsideResult result;
  result.diagnostic = "sentence of length " + std::to_string(length) +
                      " cannot be derived: every derivation yields at least two words";
  return result;
}

}  // namespace

InsideResult inside_dense(const DensePcfg& g, std::span<const WordId> sentence) {
  check_sentence(sentence, g.q());
  const std::size_t l = sentence.size();
  if (l < 2) return underivable(l);
  const std::size_t n = g.n();
  const std::size_t m = g.m();
  Chart chart(l, m, 0);
  fill_base(chart, g.emission, n, sentence);

  std::vector<double> ty(n * m);
  for (std::size_t w = 2; w <= l; ++w) {
    for (std::size_t i = 0; i + w <= l; ++i) {
      const std::size_t j = i + w - 1;
      const double exponent = split_exponent(chart, i, j);
      auto out = chart.scaled(i, j);
      if (!std::isfinite(exponent)) continue;
      for (std::size_t k = i; k < j; ++k) {
        const double f = split_factor(chart, i, k, j, exponent);
        if (f == 0.0) continue;
        auto x = chart.scaled(i, k);
        auto y = chart.scaled(k + 1, j);
        // ty[A, B] = sum_C T[A, B, C] y[C]; then out[A] += f * sum_B ty[A, B] x[B].
        for (std::size_t a = 0; a < n; ++a) {
          const double* slice = g.rules.slice(a);
          double acc = 0.0;
          for (std::size_t b = 0; b < m; ++b) {
            const double* row = slice + b * m;
            double t = 0.0;
            for (std::size_t c = 0; c < m; ++c) t += row[c] * y[c];
            acc += t * x[b];
          }
          out[a] += f * acc;
        }
      }
      const double z = normalize_cell(out);
      chart.log_scale(i, j) = std::isfinite(z) ? exponent + z : kNegInf;
    }
  }
  return finish(std::move(chart), g.start);
}

InsideResult inside_factored(const TdPcfg& g, std::span<const WordId> sentence) {
  check_sentence(sentence, g.q());
  const std::size_t l = sentence.size();
  if (l < 2) return underivable(l);
  const std::size_t n = g.n();
  const std::size_t p = g.p();
  const std::size_t m = g.m();
  const std::size_t d = g.rank();
  const auto ni = static_cast<Eigen::Index>(n);
  const auto pi = static_cast<Eigen::Index>(p);
  Chart chart(l, m, d);
  fill_base(chart, g.emission, n, sentence);

  // Per-width projection blocks: row i of left[w] is V^T s~(i, i+w-1).
  std::vector<Matrix> left(l + 1);
  std::vector<Matrix> right(l + 1);
  {
    Matrix base(static_cast<Eigen::Index>(l), pi);
    for (std::size_t i = 0; i < l; ++i) {
      auto cell = chart.scaled(i, i);
      for (std::size_t t = 0; t < p; ++t) base(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = cell[n + t];
    }
    left[1].noalias() = base * g.V.bottomRows(pi);
    right[1].noalias() = base * g.W.bottomRows(pi);
  }

  Matrix acc;
  Matrix cells;
  std::vector<double> exponent;
  for (std::size_t w = 2; w <= l; ++w) {
    const std::size_t rows = l - w + 1;
    const auto ri = static_cast<Eigen::Index>(rows);
    exponent.assign(rows, kNegInf);
    for (std::size_t i = 0; i < rows; ++i) exponent[i] = split_exponent(chart, i, i + w - 1);

    acc.setZero(ri, static_cast<Eigen::Index>(d));
    for (std::size_t a = 0; a + 1 < w; ++a) {
      const Matrix& lp = left[a + 1];
      const Matrix& rp = right[w - 1 - a];
      for (std::size_t i = 0; i < rows; ++i) {
        if (!std::isfinite(exponent[i])) continue;
        const double f = split_factor(chart, i, i + a, i + w - 1, exponent[i]);
        if (f == 0.0) continue;
        const auto r = static_cast<Eigen::Index>(i);
        acc.row(r).array() += f * lp.row(r).array() * rp.row(r + static_cast<Eigen::Index>(a) + 1).array();
      }
    }
    cells.noalias() = acc * g.U.transpose();  // rows x n
    for (std::size_t i = 0; i < rows; ++i) {
      auto cell = chart.scaled(i, i + w - 1);
      for (std::size_t s = 0; s < n; ++s) cell[s] = cells(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s));
      const double z = normalize_cell(cell);
      chart.log_scale(i, i + w - 1) = std::isfinite(z) && std::isfinite(exponent[i]) ? exponent[i] + z : kNegInf;
      for (std::size_t s = 0; s < n; ++s) cells(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = cell[s];
    }
    left[w].noalias() = cells * g.V.topRows(ni);
    right[w].noalias() = cells * g.W.topRows(ni);
  }

  for (std::size_t w = 1; w <= l; ++w) {
    for (std::size_t i = 0; i + w <= l; ++i) {
      auto lp = chart.left_projection(i, i + w - 1);
      auto rp = chart.right_projection(i, i + w - 1);
      for (std::size_t c = 0; c < d; ++c) {
        lp[c] = left[w](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
        rp[c] = right[w](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      }
    }
  }
  return finish(std::move(chart), g.start);
}

std::vector<double> batch_log_likelihood(const TdPcfg& g, std::span<const Sentence> batch, std::size_t threads) {
  if (batch.empty()) throw StructuralError("batch must not be empty");
  std::vector<double> out(batch.size(), kNegInf);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t s = begin; s < batch.size(); s += stride) out[s] = inside_factored(g, batch[s]).log_likelihood;
  };
  threads = std::clamp<std::size_t>(threads, 1, batch.size());
  if (threads == 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

template <typename Real>
GrammarVars grammar_constants(ad::Tape<Real>& tape, const TdPcfg& g) {
  auto to_array = [](const Matrix& a) {
    ad::Array<Real> out(static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(a.cols()));
    for (Eigen::Index i = 0; i < a.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<Real>(a.data()[i]);
    return out;
  };
  GrammarVars vars;
  vars.U = tape.constant(to_array(g.U));
  vars.V = tape.constant(to_array(g.V));
  vars.W = tape.constant(to_array(g.W));
  vars.emission_t = tape.constant(to_array(g.emission.transpose()));
  vars.start = tape.constant(to_array(g.start.transpose()));
  vars.n = g.n();
  vars.p = g.p();
  return vars;
}

template <typename Real>
TapeInside inside_on_tape(ad::Tape<Real>& tape, const GrammarVars& g, std::span<const WordId> sentence,
                          GateMode gates) {
  using ad::Array;
  using ad::Var;
  const std::size_t l = sentence.size();
  const std::size_t n = g.n;
  const std::size_t q = tape.value(g.emission_t).rows();
  check_sentence(sentence, q);
  if (l < 2) throw StructuralError(underivable(l).diagnostic);

  std::vector<std::size_t> nt_rows(n);
  std::iota(nt_rows.begin(), nt_rows.end(), 0);
  std::vector<std::size_t> pt_rows(g.p);
  std::iota(pt_rows.begin(), pt_rows.end(), n);
  const Var v_nt = ad::gather_rows(tape, g.V, std::span<const std::size_t>(nt_rows));
  const Var w_nt = ad::gather_rows(tape, g.W, std::span<const std::size_t>(nt_rows));
  const Var v_pt = ad::gather_rows(tape, g.V, std::span<const std::size_t>(pt_rows));
  const Var w_pt = ad::gather_rows(tape, g.W, std::span<const std::size_t>(pt_rows));

  // Scaled cell values and exponents per width, row i = span start.
  std::vector<std::vector<double>> exponent(l + 1);
  std::vector<Var> left(l + 1);
  std::vector<Var> right(l + 1);
  TapeInside result;
  result.gates.resize(l + 1);

  // Rescales every row of `cells` to max 1 and returns the scaled node.
  auto rescale = [&](Var cells, std::vector<double>& exps, const std::vector<double>& base) {
    const auto& v = tape.value(cells);
    Array<Real> inv(v.rows(), 1);
    for (std::size_t r = 0; r < v.rows(); ++r) {
      double z = 0.0;
      for (std::size_t c = 0; c < v.cols(); ++c) z = std::max(z, static_cast<double>(v(r, c)));
      if (z > 0.0 && std::isfinite(base[r])) {
        inv[r] = static_cast<Real>(1.0 / z);
        exps[r] = base[r] + std::log(z);
      } else {
        inv[r] = Real(1);
        exps[r] = kNegInf;
      }
    }
    return ad::scale_rows(tape, cells, tape.constant(std::move(inv)));
  };

  std::vector<std::size_t> words(sentence.begin(), sentence.end());
  Var base = ad::gather_rows(tape, g.emission_t, std::span<const std::size_t>(words));  // l x p
  exponent[1].assign(l, kNegInf);
  base = rescale(base, exponent[1], std::vector<double>(l, 0.0));
  left[1] = ad::matmul(tape, base, v_pt);
  right[1] = ad::matmul(tape, base, w_pt);

  Var top = base;
  for (std::size_t w = 2; w <= l; ++w) {
    const std::size_t rows = l - w + 1;
    std::vector<double> split_max(rows, kNegInf);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t a = 0; a + 1 < w; ++a) {
        split_max[i] = std::max(split_max[i], exponent[a + 1][i] + exponent[w - 1 - a][i + a + 1]);
      }
    }
    std::vector<std::size_t> left_rows(rows);
    std::iota(left_rows.begin(), left_rows.end(), 0);
    Var acc{};
    bool have_acc = false;
    for (std::size_t a = 0; a + 1 < w; ++a) {
      std::vector<std::size_t> right_rows(rows);
      std::iota(right_rows.begin(), right_rows.end(), a + 1);
      Array<Real> factor(rows, 1);
      for (std::size_t i = 0; i < rows; ++i) {
        const double e = exponent[a + 1][i] + exponent[w - 1 - a][i + a + 1];
        factor[i] = std::isfinite(e) && std::isfinite(split_max[i]) ? static_cast<Real>(std::exp(e - split_max[i])) : Real(0);
      }
      Var lhs = ad::gather_rows(tape, left[a + 1], std::span<const std::size_t>(left_rows));
      Var rhs = ad::gather_rows(tape, right[w - 1 - a], std::span<const std::size_t>(right_rows));
      Var term = ad::scale_rows(tape, ad::hadamard(tape, lhs, rhs), tape.constant(std::move(factor)));
      acc = have_acc ? ad::add(tape, acc, term) : term;
      have_acc = true;
    }
    Var cells = ad::matmul(tape, acc, g.U, ad::Trans::kNo, ad::Trans::kYes);  // rows x n
    if (gates == GateMode::kSpan) {
      result.gates[w] = tape.variable(Array<Real>(rows, 1, Real(1)));
      cells = ad::scale_rows(tape, cells, result.gates[w]);
    } else if (gates == GateMode::kSymbol) {
      result.gates[w] = tape.variable(Array<Real>(rows, n, Real(1)));
      cells = ad::hadamard(tape, cells, result.gates[w]);
    }
    exponent[w].assign(rows, kNegInf);
    cells = rescale(cells, exponent[w], split_max);
    if (w < l) {
      left[w] = ad::matmul(tape, cells, v_nt);
      right[w] = ad::matmul(tape, cells, w_nt);
    }
    top = cells;
  }

  Var total = ad::matmul(tape, top, g.start, ad::Trans::kNo, ad::Trans::kYes);  // 1 x 1
  const double root_exponent = exponent[l][0];
  Var logp = ad::add(tape, ad::log(tape, total),
                     tape.constant(Array<Real>::scalar(std::isfinite(root_exponent) ? static_cast<Real>(root_exponent) : Real(0))));
  result.log_likelihood = logp;
  const double value = static_cast<double>(tape.value(logp)[0]);
  result.log_likelihood_value = std::isfinite(root_exponent) && std::isfinite(value) ? value : kNegInf;
  return result;
}

template GrammarVars grammar_constants<float>(ad::Tape<float>&, const TdPcfg&);
template GrammarVars grammar_constants<double>(ad::Tape<double>&, const TdPcfg&);
template TapeInside inside_on_tape<float>(ad::Tape<float>&, const GrammarVars&, std::span<const WordId>, GateMode);
template TapeInside inside_on_tape<double>(ad::Tape<double>&, const GrammarVars&, std::span<const WordId>, GateMode);

}  // namespace tnpcfg
