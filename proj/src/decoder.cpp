#include "tnpcfg/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "tnpcfg/autodiff.hpp"

namespace tnpcfg {

std::string ParseTree::structure_error() const {
  if (length < 2) return spans.empty() ? "" : "a tree over fewer than two leaves has no internal spans";
  if (spans.size() != length - 1) {
    return "expected " + std::to_string(length - 1) + " internal spans, got " + std::to_string(spans.size());
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  bool has_root = false;
  for (const auto& s : spans) {
    if (s.begin >= s.end || s.end >= length) {
      return "span (" + std::to_string(s.begin) + "," + std::to_string(s.end) + ") is out of range or trivial";
    }
    if (!seen.emplace(s.begin, s.end).second) return "duplicate span";
    has_root = has_root || (s.begin == 0 && s.end == length - 1);
  }
  if (!has_root) return "missing the full span";
  for (const auto& a : spans) {
    for (const auto& b : spans) {
      const bool disjoint = a.end < b.begin || b.end < a.begin;
      const bool nested = (a.begin <= b.begin && b.end <= a.end) || (b.begin <= a.begin && a.end <= b.end);
      if (!disjoint && !nested) return "crossing spans";
    }
  }
  return "";
}

std::string ParseTree::bracketing() const {
  if (length == 0) return "()";
  std::ostringstream out;
  std::function<void(std::size_t, std::size_t)> emit = [&](std::size_t i, std::size_t j) {
    out << '(';
    for (std::size_t pos = i; pos <= j;) {
      if (pos != i) out << ' ';
      // The child starting at pos is the widest span inside (i, j) beginning there.
      std::size_t child_end = pos;
      for (const auto& s : spans) {
        if (s.begin == pos && s.end <= j && !(s.begin == i && s.end == j)) child_end = std::max(child_end, s.end);
      }
      if (child_end > pos) {
        emit(pos, child_end);
      } else {
        out << pos;
      }
      pos = child_end + 1;
    }
    out << ')';
  };
  emit(0, length - 1);
  return out.str();
}

SpanPosteriors::SpanPosteriors(std::size_t length) : length_(length), data_(length * length, 0.0) {}

double SpanPosteriors::total() const {
  double total = 0.0;
  for (std::size_t i = 0; i < length_; ++i) {
    for (std::size_t j = i + 1; j < length_; ++j) total += (*this)(i, j);
  }
  return total;
}

namespace {

struct GatedPass {
  ad::Tape<double> tape;
  TapeInside inside;
};

void run_gated(const TdPcfg& g, std::span<const WordId> sentence, GateMode mode, GatedPass& pass) {
  if (sentence.size() < 2) throw std::domain_error("posteriors are undefined for sentences shorter than two words");
  GrammarVars vars = grammar_constants(pass.tape, g);
  pass.inside = inside_on_tape(pass.tape, vars, sentence, mode);
  if (!std::isfinite(pass.inside.log_likelihood_value)) {
    throw std::domain_error("posteriors are undefined: sentence has zero probability");
  }
  pass.tape.backward(pass.inside.log_likelihood);
}

}  // namespace

SpanPosteriors span_posteriors(const TdPcfg& g, std::span<const WordId> sentence) {
  GatedPass pass;
  run_gated(g, sentence, GateMode::kSpan, pass);
  const std::size_t l = sentence.size();
  SpanPosteriors post(l);
  for (std::size_t w = 2; w <= l; ++w) {
    const auto& grad = pass.tape.grad(pass.inside.gates[w]);
    for (std::size_t i = 0; i + w <= l; ++i) post(i, i + w - 1) = grad[i];
  }
  return post;
}

SymbolPosteriors symbol_posteriors(const TdPcfg& g, std::span<const WordId> sentence) {
  GatedPass pass;
  run_gated(g, sentence, GateMode::kSymbol, pass);
  const std::size_t l = sentence.size();
  SymbolPosteriors post{l, g.n(), std::vector<std::vector<double>>(l + 1)};
  for (std::size_t w = 2; w <= l; ++w) {
    const auto grad = pass.tape.grad(pass.inside.gates[w]).values();
    post.values[w].assign(grad.begin(), grad.end());
  }
  return post;
}

ParseTree trivial_tree(std::size_t length) { return ParseTree{length, {}, {}}; }

ParseTree mbr_parse(const SpanPosteriors& post) {
  const std::size_t l = post.length();
  if (l < 2) return trivial_tree(l);
  std::vector<double> best(l * l, 0.0);
  std::vector<std::size_t> split(l * l, 0);
  for (std::size_t w = 2; w <= l; ++w) {
    for (std::size_t i = 0; i + w <= l; ++i) {
      const std::size_t j = i + w - 1;
      double top = -INFINITY;
      for (std::size_t k = i; k < j; ++k) {
        const double v = best[i * l + k] + best[(k + 1) * l + j];
        if (v > top) {
          top = v;
          split[i * l + j] = k;
        }
      }
      best[i * l + j] = post(i, j) + top;
    }
  }
  ParseTree tree{l, {}, {}};
  std::function<void(std::size_t, std::size_t)> build = [&](std::size_t i, std::size_t j) {
    if (i == j) return;
    tree.spans.push_back({i, j, -1});
    const std::size_t k = split[i * l + j];
    build(i, k);
    build(k + 1, j);
  };
  build(0, l - 1);
  return tree;
}

double mbr_objective(const SpanPosteriors& post, const ParseTree& tree) {
  double total = 0.0;
  for (const auto& s : tree.spans) total += post(s.begin, s.end);
  return total;
}

ParseTree label_spans(const TdPcfg& g, std::span<const WordId> sentence, const ParseTree& tree) {
  if (tree.length != sentence.size()) throw std::invalid_argument("tree and sentence lengths differ");
  if (!tree.is_valid()) throw std::invalid_argument("cannot label an invalid tree: " + tree.structure_error());
  ParseTree labeled = tree;
  if (sentence.size() < 2) return labeled;
  const SymbolPosteriors post = symbol_posteriors(g, sentence);
  for (auto& s : labeled.spans) {
    SymbolId best = 0;
    double top = -INFINITY;
    for (std::size_t a = 0; a < post.n; ++a) {
      const double v = post(s.begin, s.end, a);
      if (v > top) {
        top = v;
        best = static_cast<SymbolId>(a);
      }
    }
    s.label = best;
  }
  return labeled;
}

ViterbiResult cyk_viterbi_dense(const DensePcfg& g, std::span<const WordId> sentence) {
  const std::size_t l = sentence.size();
  const std::size_t n = g.n();
  const std::size_t m = g.m();
  for (WordId w : sentence) {
    if (w < 0 || static_cast<std::size_t>(w) >= g.q()) throw StructuralError("word id outside vocabulary");
  }
  ViterbiResult result;
  if (l < 2) return result;

  std::vector<double> log_rules(n * m * m);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      for (std::size_t c = 0; c < m; ++c) log_rules[(a * m + b) * m + c] = std::log(g.rules(a, b, c));
    }
  }
  struct Back {
    std::size_t split = 0;
    SymbolId left = -1;
    SymbolId right = -1;
  };
  auto cell = [&](std::size_t i, std::size_t j) { return (i * l + j) * m; };
  std::vector<double> score(l * l * m, kNegInf);
  std::vector<Back> back(l * l * m);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t t = 0; t < g.p(); ++t) {
      score[cell(i, i) + n + t] = std::log(g.emission(static_cast<Eigen::Index>(t), sentence[i]));
    }
  }
  for (std::size_t w = 2; w <= l; ++w) {
    for (std::size_t i = 0; i + w <= l; ++i) {
      const std::size_t j = i + w - 1;
      for (std::size_t a = 0; a < n; ++a) {
        double top = kNegInf;
        Back arg;
        for (std::size_t k = i; k < j; ++k) {
          const double* ls = &score[cell(i, k)];
          const double* rs = &score[cell(k + 1, j)];
          for (std::size_t b = 0; b < m; ++b) {
            if (ls[b] == kNegInf) continue;
            const double* row = &log_rules[(a * m + b) * m];
            for (std::size_t c = 0; c < m; ++c) {
              const double v = row[c] + ls[b] + rs[c];
              if (v > top) {
                top = v;
                arg = {k, static_cast<SymbolId>(b), static_cast<SymbolId>(c)};
              }
            }
          }
        }
        score[cell(i, j) + a] = top;
        back[cell(i, j) + a] = arg;
      }
    }
  }
  SymbolId root = -1;
  for (std::size_t a = 0; a < n; ++a) {
    const double v = std::log(g.start(static_cast<Eigen::Index>(a))) + score[cell(0, l - 1) + a];
    if (v > result.log_score) {
      result.log_score = v;
      root = static_cast<SymbolId>(a);
    }
  }
  if (root < 0) return result;

  ParseTree tree{l, {}, std::vector<SymbolId>(l, -1)};
  std::function<void(std::size_t, std::size_t, SymbolId)> build = [&](std::size_t i, std::size_t j, SymbolId s) {
    if (i == j) {
      tree.tags[i] = s;
      return;
    }
    tree.spans.push_back({i, j, s});
    const Back& b = back[cell(i, j) + static_cast<std::size_t>(s)];
    build(i, b.split, b.left);
    build(b.split + 1, j, b.right);
  };
  build(0, l - 1, root);
  result.tree = std::move(tree);
  return result;
}

std::vector<ScoredTree> enumerate_trees(const DensePcfg& g, std::span<const WordId> sentence, std::size_t max_trees) {
  const std::size_t l = sentence.size();
  if (l > kMaxEnumerationLength) {
    throw std::invalid_argument("enumeration refused for sentences longer than " +
                                std::to_string(kMaxEnumerationLength) + " words");
  }
  if (l < 2) return {};
  const std::size_t n = g.n();
  const std::size_t m = g.m();

  struct Partial {
    std::vector<LabeledSpan> spans;
    std::vector<SymbolId> tags;
    double probability;
  };
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::vector<Partial>> memo;
  auto too_many = [&] { throw std::length_error("enumeration exceeds " + std::to_string(max_trees) + " trees"); };

  std::function<const std::vector<Partial>&(std::size_t, std::size_t, std::size_t)> derive =
      [&](std::size_t i, std::size_t j, std::size_t sym) -> const std::vector<Partial>& {
    auto key = std::make_tuple(i, j, sym);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::vector<Partial> out;
    if (i == j) {
      if (sym >= n) {
        const double prob = g.emission(static_cast<Eigen::Index>(sym - n), sentence[i]);
        if (prob > 0.0) out.push_back({{}, {static_cast<SymbolId>(sym)}, prob});
      }
    } else if (sym < n) {
      for (std::size_t k = i; k < j; ++k) {
        for (std::size_t b = 0; b < m; ++b) {
          for (std::size_t c = 0; c < m; ++c) {
            const double rule = g.rules(sym, b, c);
            if (rule <= 0.0) continue;
            const auto& lefts = derive(i, k, b);
            if (lefts.empty()) continue;
            const auto& rights = derive(k + 1, j, c);
            for (const auto& lt : lefts) {
              for (const auto& rt : rights) {
                if (out.size() >= max_trees) too_many();
                Partial p;
                p.spans.reserve(1 + lt.spans.size() + rt.spans.size());
                p.spans.push_back({i, j, static_cast<SymbolId>(sym)});
                p.spans.insert(p.spans.end(), lt.spans.begin(), lt.spans.end());
                p.spans.insert(p.spans.end(), rt.spans.begin(), rt.spans.end());
                p.tags = lt.tags;
                p.tags.insert(p.tags.end(), rt.tags.begin(), rt.tags.end());
                p.probability = rule * lt.probability * rt.probability;
                out.push_back(std::move(p));
              }
            }
          }
        }
      }
    }
    return memo.emplace(key, std::move(out)).first->second;
  };

  std::vector<ScoredTree> trees;
  for (std::size_t a = 0; a < n; ++a) {
    const double start = g.start(static_cast<Eigen::Index>(a));
    if (start <= 0.0) continue;
    for (const auto& partial : derive(0, l - 1, a)) {
      if (trees.size() >= max_trees) too_many();
      trees.push_back({ParseTree{l, partial.spans, partial.tags}, start * partial.probability});
    }
  }
  return trees;
}

std::vector<ParseTree> enumerate_bracketings(std::size_t length) {
  if (length < 2) return {trivial_tree(length)};
  std::function<std::vector<std::vector<LabeledSpan>>(std::size_t, std::size_t)> build =
      [&](std::size_t i, std::size_t j) -> std::vector<std::vector<LabeledSpan>> {
    if (i == j) return {{}};
    std::vector<std::vector<LabeledSpan>> out;
    for (std::size_t k = i; k < j; ++k) {
      for (const auto& lt : build(i, k)) {
        for (const auto& rt : build(k + 1, j)) {
          std::vector<LabeledSpan> spans{{i, j, -1}};
          spans.insert(spans.end(), lt.begin(), lt.end());
          spans.insert(spans.end(), rt.begin(), rt.end());
          out.push_back(std::move(spans));
        }
      }
    }
    return out;
  };
  std::vector<ParseTree> trees;
  for (auto& spans : build(0, length - 1)) trees.push_back({length, std::move(spans), {}});
  return trees;
}

}  // namespace tnpcfg
