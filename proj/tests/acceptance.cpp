// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "tnpcfg/experiments.hpp"

using namespace tnpcfg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof buffer, format, args...);
  return buffer;
}

Sentence random_sentence(std::size_t length, std::size_t q, std::mt19937_64& rng) {
  Sentence s(length);
  for (auto& w : s) w = static_cast<WordId>(rng() % q);
  return s;
}

double relative(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// 1. Factored and dense inside agree on random grammars.
Outcome factored_dense() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::size_t grammars = 0;
  for (std::uint64_t seed = 0; seed < 250; ++seed) {
    const std::size_t n = 1 + rng() % 4;
    const std::size_t p = 1 + rng() % (8 - n);
    const std::size_t d = 1 + rng() % 16;
    const std::size_t q = 1 + rng() % 6;
    const TdPcfg g = random_td_pcfg(n, p, q, d, 1000 + seed);
    const DensePcfg dense = reconstruct_tensor(g);
    for (int s = 0; s < 3; ++s) {
      const Sentence w = random_sentence(2 + rng() % 9, q, rng);
      worst = std::max(worst, relative(inside_factored(g, w).log_likelihood, inside_dense(dense, w).log_likelihood));
    }
    ++grammars;
  }
  const double t = seconds_since(start);
  return {worst <= 1e-6 && t < 60.0,
          fmt("%zu grammars x 3 sentences, max relative error %.2e (<= 1e-6), %.1fs (< 60s)", grammars, worst, t)};
}

// 2. Softmax-emitted factors reconstruct to slice-stochastic tensors.
template <typename Real>
double theorem_deviation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelConfig c;
  c.n = 1 + rng() % 5;
  c.p = 1 + rng() % 6;
  c.q = 2 + rng() % 5;
  c.d = 1 + rng() % 12;
  c.k = 2 + rng() % 8;
  c.seed = seed;
  c.dtype = std::is_same_v<Real, float> ? Precision::kSingle : Precision::kDouble;
  const BinaryFactors f = emit_binary_factors(NeuralParams<Real>::initialize(c));
  const std::size_t m = c.n + c.p;
  double worst = 0.0;
  // Explicit triple sum, independent of the library reconstruction.
  for (std::size_t a = 0; a < c.n; ++a) {
    double total = 0.0;
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t cc = 0; cc < m; ++cc) {
        double t = 0.0;
        for (std::size_t l = 0; l < c.d; ++l) t += f.U(a, l) * f.V(b, l) * f.W(cc, l);
        if (t < 0) worst = std::max(worst, -t);
        total += t;
      }
    worst = std::max(worst, std::abs(total - 1.0));
  }
  const DensePcfg dense = reconstruct_tensor(TdPcfg{f.U, f.V, f.W, Matrix::Constant(c.p, c.q, 1.0 / c.q),
                                                    Vector::Constant(c.n, 1.0 / c.n)});
  for (std::size_t a = 0; a < c.n; ++a) {
    double total = 0.0;
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t cc = 0; cc < m; ++cc) total += dense.rules(a, b, cc);
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return worst;
}

Outcome theorem_suite() {
  const auto start = Clock::now();
  double worst_d = 0.0, worst_f = 0.0;
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    worst_d = std::max(worst_d, theorem_deviation<double>(seed));
    worst_f = std::max(worst_f, theorem_deviation<float>(seed));
  }
  return {worst_d <= 1e-9 && worst_f <= 1e-5,
          fmt("120 triples per precision, max deviation f64 %.2e (<= 1e-9), f32 %.2e (<= 1e-5), %.1fs", worst_d,
              worst_f, seconds_since(start))};
}

// 3. Dense inside, Viterbi and posteriors against exhaustive enumeration.
Outcome enumeration() {
  const auto start = Clock::now();
  std::mt19937_64 rng(303);
  double ll_err = 0.0, post_err = 0.0, sum_err = 0.0, vit_err = 0.0;
  std::size_t cases = 0, tree_mismatch = 0;
  for (std::size_t l = 2; l <= 8; ++l) {
    for (int rep = 0; rep < 6; ++rep) {
      std::size_t n = 2, p = 2;
      if (l >= 7) (rep % 2 ? n : p) = 1;
      const TdPcfg g = random_td_pcfg(n, p, 3, 3, 500 + 10 * l + rep);
      const DensePcfg dense = reconstruct_tensor(g);
      const Sentence w = random_sentence(l, 3, rng);
      const auto trees = enumerate_trees(dense, w);
      double total = 0.0;
      const ScoredTree* best = nullptr;
      std::map<std::pair<std::size_t, std::size_t>, double> marginal;
      for (const auto& t : trees) {
        total += t.probability;
        if (!best || t.probability > best->probability) best = &t;
        for (const auto& s : t.tree.spans) marginal[{s.begin, s.end}] += t.probability;
      }
      ll_err = std::max(ll_err, std::abs(inside_dense(dense, w).log_likelihood - std::log(total)));
      const ViterbiResult v = cyk_viterbi_dense(dense, w);
      vit_err = std::max(vit_err, std::abs(v.log_score - std::log(best->probability)));
      // Exact ties occur, so the Viterbi tree must be an enumerated tree
      // whose probability equals the maximum.
      auto key = [](const ParseTree& t) {
        std::set<std::tuple<std::size_t, std::size_t, SymbolId>> out;
        for (const auto& s : t.spans) out.emplace(s.begin, s.end, s.label);
        return std::pair(out, t.tags);
      };
      const auto mine = key(*v.tree);
      const auto found = std::find_if(trees.begin(), trees.end(), [&](const ScoredTree& t) { return key(t.tree) == mine; });
      tree_mismatch += found == trees.end() || relative(found->probability, best->probability) > 1e-12;
      const SpanPosteriors post = span_posteriors(g, w);
      for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = i + 1; j < l; ++j) {
          const auto it = marginal.find({i, j});
          post_err = std::max(post_err, std::abs(post(i, j) - (it == marginal.end() ? 0.0 : it->second / total)));
        }
      sum_err = std::max(sum_err, std::abs(post.total() - double(l - 1)));
      ++cases;
    }
  }
  const double t = seconds_since(start);
  return {ll_err <= 1e-9 && vit_err <= 1e-9 && tree_mismatch == 0 && post_err <= 1e-8 && sum_err <= 1e-6 && t < 120,
          fmt("%zu sentences l<=8: loglik %.1e (<= 1e-9), viterbi %.1e with %zu non-argmax trees, posteriors %.1e "
              "(<= 1e-8), posterior sum %.1e (<= 1e-6), %.1fs",
              cases, ll_err, vit_err, tree_mismatch, post_err, sum_err, t)};
}

// 4. MBR is optimal, and G2 posteriors on "a b a" are exact.
Outcome mbr() {
  std::mt19937_64 rng(404);
  double gap = 0.0;
  std::size_t cases = 0;
  for (std::size_t l = 2; l <= 8; ++l) {
    for (int rep = 0; rep < 5; ++rep) {
      SpanPosteriors post(l);
      if (rep < 3) {
        std::uniform_real_distribution<double> u(0, 1);
        for (std::size_t i = 0; i < l; ++i)
          for (std::size_t j = i + 1; j < l; ++j) post(i, j) = u(rng);
      } else {
        post = span_posteriors(random_td_pcfg(3, 3, 4, 5, 40 + l * 7 + rep), random_sentence(l, 4, rng));
      }
      double best = -1.0;
      for (const auto& spans : oracle::bracketings(l)) {
        double v = 0.0;
        for (const auto& [i, j] : spans) v += post(i, j);
        best = std::max(best, v);
      }
      gap = std::max(gap, std::abs(mbr_objective(post, mbr_parse(post)) - best));
      ++cases;
    }
  }
  const SpanPosteriors g2 = span_posteriors(oracle::g2(), Sentence{0, 1, 0});
  const double g2_err =
      std::max({std::abs(g2(0, 1) - 0.75), std::abs(g2(1, 2) - 0.25), std::abs(g2(0, 2) - 1.0)});
  const std::string tree = mbr_parse(g2).bracketing();
  return {gap <= 1e-12 && g2_err <= 1e-9 && tree == "((0 1) 2)",
          fmt("%zu cases l<=8, objective gap %.1e; G2 posterior error %.1e (<= 1e-9), tree %s", cases, gap, g2_err,
              tree.c_str())};
}

// 5. End-to-end gradient against finite differences.
Outcome gradient() {
  ModelConfig c;
  c.n = 2;
  c.p = 2;
  c.d = 4;
  c.k = 8;
  c.q = 5;
  c.dtype = Precision::kDouble;
  c.seed = 5;
  const auto params = NeuralParams<double>::initialize(c);
  std::vector<ad::Array<double>> point;
  for (const auto& p : params.parameters()) point.push_back(p.value);
  const std::vector<Sentence> batch{{0, 3, 1, 4}};
  const auto r = ad::finite_difference_check(
      [&](ad::Tape<double>& t, std::span<const ad::Var> x) { return nll_on_tape(t, c, x, batch); }, point, 1e-3);
  return {r.max_rel_error < 1e-4 && r.compared > 0,
          fmt("%zu coordinates (%zu at relu kinks skipped), max relative error %.2e (< 1e-4)", r.compared, r.skipped,
              r.max_rel_error)};
}

// 6. Inside running time scales as claimed in m.
Outcome complexity() {
  const auto start = Clock::now();
  const std::vector<std::size_t> dense_m{16, 32, 64}, factored_m{64, 128, 256, 512};
  const double dense = fitted_exponent(bench_inside(InsidePath::kDense, dense_m, 20, 9, 0));
  const double factored = fitted_exponent(bench_inside(InsidePath::kFactored, factored_m, 20, 9, 0));
  const double t = seconds_since(start);
  return {factored <= 2.3 && dense >= 2.6 && dense <= 3.4 && t < 600,
          fmt("factored exponent %.2f (<= 2.3, d=m up to 512), dense exponent %.2f (in [2.6, 3.4], m up to 64), l=20, "
              "%.1fs",
              factored, dense, t)};
}

// 7. Learning on a corpus sampled from a known p = 16 grammar.
Outcome learning() {
  const auto start = Clock::now();
  const TdPcfg truth = synthetic_td_pcfg(8, 16, 64, 16, 7, 4.0, 0.4);
  const SampledCorpus data = sample_corpus(truth, 1500, 30, 1);
  const std::span<const Sentence> all(data.sentences);
  const auto train_set = all.subspan(0, 1200);
  const auto dev_set = all.subspan(1200, 150);
  const auto test_set = all.subspan(1350);
  std::vector<GoldTree> gold;
  for (std::size_t i = 1350; i < data.sentences.size(); ++i) {
    GoldTree g;
    g.length = data.sentences[i].size();
    for (const auto& s : data.trees[i].spans) g.spans.push_back({s.begin, s.end, "NT" + std::to_string(s.label)});
    gold.push_back(std::move(g));
  }

  ModelConfig base;
  base.q = 64;
  base.d = 16;
  base.k = 64;
  base.dtype = Precision::kSingle;
  const TrainConfig config;  // published defaults: 4 seeds, 10 epochs
  const std::vector<std::size_t> ps{4, 16};
  const auto rows = sweep(base, config, ps, {train_set, dev_set, test_set, gold});

  bool improved = true;
  for (const auto& row : rows)
    for (const auto& s : row.seeds) improved = improved && s.perplexity < s.initial_perplexity;

  std::mt19937_64 rng(77);
  std::vector<double> random_f1;
  for (int draw = 0; draw < 20; ++draw) {
    std::vector<ParseTree> trees;
    for (const auto& g : gold) trees.push_back(random_tree(g.length, rng));
    random_f1.push_back(corpus_f1(gold, trees).mean);
  }
  const double baseline = mean(random_f1);
  const double t = seconds_since(start);
  const SweepRow& p4 = rows[0];
  const SweepRow& p16 = rows[1];
  return {improved && p16.median_perplexity <= p4.median_perplexity && p16.mean_f1 - baseline >= 10.0 && t < 900,
          fmt("(a) every seed improves: %s; (b) median dev perplexity p=16 %.2f <= p=4 %.2f; (c) MBR F1 %.2f vs "
              "random %.2f (+%.2f >= 10); 1500 sentences, %.1fs",
              improved ? "yes" : "no", p16.median_perplexity, p4.median_perplexity, p16.mean_f1, baseline,
              p16.mean_f1 - baseline, t)};
}

// 8. Evaluation against hand-scored fixture values.
Outcome evaluation() {
  const auto trees = preprocess(read_treebank(std::filesystem::path(TNPCFG_TEST_DATA) / "fixture.mrg"),
                                default_punctuation_tags());
  std::vector<GoldTree> gold;
  for (const auto& t : trees) gold.push_back(GoldTree::from(t));
  // Scored by hand.
  const double left_f1[] = {25.0, 0.0, 200.0 / 3, 0.0, 0.0, 40.0, 200.0 / 3, 0.0, 100.0 / 3, 0.0};
  const double right_f1[] = {75.0, 100.0, 0.0, 100.0, 80.0, 0.0, 0.0, 100.0, 200.0 / 3, 100.0};
  const std::map<std::string, double> right_recall{{"NP", 200.0 / 6}, {"VP", 100.0}, {"PP", 100.0},
                                                   {"SBAR", 100.0},   {"ADJP", 50.0}};
  double err = 0.0;
  std::vector<ParseTree> left, right;
  for (std::size_t i = 0; i < gold.size() && i < 10; ++i) {
    left.push_back(left_branching(gold[i].length));
    right.push_back(right_branching(gold[i].length));
    err = std::max(err, std::abs(*sentence_f1(gold[i], left[i]) - left_f1[i]));
    err = std::max(err, std::abs(*sentence_f1(gold[i], right[i]) - right_f1[i]));
  }
  err = std::max(err, std::abs(corpus_f1(gold, left).mean - 23.166666666666668));
  err = std::max(err, std::abs(corpus_f1(gold, right).mean - 62.166666666666664));
  bool recall_ok = true;
  for (const auto& r : recall_by_label(gold, right, default_recall_labels())) {
    const auto it = right_recall.find(r.label);
    if (it == right_recall.end()) {
      recall_ok = recall_ok && !r.recall;
    } else {
      recall_ok = recall_ok && r.recall && std::abs(*r.recall - it->second) <= 1e-9;
    }
  }

  // Trivial spans never count: adding width-1 and whole-sentence spans to
  // either side leaves every score unchanged, and a sentence with only
  // trivial gold spans is excluded.
  bool trivial_ok = true;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ParseTree padded = right[i];
    for (std::size_t w = 0; w < gold[i].length; ++w) padded.spans.push_back({w, w, -1});
    padded.spans.push_back({0, gold[i].length - 1, -1});
    GoldTree fewer = gold[i];
    std::erase_if(fewer.spans, [&](const GoldSpan& s) { return s.begin == s.end; });
    trivial_ok = trivial_ok && *sentence_f1(gold[i], padded) == *sentence_f1(fewer, right[i]);
  }
  GoldTree flat;
  flat.length = 3;
  flat.spans = {{0, 2, "S"}, {0, 0, "A"}, {1, 1, "B"}, {2, 2, "C"}};
  trivial_ok = trivial_ok && !sentence_f1(flat, right_branching(3)).has_value();

  return {gold.size() == 10 && err <= 1e-9 && recall_ok && trivial_ok,
          fmt("10 fixture trees: max F1 deviation %.1e, recall %s, trivial-span removal %s", err,
              recall_ok ? "exact" : "WRONG", trivial_ok ? "holds" : "VIOLATED")};
}

// 9. The published configuration builds and runs one pass.
Outcome scale() {
  const auto start = Clock::now();
  ModelConfig c = ModelConfig::with_defaults(500, 10000);
  c.dtype = Precision::kSingle;
  const std::size_t count = parameter_count(c);
  auto params = NeuralParams<float>::initialize(c);
  std::mt19937_64 rng(9);
  const std::vector<Sentence> batch{random_sentence(30, c.q, rng)};
  params.zero_grad();
  const double loss = nll_batch(params, batch);
  bool finite = std::isfinite(loss);
  double norm = 0.0;
  for (const auto& p : params.parameters())
    for (float g : p.grad.values()) {
      finite = finite && std::isfinite(g);
      norm += double(g) * g;
    }
  const TdPcfg g = emit_td_pcfg(params);
  const bool valid = validate_factored(g, 1e-4).ok();
  return {count >= 1'000'000 && count <= 10'000'000 && params.count() == count && finite && norm > 0 && valid,
          fmt("n=%zu p=%zu d=%zu k=%zu: %zu parameters (in [1e6, 1e7]), 30-token NLL %.1f, gradient norm %.2e, "
              "finite %s, %.1fs",
              c.n, c.p, c.d, c.k, count, loss, std::sqrt(norm), finite ? "yes" : "no", seconds_since(start))};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"factored-dense equivalence", factored_dense},
      {"slice-stochastic reconstruction", theorem_suite},
      {"enumeration oracle", enumeration},
      {"MBR optimality", mbr},
      {"gradient correctness", gradient},
      {"complexity scaling", complexity},
      {"learning sanity", learning},
      {"evaluation fidelity", evaluation},
      {"default-scale smoke test", scale},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
