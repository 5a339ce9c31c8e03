#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "oracles.hpp"
#include "tnpcfg/decoder.hpp"

using namespace tnpcfg;

namespace {

Sentence to_sentence(const std::vector<int>& w) { return Sentence(w.begin(), w.end()); }

}  // namespace

TEST_CASE("G2 span posteriors on a b a") {
  const SpanPosteriors post = span_posteriors(oracle::g2(), Sentence{0, 1, 0});
  CHECK(post(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(post(1, 2) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(post(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(post.total() == doctest::Approx(2.0));
  const ParseTree tree = mbr_parse(post);
  CHECK(tree.bracketing() == "((0 1) 2)");
  CHECK(tree.is_valid());
}

TEST_CASE("posteriors equal enumerated marginals") {
  std::mt19937_64 rng(3);
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const TdPcfg g = random_td_pcfg(2, 2, 3, 3, seed);
    const auto w = oracle::sentence(2 + seed % 5, 3, rng);
    const auto marg = oracle::span_marginals(oracle::derivations(oracle::reconstruct(g), w));
    const SpanPosteriors post = span_posteriors(g, to_sentence(w));
    for (std::size_t i = 0; i < w.size(); ++i)
      for (std::size_t j = i + 1; j < w.size(); ++j) {
        const auto it = marg.find({i, j});
        CHECK(post(i, j) == doctest::Approx(it == marg.end() ? 0.0 : it->second).epsilon(1e-10));
      }
    CHECK(post.total() == doctest::Approx(double(w.size() - 1)).epsilon(1e-10));
  }
}

TEST_CASE("symbol posteriors sum to span posteriors") {
  const TdPcfg g = random_td_pcfg(3, 2, 4, 5, 8);
  const Sentence s{0, 3, 1, 2, 2};
  const SpanPosteriors spans = span_posteriors(g, s);
  const SymbolPosteriors symbols = symbol_posteriors(g, s);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j) {
      double total = 0;
      for (std::size_t a = 0; a < 3; ++a) total += symbols(i, j, a);
      CHECK(total == doctest::Approx(spans(i, j)).epsilon(1e-10));
    }
}

TEST_CASE("posteriors refuse impossible input") {
  CHECK_THROWS_AS(span_posteriors(oracle::forced(), Sentence{0, 0, 0}), std::domain_error);
  CHECK_THROWS_AS(span_posteriors(oracle::g2(), Sentence{0}), std::domain_error);
}

TEST_CASE("MBR matches exhaustive search over bracketings") {
  std::mt19937_64 rng(4);
  for (std::size_t l = 2; l <= 7; ++l) {
    SpanPosteriors post(l);
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = i + 1; j < l; ++j) post(i, j) = std::uniform_real_distribution<double>(0, 1)(rng);
    double best = -1;
    for (const auto& spans : oracle::bracketings(l)) {
      double v = 0;
      for (const auto& [i, j] : spans) v += post(i, j);
      best = std::max(best, v);
    }
    const ParseTree tree = mbr_parse(post);
    CHECK(tree.is_valid());
    CHECK(mbr_objective(post, tree) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("ties go to the smallest split point") {
  SpanPosteriors post(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) post(i, j) = 0.5;
  // Splitting at the first word everywhere gives a right-branching tree.
  CHECK(mbr_parse(post).bracketing() == "(0 (1 (2 3)))");
  CHECK(mbr_parse(SpanPosteriors(1)).spans.empty());
}

TEST_CASE("labels come from the most probable nonterminal") {
  const TdPcfg g = random_td_pcfg(3, 2, 4, 5, 9);
  const Sentence s{1, 0, 3, 2};
  const ParseTree tree = mbr_parse(span_posteriors(g, s));
  const ParseTree labeled = label_spans(g, s, tree);
  const SymbolPosteriors post = symbol_posteriors(g, s);
  for (const auto& span : labeled.spans) {
    REQUIRE(span.label >= 0);
    for (std::size_t a = 0; a < 3; ++a) CHECK(post(span.begin, span.end, a) <= post(span.begin, span.end, span.label));
  }
  CHECK_THROWS(label_spans(g, Sentence{1, 0}, tree));
}

TEST_CASE("Viterbi agrees with the enumeration argmax") {
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TdPcfg g = random_td_pcfg(2, 2, 3, 3, 100 + seed);
    const DensePcfg d = reconstruct_tensor(g);
    const auto w = oracle::sentence(2 + seed % 5, 3, rng);
    const auto all = oracle::derivations(oracle::reconstruct(g), w);
    const auto best = std::max_element(all.begin(), all.end(),
                                       [](const auto& a, const auto& b) { return a.probability < b.probability; });
    const ViterbiResult v = cyk_viterbi_dense(d, to_sentence(w));
    REQUIRE(v.tree.has_value());
    CHECK(v.log_score == doctest::Approx(std::log(best->probability)).epsilon(1e-12));
    CHECK(v.tree->is_valid());
    std::set<std::tuple<std::size_t, std::size_t, int>> mine, ref(best->spans.begin(), best->spans.end());
    for (const auto& s : v.tree->spans) mine.emplace(s.begin, s.end, s.label);
    CHECK(mine == ref);
    CHECK(std::vector<int>(v.tree->tags.begin(), v.tree->tags.end()) == best->tags);
  }
  const ViterbiResult g2 = cyk_viterbi_dense(reconstruct_tensor(oracle::g2()), Sentence{0, 1, 0});
  CHECK(g2.log_score == doctest::Approx(std::log(0.01728)));
  CHECK(g2.tree->bracketing() == "((0 1) 2)");
}

TEST_CASE("enumeration lists every derivation") {
  const auto trees = enumerate_trees(reconstruct_tensor(oracle::g2()), Sentence{0, 1, 0});
  REQUIRE(trees.size() == 2);
  std::vector<double> probs{trees[0].probability, trees[1].probability};
  std::sort(probs.begin(), probs.end());
  CHECK(probs[0] == doctest::Approx(0.00576));
  CHECK(probs[1] == doctest::Approx(0.01728));

  const TdPcfg g = random_td_pcfg(2, 2, 3, 2, 6);
  const Sentence s{0, 1, 2, 0};
  const auto mine = enumerate_trees(reconstruct_tensor(g), s);
  const auto ref = oracle::derivations(oracle::reconstruct(g), {0, 1, 2, 0});
  CHECK(mine.size() == ref.size());
  double a = 0, b = 0;
  for (const auto& t : mine) a += t.probability;
  for (const auto& t : ref) b += t.probability;
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
  CHECK_THROWS_AS(enumerate_trees(reconstruct_tensor(g), Sentence(11, 0)), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_trees(reconstruct_tensor(g), s, 10), std::length_error);
}

TEST_CASE("bracketing enumeration gives Catalan many trees") {
  const std::size_t catalan[] = {1, 1, 1, 2, 5, 14, 42, 132};
  for (std::size_t l = 1; l < 8; ++l) {
    const auto trees = enumerate_bracketings(l);
    CHECK(trees.size() == catalan[l]);
    for (const auto& t : trees) CHECK(t.is_valid());
  }
}

TEST_CASE("structure validation") {
  ParseTree t{3, {{0, 2, -1}, {0, 1, -1}}, {}};
  CHECK(t.is_valid());
  t.spans.push_back({1, 2, -1});
  CHECK_FALSE(t.is_valid());
  ParseTree crossing{4, {{0, 3, -1}, {0, 1, -1}, {1, 2, -1}}, {}};
  CHECK(crossing.structure_error() == "crossing spans");
  ParseTree missing_root{3, {{0, 1, -1}, {1, 2, -1}}, {}};
  CHECK_FALSE(missing_root.is_valid());
  CHECK(trivial_tree(1).is_valid());
}
