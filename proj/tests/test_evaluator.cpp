#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "tnpcfg/evaluator.hpp"

using namespace tnpcfg;

namespace {

ParseTree tree_of(std::size_t length, std::vector<std::pair<std::size_t, std::size_t>> spans) {
  ParseTree t;
  t.length = length;
  for (const auto& [i, j] : spans) t.spans.push_back({i, j, -1});
  return t;
}

GoldTree gold_of(std::size_t length, std::vector<GoldSpan> spans) {
  GoldTree g;
  g.length = length;
  g.spans = std::move(spans);
  g.words.assign(length, "w");
  return g;
}

std::vector<GoldTree> fixture() {
  const auto trees = preprocess(read_treebank(std::filesystem::path(TNPCFG_TEST_DATA) / "fixture.mrg"),
                                default_punctuation_tags());
  std::vector<GoldTree> out;
  for (const auto& t : trees) out.push_back(GoldTree::from(t));
  return out;
}

// Scored by hand for the ten fixture trees.
constexpr double kLeftF1[] = {25.0, 0.0, 200.0 / 3, 0.0, 0.0, 40.0, 200.0 / 3, 0.0, 100.0 / 3, 0.0};
constexpr double kRightF1[] = {75.0, 100.0, 0.0, 100.0, 80.0, 0.0, 0.0, 100.0, 200.0 / 3, 100.0};

}  // namespace

TEST_CASE("sentence F1 on a small example") {
  // Gold {(0,2),(1,2)} against prediction {(0,2),(0,1)} after trimming.
  const GoldTree gold = gold_of(4, {{0, 3, "S"}, {0, 2, "NP"}, {1, 2, "X"}, {0, 0, "A"}});
  const ParseTree pred = tree_of(4, {{0, 3}, {0, 2}, {0, 1}});
  CHECK(*sentence_f1(gold, pred) == doctest::Approx(50.0));
  CHECK(*sentence_f1(gold, tree_of(4, {{0, 3}, {1, 3}, {2, 3}})) == 0.0);
  CHECK(*sentence_f1(gold, tree_of(4, {{0, 3}, {0, 2}, {1, 2}})) == doctest::Approx(100.0));
}

TEST_CASE("sentences without nontrivial gold spans are skipped") {
  const GoldTree flat = gold_of(3, {{0, 2, "S"}, {0, 0, "A"}, {1, 1, "B"}, {2, 2, "C"}});
  CHECK_FALSE(sentence_f1(flat, right_branching(3)).has_value());
  const std::vector<GoldTree> gold{flat, gold_of(3, {{0, 2, "S"}, {1, 2, "VP"}})};
  const std::vector<ParseTree> pred{right_branching(3), right_branching(3)};
  const CorpusF1 f = corpus_f1(gold, pred);
  CHECK(f.scored == 1);
  CHECK(f.skipped == 1);
  CHECK(f.mean == doctest::Approx(100.0));
}

TEST_CASE("duplicate spans from unary chains count once") {
  const GoldTree gold = gold_of(3, {{0, 2, "S"}, {0, 1, "NP"}, {0, 1, "NP"}});
  CHECK(*sentence_f1(gold, left_branching(3)) == doctest::Approx(100.0));
}

TEST_CASE("misaligned input is rejected") {
  const GoldTree gold = gold_of(3, {{0, 2, "S"}, {1, 2, "VP"}});
  CHECK_THROWS_AS(sentence_f1(gold, right_branching(4)), std::invalid_argument);
  const std::vector<GoldTree> one{gold};
  const std::vector<ParseTree> two{right_branching(3), right_branching(3)};
  CHECK_THROWS_AS(corpus_f1(one, two), std::invalid_argument);
  const std::vector<ParseTree> wrong{right_branching(5)};
  try {
    corpus_f1(one, wrong);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("sentence 0") != std::string::npos);
  }
}

TEST_CASE("branching baselines on the fixture") {
  const auto gold = fixture();
  REQUIRE(gold.size() == 10);
  std::vector<ParseTree> left, right;
  for (const auto& g : gold) {
    left.push_back(left_branching(g.length));
    right.push_back(right_branching(g.length));
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    CHECK(*sentence_f1(gold[i], left[i]) == doctest::Approx(kLeftF1[i]).epsilon(1e-12));
    CHECK(*sentence_f1(gold[i], right[i]) == doctest::Approx(kRightF1[i]).epsilon(1e-12));
  }
  CHECK(corpus_f1(gold, left).mean == doctest::Approx(23.166666666666668).epsilon(1e-12));
  CHECK(corpus_f1(gold, right).mean == doctest::Approx(62.166666666666664).epsilon(1e-12));

  const auto rl = recall_by_label(gold, left, default_recall_labels());
  const auto rr = recall_by_label(gold, right, default_recall_labels());
  REQUIRE(rl.size() == 6);
  // NP VP PP SBAR ADJP ADVP
  CHECK(*rl[0].recall == doctest::Approx(400.0 / 6));
  CHECK(rl[0].gold_count == 6);
  CHECK(*rl[1].recall == 0.0);
  CHECK(*rl[2].recall == 0.0);
  CHECK(*rl[3].recall == 0.0);
  CHECK(*rl[4].recall == 0.0);
  CHECK(*rr[0].recall == doctest::Approx(200.0 / 6));
  CHECK(*rr[1].recall == doctest::Approx(100.0));
  CHECK(*rr[2].recall == doctest::Approx(100.0));
  CHECK(*rr[3].recall == doctest::Approx(100.0));
  CHECK(*rr[4].recall == doctest::Approx(50.0));
  // ADVP only ever covers one word.
  CHECK_FALSE(rr[5].recall.has_value());
  CHECK(rr[5].gold_count == 0);
}

TEST_CASE("label correspondence rows are distributions") {
  const auto gold = fixture();
  std::vector<ParseTree> pred;
  for (const auto& g : gold) {
    ParseTree t = right_branching(g.length);
    for (auto& s : t.spans) s.label = static_cast<SymbolId>((s.end - s.begin) % 3);
    pred.push_back(t);
  }
  const Correspondence c = label_correspondence(gold, pred, 2, 3);
  REQUIRE(c.rows.size() == c.values.size());
  CHECK(c.rows.size() <= 4);
  CHECK(c.rows.front() == "VP");
  CHECK(c.columns.size() == 3);
  CHECK(c.columns.back() == -1);
  for (const auto& row : c.values) {
    double total = 0;
    for (double v : row) total += v;
    CHECK(total == doctest::Approx(1.0));
  }
  std::vector<ParseTree> unlabeled;
  for (const auto& g : gold) unlabeled.push_back(right_branching(g.length));
  CHECK_THROWS_AS(label_correspondence(gold, unlabeled), std::invalid_argument);
}

TEST_CASE("cluster report counts predicted constituents") {
  const std::vector<std::vector<std::string>> sentences{{"the", "dog", "ran"}, {"the", "dog", "sat"},
                                                        {"a", "cat", "sat"}};
  std::vector<ParseTree> pred;
  for (std::size_t i = 0; i < 3; ++i) {
    ParseTree t = left_branching(3);
    t.spans[0].label = 1;
    t.spans[1].label = 0;
    pred.push_back(t);
  }
  const auto clusters = cluster_report(sentences, pred, 0);
  REQUIRE(clusters.size() == 2);
  CHECK(clusters[0].constituent == "the dog");
  CHECK(clusters[0].count == 2);
  CHECK(clusters[1].constituent == "a cat");
  CHECK(cluster_report(sentences, pred, 2).empty());
}

TEST_CASE("summary statistics") {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  CHECK(mean(xs) == 2.5);
  CHECK(biased_std(xs) == doctest::Approx(std::sqrt(1.25)));
  CHECK(biased_std(std::vector<double>{7.0}) == 0.0);
}

TEST_CASE("baseline trees") {
  CHECK(left_branching(4).bracketing() == "(((0 1) 2) 3)");
  CHECK(right_branching(4).bracketing() == "(0 (1 (2 3)))");
  std::mt19937_64 rng(1);
  std::map<std::string, int> seen;
  for (int i = 0; i < 2000; ++i) {
    const ParseTree t = random_tree(4, rng);
    CHECK(t.is_valid());
    ++seen[t.bracketing()];
  }
  // Random splits reach all five binary trees over four words.
  CHECK(seen.size() == 5);
}

TEST_CASE("metrics are written as tab-separated rows") {
  std::ostringstream out;
  const std::vector<Metric> metrics{{"f1", 48.125, "0"}, {"ppl", 210.5, "mean"}};
  write_metrics(out, metrics);
  CHECK(out.str() == "name\tvalue\tseed\nf1\t48.125\t0\nppl\t210.5\tmean\n");
}
