#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>

#include "oracles.hpp"
#include "tnpcfg/corpus.hpp"

using namespace tnpcfg;

namespace {

const std::filesystem::path kFixture = std::filesystem::path(TNPCFG_TEST_DATA) / "fixture.mrg";

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("tnpcfg_test_corpus_" + name);
}

}  // namespace

TEST_CASE("parse a bracketed tree") {
  const auto trees = parse_treebank("( (S (NP (DT the) (NN cat)) (VP (VBD sat))) )\n");
  REQUIRE(trees.size() == 1);
  const TreeNode& s = trees[0];
  CHECK(s.label == "S");
  CHECK(s.leaf_count() == 3);
  CHECK(words(s) == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(tags(s) == std::vector<std::string>{"DT", "NN", "VBD"});
  CHECK(write_tree(s) == "(S (NP (DT the) (NN cat)) (VP (VBD sat)))");
}

TEST_CASE("trees may span several lines") {
  const auto trees = parse_treebank("(S\n  (NP (PRP I))\n  (VP (VBP run)))\n(X (Y z) (Y w))");
  REQUIRE(trees.size() == 2);
  CHECK(trees[1].children.size() == 2);
  // Several children under an unlabeled root get a ROOT label.
  CHECK(parse_treebank("( (A a) (B b) )")[0].label == "ROOT");
}

TEST_CASE("malformed input reports the line") {
  CHECK_THROWS_AS(parse_treebank("(S (A b)))"), TreebankError);
  CHECK_THROWS_AS(parse_treebank("(S (A b)"), TreebankError);
  CHECK_THROWS_AS(parse_treebank("(S )"), TreebankError);
  try {
    parse_treebank("(S (A b))\n\n(S (A b)))");
    FAIL("expected an error");
  } catch (const TreebankError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("write and read round-trip") {
  const auto trees = read_treebank(kFixture);
  REQUIRE(trees.size() == 10);
  const auto path = temp_file("roundtrip.mrg");
  write_treebank(path, trees);
  CHECK(read_treebank(path) == trees);
  std::filesystem::remove(path);
  CHECK_THROWS(read_treebank(temp_file("missing.mrg")));
}

TEST_CASE("preprocessing removes punctuation, empties and function tags") {
  const auto raw = parse_treebank(
      "( (S (`` ``) (S-TPC-1 (NP-SBJ (PRP We)) (VP (VBP win))) (, ,) ('' '') (NP-SBJ (PRP they)) "
      "(VP (VBD said) (S (-NONE- *T*-1))) (. .)) )");
  PreprocessStats stats;
  const auto out = preprocess(raw, default_punctuation_tags(), &stats);
  REQUIRE(out.size() == 1);
  CHECK(write_tree(out[0]) == "(S (S (NP (PRP We)) (VP (VBP win))) (NP (PRP they)) (VP (VBD said)))");
  CHECK(stats.input == 1);
  CHECK(stats.removed_tokens == 5);
}

TEST_CASE("a unary chain left by a deletion collapses to the upper label") {
  const auto raw = parse_treebank("(S (NP (NP (DT the) (NN dog)) (, ,)) (VP (VBD ran)))");
  const auto out = preprocess(raw, default_punctuation_tags());
  CHECK(write_tree(out[0]) == "(S (NP (DT the) (NN dog)) (VP (VBD ran)))");
  // Original unary chains stay.
  const auto kept = preprocess(parse_treebank("(S (NP (NP (DT the) (NN dog))) (VP (VBD ran)))"),
                               default_punctuation_tags());
  CHECK(write_tree(kept[0]) == "(S (NP (NP (DT the) (NN dog))) (VP (VBD ran)))");
  // Labels that start with a dash are not function tags.
  const auto lrb = preprocess(parse_treebank("(S (-X- a) (NP=2 b))"), {});
  CHECK(write_tree(lrb[0]) == "(S (-X- a) (NP b))");
}

TEST_CASE("short and empty trees are dropped") {
  const auto raw = parse_treebank("(S (. .))\n(S (NP (NN Yes)) (. .))\n(S (A a) (B b))");
  PreprocessStats stats;
  const auto out = preprocess(raw, default_punctuation_tags(), &stats);
  CHECK(out.size() == 1);
  CHECK(stats.dropped_empty == 1);
  CHECK(stats.dropped_short == 1);
}

TEST_CASE("preprocessing is idempotent") {
  const auto once = preprocess(read_treebank(kFixture), default_punctuation_tags());
  CHECK(once.size() == 10);
  CHECK(preprocess(once, default_punctuation_tags()) == once);
}

TEST_CASE("vocabulary keeps frequent words and ties by first occurrence") {
  const auto trees = parse_treebank("(S (A b) (A a) (A c))\n(S (A c) (A a) (A d))");
  const Vocabulary v = build_vocab(trees, 2);
  REQUIRE(v.size() == 3);
  CHECK(v.words() == std::vector<std::string>{"a", "c", Vocabulary::kUnknown});
  CHECK(v.count(0) == 2);
  CHECK(v.id("b") == v.unknown());
  const std::vector<std::string> tokens{"c", "zzz", "a"};
  CHECK(v.encode(tokens) == Sentence{1, 2, 0});

  const Vocabulary all = build_vocab(trees, 100);
  CHECK(all.size() == 5);
  CHECK(all.words() == std::vector<std::string>{"a", "c", "b", "d", Vocabulary::kUnknown});

  const auto path = temp_file("vocab.tsv");
  all.write(path);
  const Vocabulary back = Vocabulary::read(path);
  CHECK(back.words() == all.words());
  CHECK(back.count(2) == 1);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(Vocabulary({"a", "b"}, {1, 1}), std::invalid_argument);
}

TEST_CASE("gold spans in pre-order") {
  const auto t = parse_treebank("(S (NP (DT the) (NN cat)) (VP (VBD sat)))")[0];
  const std::vector<GoldSpan> expected{{0, 2, "S"},  {0, 1, "NP"}, {0, 0, "DT"},
                                       {1, 1, "NN"}, {2, 2, "VP"}, {2, 2, "VBD"}};
  CHECK(gold_spans(t) == expected);
}

TEST_CASE("sampling is deterministic and respects the length cap") {
  const TdPcfg g = synthetic_td_pcfg(2, 4, 12, 6, 3);
  const SampledCorpus a = sample_corpus(g, 100, 10, 7);
  const SampledCorpus b = sample_corpus(g, 100, 10, 7);
  CHECK(a.sentences == b.sentences);
  CHECK(a.sentences != sample_corpus(g, 100, 10, 8).sentences);
  for (std::size_t i = 0; i < a.sentences.size(); ++i) {
    CHECK(a.sentences[i].size() >= 2);
    CHECK(a.sentences[i].size() <= 10);
    CHECK(a.trees[i].is_valid());
    CHECK(a.trees[i].tags.size() == a.sentences[i].size());
  }
  CHECK(a.attempts >= 100);
}

TEST_CASE("a forced grammar always yields a a") {
  const SampledCorpus c = sample_corpus(oracle::forced(), 20, 5, 1);
  for (const auto& s : c.sentences) CHECK(s == Sentence{0, 0});
  CHECK(c.attempts == 20);
  const TreeNode t = to_tree_node(c.trees[0], c.sentences[0], 1, std::vector<std::string>{"a"});
  CHECK(write_tree(t) == "(NT0 (T0 a) (T0 a))");
}

TEST_CASE("sample frequencies follow the grammar") {
  // Frequency of "a b" among two-word G2 samples against the exact
  // conditional from the log-space oracle.
  const TdPcfg g = oracle::g2();
  const DensePcfg d = oracle::reconstruct(g);
  double total = 0.0, ab = 0.0;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) {
      const double p = std::exp(oracle::log_inside(d, {x, y}));
      total += p;
      if (x == 0 && y == 1) ab = p;
    }
  const double expected = ab / total;
  const SampledCorpus c = sample_corpus(g, 20000, 2, 11);
  std::size_t hits = 0;
  for (const auto& s : c.sentences) hits += s == Sentence{0, 1};
  const double freq = static_cast<double>(hits) / static_cast<double>(c.sentences.size());
  const double se = std::sqrt(expected * (1 - expected) / static_cast<double>(c.sentences.size()));
  CHECK(std::abs(freq - expected) < 3 * se);
}

TEST_CASE("sampling refuses invalid grammars and impossible limits") {
  TdPcfg g = oracle::g2();
  g.U(0, 0) += 0.5;
  CHECK_THROWS_AS(sample_corpus(g, 5, 5, 0), std::invalid_argument);
  CHECK_THROWS_AS(sample_corpus(oracle::g2(), 5, 1, 0), std::invalid_argument);
  // Every derivation of the forced grammar has two words.
  const TdPcfg f = oracle::forced();
  CHECK_NOTHROW(sample_corpus(f, 3, 2, 0));
}
