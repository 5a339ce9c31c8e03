#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "oracles.hpp"
#include "tnpcfg/inside.hpp"

using namespace tnpcfg;

TEST_CASE("G2 sentence probabilities") {
  const TdPcfg g = oracle::g2();
  const DensePcfg d = reconstruct_tensor(g);
  const Sentence ab{0, 1};
  const Sentence aba{0, 1, 0};
  CHECK(std::exp(inside_factored(g, ab).log_likelihood) == doctest::Approx(0.096).epsilon(1e-12));
  CHECK(std::exp(inside_dense(d, ab).log_likelihood) == doctest::Approx(0.096).epsilon(1e-12));
  CHECK(std::exp(inside_factored(g, aba).log_likelihood) == doctest::Approx(0.02304).epsilon(1e-12));
  CHECK(std::exp(inside_dense(d, aba).log_likelihood) == doctest::Approx(0.02304).epsilon(1e-12));
}

TEST_CASE("forced grammar gives probability one") {
  const TdPcfg g = oracle::forced();
  CHECK(inside_factored(g, Sentence{0, 0}).log_likelihood == doctest::Approx(0.0));
  // N -> T T only, so three words are underivable.
  const InsideResult three = inside_factored(g, Sentence{0, 0, 0});
  CHECK(three.log_likelihood == kNegInf);
  CHECK_FALSE(three.diagnostic.empty());
}

TEST_CASE("short and invalid inputs") {
  const TdPcfg g = random_td_pcfg(2, 2, 3, 2, 0);
  const InsideResult one = inside_factored(g, Sentence{1});
  CHECK(one.log_likelihood == kNegInf);
  CHECK_FALSE(one.diagnostic.empty());
  CHECK(inside_factored(g, Sentence{}).log_likelihood == kNegInf);
  CHECK_THROWS_AS(inside_factored(g, Sentence{0, 3}), StructuralError);
  CHECK_THROWS_AS(inside_dense(reconstruct_tensor(g), Sentence{-1, 0}), StructuralError);
}

TEST_CASE("factored and dense paths agree with a log-space oracle") {
  std::mt19937_64 rng(11);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t n = 1 + seed % 3, p = 1 + seed % 4, q = 2 + seed % 4, d = 1 + seed % 7;
    const TdPcfg g = random_td_pcfg(n, p, q, d, seed);
    const DensePcfg dense = reconstruct_tensor(g);
    const auto w = oracle::sentence(2 + seed % 7, q, rng);
    const Sentence s(w.begin(), w.end());
    const double ref = oracle::log_inside(oracle::reconstruct(g), w);
    CHECK(inside_factored(g, s).log_likelihood == doctest::Approx(ref).epsilon(1e-10));
    CHECK(inside_dense(dense, s).log_likelihood == doctest::Approx(ref).epsilon(1e-10));
  }
}

TEST_CASE("long sentences do not underflow") {
  const TdPcfg g = random_td_pcfg(3, 5, 200, 8, 4);
  std::mt19937_64 rng(5);
  const auto w = oracle::sentence(120, 200, rng);
  const Sentence s(w.begin(), w.end());
  const double ll = inside_factored(g, s).log_likelihood;
  CHECK(std::isfinite(ll));
  // Each word costs at least log 200 nats on average.
  CHECK(ll < -120 * std::log(200.0) * 0.5);
  const auto short_w = std::vector<int>(w.begin(), w.begin() + 25);
  CHECK(inside_factored(g, Sentence(short_w.begin(), short_w.end())).log_likelihood ==
        doctest::Approx(oracle::log_inside(oracle::reconstruct(g), short_w)).epsilon(1e-10));
}

TEST_CASE("chart exposes per-span inside scores") {
  const TdPcfg g = oracle::g2();
  const InsideResult r = inside_factored(g, Sentence{0, 1, 0});
  const Chart& c = r.chart;
  CHECK(c.span_count() == 6);
  // Inside of N over "a b" is pi(N->T T) Q(a) Q(b).
  CHECK(std::exp(c.log_inside(0, 1, 0)) == doctest::Approx(0.4 * 0.6 * 0.4));
  CHECK(std::exp(c.log_inside(2, 2, 1)) == doctest::Approx(0.6));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i; j < 3; ++j) {
      double top = 0;
      for (double v : c.scaled(i, j)) top = std::max(top, v);
      CHECK(top == doctest::Approx(1.0));
    }
}

TEST_CASE("batch results do not depend on the thread count") {
  const TdPcfg g = random_td_pcfg(3, 4, 10, 6, 7);
  std::mt19937_64 rng(8);
  std::vector<Sentence> batch;
  for (int i = 0; i < 13; ++i) {
    const auto w = oracle::sentence(2 + i % 9, 10, rng);
    batch.emplace_back(w.begin(), w.end());
  }
  const auto one = batch_log_likelihood(g, batch, 1);
  const auto four = batch_log_likelihood(g, batch, 4);
  REQUIRE(one.size() == batch.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i] == four[i]);
    CHECK(one[i] == inside_factored(g, batch[i]).log_likelihood);
  }
  CHECK_THROWS(batch_log_likelihood(g, std::span<const Sentence>{}, 1));
}

TEST_CASE("the taped recursion matches the plain one") {
  std::mt19937_64 rng(9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TdPcfg g = random_td_pcfg(2 + seed % 2, 3, 5, 4, seed);
    const auto w = oracle::sentence(2 + seed, 5, rng);
    const Sentence s(w.begin(), w.end());
    ad::Tape<double> t;
    const TapeInside in = inside_on_tape(t, grammar_constants(t, g), s);
    CHECK(in.log_likelihood_value == doctest::Approx(inside_factored(g, s).log_likelihood).epsilon(1e-12));
    CHECK(t.value(in.log_likelihood)[0] == doctest::Approx(in.log_likelihood_value).epsilon(1e-12));
  }
}

TEST_CASE("taped log-likelihood gradients match finite differences") {
  const TdPcfg g = random_td_pcfg(2, 2, 3, 3, 12);
  const Sentence s{0, 2, 1, 1};
  auto as_array = [](const Matrix& m) {
    ad::Array<double> a(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    std::copy(m.data(), m.data() + m.size(), a.data());
    return a;
  };
  std::vector<ad::Array<double>> point{as_array(g.U), as_array(g.V), as_array(g.W),
                                       as_array(g.emission.transpose()), as_array(g.start.transpose())};
  const auto r = ad::finite_difference_check(
      [&](ad::Tape<double>& t, std::span<const ad::Var> x) {
        const GrammarVars vars{x[0], x[1], x[2], x[3], x[4], 2, 2};
        return inside_on_tape(t, vars, s).log_likelihood;
      },
      point, 1e-6);
  CHECK(r.max_rel_error < 1e-6);
}
