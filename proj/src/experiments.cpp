#include "tnpcfg/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <random>
#include <stdexcept>
#include <thread>

namespace tnpcfg {

namespace {

Decoded decode_one(const TdPcfg& g, const Sentence& s) {
  Decoded out;
  out.tree = trivial_tree(s.size());
  if (s.size() < 2) {
    out.error = "sentence has fewer than two words";
    return out;
  }
  const InsideResult inside = inside_factored(g, s);
  out.log_likelihood = inside.log_likelihood;
  if (!std::isfinite(inside.log_likelihood)) {
    out.error = inside.diagnostic.empty() ? "sentence has zero probability" : inside.diagnostic;
    return out;
  }
  out.tree = label_spans(g, s, mbr_parse(span_posteriors(g, s)));
  return out;
}

template <typename Real>
void sweep_row(const ModelConfig& model, const TrainConfig& config, const SweepData& data,
               const EpochCallback& on_epoch, SweepRow& row) {
  const TrainResult<Real> result = train<Real>(model, config, data.train, data.dev, on_epoch);
  for (const auto& run : result.runs) {
    SweepSeed s;
    s.seed = run.seed;
    s.best_epoch = run.best_epoch;
    s.perplexity = run.best_dev_perplexity;
    for (const auto& h : result.history) {
      if (h.seed == run.seed && h.epoch == 0) s.initial_perplexity = h.dev_perplexity;
    }
    const auto decoded = decode_corpus(emit_td_pcfg(run.best), data.test, config.threads);
    s.f1 = corpus_f1(data.gold, trees_of(decoded)).mean;
    row.seeds.push_back(s);
  }
}

}  // namespace

std::vector<Decoded> decode_corpus(const TdPcfg& g, std::span<const Sentence> sentences, std::size_t threads) {
  std::vector<Decoded> out(sentences.size());
  if (sentences.empty()) return out;
  threads = std::clamp<std::size_t>(threads, 1, sentences.size());
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < sentences.size(); i += threads) out[i] = decode_one(g, sentences[i]);
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

std::vector<ParseTree> trees_of(std::span<const Decoded> decoded) {
  std::vector<ParseTree> out;
  out.reserve(decoded.size());
  for (const auto& d : decoded) out.push_back(d.tree);
  return out;
}

std::string to_string(InsidePath path) { return path == InsidePath::kDense ? "dense" : "factored"; }

std::vector<BenchPoint> bench_inside(InsidePath path, std::span<const std::size_t> ms, std::size_t length,
                                     std::size_t repetitions, std::uint64_t seed) {
  using Clock = std::chrono::steady_clock;
  if (repetitions == 0) throw std::invalid_argument("repetitions must be positive");
  if (length < 2) throw std::invalid_argument("benchmark sentences need at least two words");
  constexpr std::size_t kVocabulary = 50;
  std::vector<BenchPoint> out;
  for (std::size_t m : ms) {
    if (m < 3) throw std::invalid_argument("benchmark grammars need m >= 3");
    BenchPoint point{path, m, m / 3, m, length, repetitions, 0.0};
    const TdPcfg g = random_td_pcfg(point.n, m - point.n, kVocabulary, point.d, seed + m);
    std::mt19937_64 rng(seed);
    Sentence s(length);
    for (auto& w : s) w = static_cast<WordId>(rng() % kVocabulary);

    std::function<double()> run;
    DensePcfg dense;
    if (path == InsidePath::kDense) {
      dense = reconstruct_tensor(g);
      point.d = 0;
      run = [&] { return inside_dense(dense, s).log_likelihood; };
    } else {
      run = [&] { return inside_factored(g, s).log_likelihood; };
    }
    if (!std::isfinite(run())) throw std::runtime_error("benchmark sentence has zero probability");
    std::vector<double> times;
    for (std::size_t r = 0; r < repetitions; ++r) {
      const auto start = Clock::now();
      const double ll = run();
      times.push_back(std::chrono::duration<double>(Clock::now() - start).count());
      if (!std::isfinite(ll)) throw std::runtime_error("benchmark sentence has zero probability");
    }
    point.median_seconds = median(times);
    out.push_back(point);
  }
  return out;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("slope needs two or more paired points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0 || y[i] <= 0) throw std::invalid_argument("log-log fit needs positive values");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw std::invalid_argument("log-log fit needs distinct x values");
  return sxy / sxx;
}

double fitted_exponent(std::span<const BenchPoint> points) {
  std::vector<double> x, y;
  for (const auto& p : points) {
    x.push_back(static_cast<double>(p.m));
    y.push_back(p.median_seconds);
  }
  return loglog_slope(x, y);
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(xs.begin(), xs.end());
  const std::size_t h = xs.size() / 2;
  return xs.size() % 2 ? xs[h] : 0.5 * (xs[h - 1] + xs[h]);
}

std::vector<SweepRow> sweep(const ModelConfig& base, const TrainConfig& config, std::span<const std::size_t> ps,
                            const SweepData& data, const EpochCallback& on_epoch) {
  if (data.test.size() != data.gold.size()) throw std::invalid_argument("test sentences and gold trees differ in count");
  std::vector<SweepRow> rows;
  for (std::size_t p : ps) {
    if (p < 2) throw std::invalid_argument("sweep needs p >= 2 so that n = p / 2 is positive");
    ModelConfig model = base;
    model.p = p;
    model.n = p / 2;
    model.d = base.d ? base.d : ModelConfig::with_defaults(p, base.q).d;
    SweepRow row{p, model.n, model.d, parameter_count(model), {}, 0, 0, 0};
    if (model.dtype == Precision::kSingle) {
      sweep_row<float>(model, config, data, on_epoch, row);
    } else {
      sweep_row<double>(model, config, data, on_epoch, row);
    }
    std::vector<double> f1, ppl;
    for (const auto& s : row.seeds) {
      f1.push_back(s.f1);
      ppl.push_back(s.perplexity);
    }
    row.mean_f1 = mean(f1);
    row.std_f1 = biased_std(f1);
    row.median_perplexity = median(ppl);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tnpcfg
