#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tnpcfg/evaluator.hpp"
#include "tnpcfg/trainer.hpp"

namespace tnpcfg {

struct Decoded {
  /// Labeled MBR tree; only the root span (or nothing) when decoding failed.
  ParseTree tree;
  double log_likelihood = kNegInf;
  /// Why the sentence could not be decoded, empty on success.
  std::string error;
};

/// MBR parse with argmax labels for every sentence. Results are in input
/// order and do not depend on the thread count.
std::vector<Decoded> decode_corpus(const TdPcfg& g, std::span<const Sentence> sentences, std::size_t threads = 1);

std::vector<ParseTree> trees_of(std::span<const Decoded> decoded);

enum class InsidePath { kDense, kFactored };
std::string to_string(InsidePath path);

struct BenchPoint {
  InsidePath path = InsidePath::kFactored;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t length = 0;
  std::size_t repetitions = 0;
  double median_seconds = 0.0;
};

/// Times one inside pass on a random sentence for each size in `ms`. The
/// grammar has n = m / 3 nonterminals and, for the factored path, rank d = m.
std::vector<BenchPoint> bench_inside(InsidePath path, std::span<const std::size_t> ms, std::size_t length,
                                     std::size_t repetitions, std::uint64_t seed);

/// Least-squares slope of log y against log x.
double loglog_slope(std::span<const double> x, std::span<const double> y);
double fitted_exponent(std::span<const BenchPoint> points);

struct SweepSeed {
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  double initial_perplexity = 0.0;
  double perplexity = 0.0;
  double f1 = 0.0;
};

struct SweepRow {
  std::size_t p = 0;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t parameters = 0;
  std::vector<SweepSeed> seeds;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
  double median_perplexity = 0.0;
};

struct SweepData {
  std::span<const Sentence> train;
  std::span<const Sentence> dev;
  /// Sentences and gold trees scored for F1.
  std::span<const Sentence> test;
  std::span<const GoldTree> gold;
};

/// Trains every seed for each preterminal count with n = p / 2, reporting
/// dev perplexity of the best epoch and mean MBR F1 on the test trees. A
/// zero `base.d` means the default rank rule; `base.q` must be set.
std::vector<SweepRow> sweep(const ModelConfig& base, const TrainConfig& config, std::span<const std::size_t> ps,
                            const SweepData& data, const EpochCallback& on_epoch = {});

double median(std::vector<double> xs);

}  // namespace tnpcfg
