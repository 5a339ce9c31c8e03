#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tnpcfg/inside.hpp"
#include "tnpcfg/parameterizer.hpp"

namespace tnpcfg {

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.75;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 4;
  std::size_t max_epochs = 10;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  /// Sentences are grouped into buckets of this many length values before batching.
  std::size_t length_bucket = 1;
  /// Global gradient-norm clip; 0 disables it.
  double clip_norm = 0.0;
  std::size_t threads = 1;

  /// Throws std::invalid_argument when a rate is outside (0, 1) or batch is 0.
  /// A learning rate of exactly 0 is accepted so a frozen run can be checked.
  void validate() const;
};

template <typename Real>
struct AdamState {
  std::vector<ad::Array<Real>> first_moment;
  std::vector<ad::Array<Real>> second_moment;
  std::uint64_t step = 0;
};

template <typename Real>
AdamState<Real> make_adam_state(const NeuralParams<Real>& params);

/// Bias-corrected Adam update from the gradients currently held in `params`.
template <typename Real>
void adam_step(NeuralParams<Real>& params, AdamState<Real>& state, const TrainConfig& config);

/// Summed negative log-likelihood of `batch` recorded on a single tape from
/// parameter leaves in Slot order. Used for gradient checks.
template <typename Real>
ad::Var nll_on_tape(ad::Tape<Real>& tape, const ModelConfig& config, std::span<const ad::Var> leaves,
                    std::span<const Sentence> batch);

/// Thrown when a sentence has zero probability during training.
class ZeroProbabilityError : public std::runtime_error {
 public:
  ZeroProbabilityError(std::size_t index, const std::string& what) : std::runtime_error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Loss = -sum over the batch of log p(w) (summed, not averaged). Adds the
/// gradient into the params' gradient buffers; callers zero them first.
///
/// The grammar is emitted once; each sentence runs on its own tape (in
/// parallel when threads > 1) and the per-sentence grammar gradients are
/// reduced in sentence order before flowing back through the networks.
template <typename Real>
double nll_batch(NeuralParams<Real>& params, std::span<const Sentence> batch, std::size_t threads = 1);

/// exp(-sum log p(w) / total tokens). Throws std::invalid_argument on an
/// empty corpus or a sentence shorter than two words.
double perplexity(const TdPcfg& g, std::span<const Sentence> corpus, std::size_t threads = 1);

template <typename Real>
double perplexity(const NeuralParams<Real>& params, std::span<const Sentence> corpus, std::size_t threads = 1) {
  return perplexity(emit_td_pcfg(params), corpus, threads);
}

struct EpochRecord {
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  /// Mean per-sentence negative log-likelihood over accepted batches (NaN for epoch 0).
  double train_nll = 0.0;
  double dev_perplexity = 0.0;
  double wall_seconds = 0.0;
  /// Batches whose step was rejected because a sentence had zero probability.
  std::size_t skipped_batches = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

template <typename Real>
struct SeedRun {
  std::uint64_t seed = 0;
  NeuralParams<Real> best;
  std::size_t best_epoch = 0;
  double best_dev_perplexity = 0.0;
};

template <typename Real>
struct TrainResult {
  std::vector<SeedRun<Real>> runs;
  std::vector<EpochRecord> history;
};

/// For each seed: initialize, record the initial dev perplexity as epoch 0,
/// then train up to max_epochs keeping the parameters of the epoch with the
/// lowest dev perplexity. Deterministic given the seeds.
template <typename Real>
TrainResult<Real> train(const ModelConfig& model, const TrainConfig& config, std::span<const Sentence> train_corpus,
                        std::span<const Sentence> dev_corpus, const EpochCallback& on_epoch = {});

/// Batches for one epoch: indices grouped by length bucket, shuffled within
/// buckets, cut into batches, and batch order shuffled.
std::vector<std::vector<std::size_t>> make_batches(std::span<const Sentence> corpus, std::size_t batch_size,
                                                   std::size_t length_bucket, std::uint64_t seed);

}  // namespace tnpcfg
