#include "tnpcfg/trainer.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <random>
#include <stdexcept>
#include <thread>

namespace tnpcfg {

void TrainConfig::validate() const {
  auto open_unit = [](double x) { return x > 0.0 && x < 1.0; };
  if (!(learning_rate >= 0.0 && learning_rate < 1.0)) throw std::invalid_argument("learning rate must lie in [0, 1)");
  if (!open_unit(beta1)) throw std::invalid_argument("beta1 must lie in (0, 1)");
  if (!open_unit(beta2)) throw std::invalid_argument("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (length_bucket == 0) throw std::invalid_argument("length bucket must be at least 1");
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (clip_norm < 0.0) throw std::invalid_argument("clip norm must be non-negative");
}

template <typename Real>
AdamState<Real> make_adam_state(const NeuralParams<Real>& params) {
  AdamState<Real> state;
  for (const auto& p : params.parameters()) {
    state.first_moment.emplace_back(p.value.rows(), p.value.cols());
    state.second_moment.emplace_back(p.value.rows(), p.value.cols());
  }
  return state;
}

template <typename Real>
void adam_step(NeuralParams<Real>& params, AdamState<Real>& state, const TrainConfig& config) {
  auto& ps = params.parameters();
  if (state.first_moment.size() != ps.size()) throw StructuralError("optimizer state does not match parameters");
  double scale = 1.0;
  if (config.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : ps) {
      for (Real g : p.grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > config.clip_norm) scale = config.clip_norm / norm;
  }
  ++state.step;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (!m.same_shape(p.value) || !v.same_shape(p.value) || !p.grad.same_shape(p.value)) {
      throw StructuralError("optimizer state shape mismatch for " + p.name);
    }
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = static_cast<double>(p.grad[j]) * scale;
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * g;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * g * g;
      m[j] = static_cast<Real>(mj);
      v[j] = static_cast<Real>(vj);
      const double update = config.learning_rate * (mj / c1) / (std::sqrt(vj / c2) + config.epsilon);
      p.value[j] = static_cast<Real>(static_cast<double>(p.value[j]) - update);
    }
  }
}

template <typename Real>
ad::Var nll_on_tape(ad::Tape<Real>& tape, const ModelConfig& config, std::span<const ad::Var> leaves,
                    std::span<const Sentence> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const GrammarVars g = emit_grammar(tape, config, leaves);
  ad::Var total{};
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const TapeInside in = inside_on_tape(tape, g, batch[s]);
    total = s == 0 ? in.log_likelihood : ad::add(tape, total, in.log_likelihood);
  }
  return ad::scale(tape, total, Real(-1));
}

namespace {

constexpr std::size_t kGrammarArrays = 5;

template <typename Real>
std::array<ad::Var, kGrammarArrays> grammar_arrays(const GrammarVars& g) {
  return {g.U, g.V, g.W, g.emission_t, g.start};
}

// Gradient of log p(w) for one sentence with respect to the five grammar
// arrays, computed on a private tape.
template <typename Real>
struct SentenceGrad {
  std::array<ad::Array<Real>, kGrammarArrays> grads;
  double log_likelihood = kNegInf;
};

template <typename Real>
void sentence_gradient(const std::array<const ad::Array<Real>*, kGrammarArrays>& values, std::size_t n,
                       std::size_t p, const Sentence& sentence, SentenceGrad<Real>& out) {
  ad::Tape<Real> tape;
  std::array<ad::Var, kGrammarArrays> leaves;
  for (std::size_t a = 0; a < kGrammarArrays; ++a) {
    out.grads[a] = ad::Array<Real>(values[a]->rows(), values[a]->cols());
    leaves[a] = tape.parameter(*values[a], out.grads[a]);
  }
  const GrammarVars g{leaves[0], leaves[1], leaves[2], leaves[3], leaves[4], n, p};
  const TapeInside in = inside_on_tape(tape, g, sentence);
  out.log_likelihood = in.log_likelihood_value;
  if (std::isfinite(out.log_likelihood)) tape.backward(in.log_likelihood);
}

}  // namespace

template <typename Real>
double nll_batch(NeuralParams<Real>& params, std::span<const Sentence> batch, std::size_t threads) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  for (std::size_t s = 0; s < batch.size(); ++s) {
    if (batch[s].size() < 2) {
      throw std::invalid_argument("sentence " + std::to_string(s) + " of the batch is shorter than two words");
    }
  }
  ad::Tape<Real> master;
  const std::vector<ad::Var> leaves = register_parameters(master, params);
  const GrammarVars g = emit_grammar(master, params.config(), leaves);
  const auto arrays = grammar_arrays<Real>(g);
  std::array<const ad::Array<Real>*, kGrammarArrays> values;
  for (std::size_t a = 0; a < kGrammarArrays; ++a) values[a] = &master.value(arrays[a]);

  std::vector<SentenceGrad<Real>> per_sentence(batch.size());
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, batch.size());
  if (workers == 1) {
    for (std::size_t s = 0; s < batch.size(); ++s) sentence_gradient(values, g.n, g.p, batch[s], per_sentence[s]);
  } else {
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t s = w; s < batch.size(); s += workers) {
            sentence_gradient(values, g.n, g.p, batch[s], per_sentence[s]);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Ordered reduction keeps the result independent of the thread count.
  double loss = 0.0;
  std::array<ad::Array<Real>, kGrammarArrays> total;
  for (std::size_t a = 0; a < kGrammarArrays; ++a) total[a] = ad::Array<Real>(values[a]->rows(), values[a]->cols());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& sg = per_sentence[s];
    if (!std::isfinite(sg.log_likelihood)) {
      throw ZeroProbabilityError(s, "sentence " + std::to_string(s) + " of the batch has zero probability");
    }
    loss -= sg.log_likelihood;
    for (std::size_t a = 0; a < kGrammarArrays; ++a) {
      for (std::size_t i = 0; i < total[a].size(); ++i) total[a][i] -= sg.grads[a][i];
    }
  }

  // d loss / d theta = sum_X <d loss / d X, d X / d theta>, obtained by
  // backpropagating the linear surrogate sum_X <X, G_X> with G_X held fixed.
  ad::Var surrogate{};
  for (std::size_t a = 0; a < kGrammarArrays; ++a) {
    const ad::Var term = ad::sum_all(master, ad::hadamard(master, arrays[a], master.constant(std::move(total[a]))));
    surrogate = a == 0 ? term : ad::add(master, surrogate, term);
  }
  master.backward(surrogate);
  return loss;
}

double perplexity(const TdPcfg& g, std::span<const Sentence> corpus, std::size_t threads) {
  if (corpus.empty()) throw std::invalid_argument("perplexity of an empty corpus");
  std::size_t tokens = 0;
  for (const auto& s : corpus) {
    if (s.size() < 2) throw std::invalid_argument("perplexity requires sentences of at least two words");
    tokens += s.size();
  }
  const std::vector<double> ll = batch_log_likelihood(g, corpus, threads);
  double total = 0.0;
  for (double x : ll) total += x;
  return std::exp(-total / static_cast<double>(tokens));
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const Sentence> corpus, std::size_t batch_size,
                                                   std::size_t length_bucket, std::uint64_t seed) {
  if (batch_size == 0 || length_bucket == 0) throw std::invalid_argument("batch size and bucket must be positive");
  std::mt19937_64 rng(seed);
  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < corpus.size(); ++i) buckets[corpus[i].size() / length_bucket].push_back(i);
  std::vector<std::vector<std::size_t>> batches;
  for (auto& [key, idx] : buckets) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t b = 0; b < idx.size(); b += batch_size) {
      batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(b),
                           idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), b + batch_size)));
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

template <typename Real>
TrainResult<Real> train(const ModelConfig& model, const TrainConfig& config, std::span<const Sentence> train_corpus,
                        std::span<const Sentence> dev_corpus, const EpochCallback& on_epoch) {
  config.validate();
  model.validate();
  if (train_corpus.empty()) throw std::invalid_argument("empty training corpus");
  if (dev_corpus.empty()) throw std::invalid_argument("empty development corpus");
  for (const auto& s : train_corpus) {
    if (s.size() < 2) throw std::invalid_argument("training sentences must have at least two words");
  }

  using Clock = std::chrono::steady_clock;
  TrainResult<Real> result;
  for (std::uint64_t seed : config.seeds) {
    ModelConfig seeded = model;
    seeded.seed = seed;
    NeuralParams<Real> params = NeuralParams<Real>::initialize(seeded);
    AdamState<Real> state = make_adam_state(params);

    SeedRun<Real> run{seed, params, 0, perplexity(params, dev_corpus, config.threads)};
    result.history.push_back({0, seed, std::nan(""), run.best_dev_perplexity, 0.0, 0});
    if (on_epoch) on_epoch(result.history.back());

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
      const auto start = Clock::now();
      const auto batches = make_batches(train_corpus, config.batch_size, config.length_bucket,
                                        seed * 0x9E3779B97F4A7C15ULL + epoch);
      double nll = 0.0;
      std::size_t skipped = 0, counted = 0;
      std::vector<Sentence> batch;
      for (const auto& idx : batches) {
        batch.clear();
        for (std::size_t i : idx) batch.push_back(train_corpus[i]);
        params.zero_grad();
        try {
          nll += nll_batch(params, std::span<const Sentence>(batch), config.threads);
          counted += batch.size();
        } catch (const ZeroProbabilityError&) {
          // Underflow in the emitted grammar; reject the step rather than
          // repairing probabilities.
          ++skipped;
          continue;
        }
        adam_step(params, state, config);
      }
      const double dev = perplexity(params, dev_corpus, config.threads);
      const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
      const double mean_nll = counted ? nll / static_cast<double>(counted) : std::nan("");
      result.history.push_back({epoch, seed, mean_nll, dev, seconds, skipped});
      if (on_epoch) on_epoch(result.history.back());
      if (dev < run.best_dev_perplexity) {
        run.best = params;
        run.best_epoch = epoch;
        run.best_dev_perplexity = dev;
      }
    }
    result.runs.push_back(std::move(run));
  }
  return result;
}

#define TNPCFG_INSTANTIATE(Real)                                                                                   \
  template AdamState<Real> make_adam_state<Real>(const NeuralParams<Real>&);                                       \
  template void adam_step<Real>(NeuralParams<Real>&, AdamState<Real>&, const TrainConfig&);                        \
  template ad::Var nll_on_tape<Real>(ad::Tape<Real>&, const ModelConfig&, std::span<const ad::Var>,                \
                                     std::span<const Sentence>);                                                   \
  template double nll_batch<Real>(NeuralParams<Real>&, std::span<const Sentence>, std::size_t);                    \
  template TrainResult<Real> train<Real>(const ModelConfig&, const TrainConfig&, std::span<const Sentence>,        \
                                         std::span<const Sentence>, const EpochCallback&);

TNPCFG_INSTANTIATE(float)
TNPCFG_INSTANTIATE(double)

}  // namespace tnpcfg
