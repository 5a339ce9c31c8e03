#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tnpcfg/autodiff.hpp"
#include "tnpcfg/grammar.hpp"
#include "tnpcfg/inside.hpp"

namespace tnpcfg {

enum class Precision { kSingle, kDouble };

std::string to_string(Precision p);
Precision parse_precision(const std::string& s);

struct ModelConfig {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t q = 0;
  std::size_t d = 0;
  std::size_t k = 256;
  Precision dtype = Precision::kSingle;
  std::uint64_t seed = 0;
  std::string activation = "relu";

  std::size_t m() const { return n + p; }

  /// n = p / 2, d = p when p > 200 and 200 otherwise, k = 256.
  static ModelConfig with_defaults(std::size_t p, std::size_t q);

  /// Throws std::invalid_argument on zero sizes or an activation other than relu.
  void validate() const;
};

/// Exact number of scalar parameters of the network for the given sizes.
std::size_t parameter_count(std::size_t n, std::size_t p, std::size_t q, std::size_t d, std::size_t k);
inline std::size_t parameter_count(const ModelConfig& c) { return parameter_count(c.n, c.p, c.q, c.d, c.k); }

/// Stable parameter slots. Factor heads u/v/w each have a two-layer network;
/// the preterminal (t) and start (s) encoders are residual two-layer
/// perceptrons.
enum class Slot : std::size_t {
  kSymbolEmbedding,  // E_s, m x k, shared by the three factor heads
  kU1, kUb1, kU2, kUb2,
  kV1, kVb1, kV2, kVb2,
  kW1, kWb1, kW2, kWb2,
  kPreterminalEmbedding,  // w_T, p x k
  kTerminalEmbedding,     // u_w, q x k
  kT1, kTb1, kT2, kTb2,
  kStartEmbedding,        // w_S, 1 x k
  kNonterminalEmbedding,  // u_A, n x k
  kS1, kSb1, kS2, kSb2,
  kCount
};

inline constexpr std::size_t kSlotCount = static_cast<std::size_t>(Slot::kCount);

/// Checkpoint array name for a slot.
const char* slot_name(Slot s);

template <typename Real>
struct Parameter {
  std::string name;
  ad::Array<Real> value;
  ad::Array<Real> grad;
};

template <typename Real>
class NeuralParams {
 public:
  NeuralParams() = default;

  /// Embeddings from a unit Gaussian; linear weights Gaussian with standard
  /// deviation 1/sqrt(fan_in); biases zero.
  static NeuralParams initialize(const ModelConfig& config);
  /// All-zero weights and embeddings.
  static NeuralParams zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter<Real>>& parameters() { return params_; }
  const std::vector<Parameter<Real>>& parameters() const { return params_; }
  Parameter<Real>& operator[](Slot s) { return params_[static_cast<std::size_t>(s)]; }
  const Parameter<Real>& operator[](Slot s) const { return params_[static_cast<std::size_t>(s)]; }

  void zero_grad();
  std::size_t count() const;

  /// Builds parameters from named arrays, checking every shape against config.
  static NeuralParams from_arrays(const ModelConfig& config, std::vector<ad::Array<Real>> values);

 private:
  explicit NeuralParams(const ModelConfig& config);

  ModelConfig config_;
  std::vector<Parameter<Real>> params_;
};

/// Registers every parameter on `tape` as a gradient-accumulating leaf.
template <typename Real>
std::vector<ad::Var> register_parameters(ad::Tape<Real>& tape, NeuralParams<Real>& params);

/// Emits U, V, W, Q (transposed, q x p) and r on `tape` from parameter leaves
/// laid out in Slot order.
template <typename Real>
GrammarVars emit_grammar(ad::Tape<Real>& tape, const ModelConfig& config, std::span<const ad::Var> leaves);

struct BinaryFactors {
  Matrix U;
  Matrix V;
  Matrix W;
};

template <typename Real>
BinaryFactors emit_binary_factors(const NeuralParams<Real>& params);
/// p x q, rows sum to one.
template <typename Real>
Matrix emit_preterminal_matrix(const NeuralParams<Real>& params);
/// Length n, sums to one.
template <typename Real>
Vector emit_start_vector(const NeuralParams<Real>& params);
/// The full decomposed grammar in double precision.
template <typename Real>
TdPcfg emit_td_pcfg(const NeuralParams<Real>& params);

/// Converts between precisions, preserving config and values.
template <typename To, typename From>
NeuralParams<To> convert(const NeuralParams<From>& params);

}  // namespace tnpcfg
