#include "tnpcfg/parameterizer.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace tnpcfg {

std::string to_string(Precision p) { return p == Precision::kSingle ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32" || s == "single" || s == "float") return Precision::kSingle;
  if (s == "f64" || s == "double") return Precision::kDouble;
  throw std::invalid_argument("unknown precision '" + s + "' (expected f32 or f64)");
}

ModelConfig ModelConfig::with_defaults(std::size_t p, std::size_t q) {
  ModelConfig c;
  c.p = p;
  c.n = p / 2;
  c.q = q;
  c.d = p > 200 ? p : 200;
  c.k = 256;
  return c;
}

void ModelConfig::validate() const {
  if (n == 0 || p == 0 || q == 0 || d == 0 || k == 0) {
    throw std::invalid_argument("model sizes n, p, q, d, k must all be positive");
  }
  if (activation != "relu") {
    throw std::invalid_argument("activation '" + activation +
                                "' is not supported: activations other than ReLU were found to degrade results");
  }
}

std::size_t parameter_count(std::size_t n, std::size_t p, std::size_t q, std::size_t d, std::size_t k) {
  const std::size_t m = n + p;
  const std::size_t factor_head = k * k + k + k * d + d;
  const std::size_t residual_mlp = 2 * (k * k + k);
  return m * k + 3 * factor_head + p * k + q * k + residual_mlp + k + n * k + residual_mlp;
}

namespace {

struct SlotInfo {
  const char* name;
  // Shape as functions of the config.
  std::size_t (*rows)(const ModelConfig&);
  std::size_t (*cols)(const ModelConfig&);
  bool embedding;
};

std::size_t one(const ModelConfig&) { return 1; }
std::size_t k_of(const ModelConfig& c) { return c.k; }
std::size_t d_of(const ModelConfig& c) { return c.d; }
std::size_t m_of(const ModelConfig& c) { return c.m(); }
std::size_t n_of(const ModelConfig& c) { return c.n; }
std::size_t p_of(const ModelConfig& c) { return c.p; }
std::size_t q_of(const ModelConfig& c) { return c.q; }

constexpr SlotInfo kSlots[kSlotCount] = {
    {"E_s", m_of, k_of, true},
    {"M_u1", k_of, k_of, false}, {"b_u1", one, k_of, false}, {"M_u2", k_of, d_of, false}, {"b_u2", one, d_of, false},
    {"M_v1", k_of, k_of, false}, {"b_v1", one, k_of, false}, {"M_v2", k_of, d_of, false}, {"b_v2", one, d_of, false},
    {"M_w1", k_of, k_of, false}, {"b_w1", one, k_of, false}, {"M_w2", k_of, d_of, false}, {"b_w2", one, d_of, false},
    {"w_T", p_of, k_of, true},
    {"u_w", q_of, k_of, true},
    {"M_t1", k_of, k_of, false}, {"b_t1", one, k_of, false}, {"M_t2", k_of, k_of, false}, {"b_t2", one, k_of, false},
    {"w_S", one, k_of, true},
    {"u_A", n_of, k_of, true},
    {"M_s1", k_of, k_of, false}, {"b_s1", one, k_of, false}, {"M_s2", k_of, k_of, false}, {"b_s2", one, k_of, false},
};

bool is_bias(std::size_t slot) { return kSlots[slot].name[0] == 'b'; }

}  // namespace

const char* slot_name(Slot s) { return kSlots[static_cast<std::size_t>(s)].name; }

template <typename Real>
NeuralParams<Real>::NeuralParams(const ModelConfig& config) : config_(config) {
  config_.validate();
  params_.reserve(kSlotCount);
  for (const auto& info : kSlots) {
    const std::size_t rows = info.rows(config_);
    const std::size_t cols = info.cols(config_);
    params_.push_back({info.name, ad::Array<Real>(rows, cols), ad::Array<Real>(rows, cols)});
  }
}

template <typename Real>
NeuralParams<Real> NeuralParams<Real>::zeros(const ModelConfig& config) {
  return NeuralParams(config);
}

template <typename Real>
NeuralParams<Real> NeuralParams<Real>::initialize(const ModelConfig& config) {
  NeuralParams params(config);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gaussian(0.0, 1.0);
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    if (is_bias(s)) continue;
    auto& value = params.params_[s].value;
    // Linear weights are stored fan_in x fan_out.
    const double stddev = kSlots[s].embedding ? 1.0 : 1.0 / std::sqrt(static_cast<double>(value.rows()));
    for (auto& x : value.values()) x = static_cast<Real>(stddev * gaussian(rng));
  }
  return params;
}

template <typename Real>
NeuralParams<Real> NeuralParams<Real>::from_arrays(const ModelConfig& config, std::vector<ad::Array<Real>> values) {
  NeuralParams params(config);
  if (values.size() != kSlotCount) throw StructuralError("expected " + std::to_string(kSlotCount) + " parameter arrays");
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    if (!values[s].same_shape(params.params_[s].value)) {
      throw StructuralError(std::string("parameter ") + kSlots[s].name + " has the wrong shape");
    }
    params.params_[s].value = std::move(values[s]);
  }
  return params;
}

template <typename Real>
void NeuralParams<Real>::zero_grad() {
  for (auto& p : params_) p.grad.fill(Real(0));
}

template <typename Real>
std::size_t NeuralParams<Real>::count() const {
  return std::accumulate(params_.begin(), params_.end(), std::size_t{0},
                         [](std::size_t acc, const Parameter<Real>& p) { return acc + p.value.size(); });
}

template <typename Real>
std::vector<ad::Var> register_parameters(ad::Tape<Real>& tape, NeuralParams<Real>& params) {
  std::vector<ad::Var> leaves;
  leaves.reserve(kSlotCount);
  for (auto& p : params.parameters()) leaves.push_back(tape.parameter(p.value, p.grad));
  return leaves;
}

namespace {

template <typename Real>
ad::Var leaf(std::span<const ad::Var> leaves, Slot s) {
  return leaves[static_cast<std::size_t>(s)];
}

// relu(x M1 + b1) M2 + b2
template <typename Real>
ad::Var two_layer(ad::Tape<Real>& t, ad::Var x, std::span<const ad::Var> leaves, Slot first) {
  const auto base = static_cast<std::size_t>(first);
  ad::Var h = ad::relu(t, ad::add(t, ad::matmul(t, x, leaves[base]), leaves[base + 1]));
  return ad::add(t, ad::matmul(t, h, leaves[base + 2]), leaves[base + 3]);
}

// x + relu(relu(x M1 + b1) M2 + b2)
template <typename Real>
ad::Var residual(ad::Tape<Real>& t, ad::Var x, std::span<const ad::Var> leaves, Slot first) {
  return ad::add(t, x, ad::relu(t, two_layer(t, x, leaves, first)));
}

}  // namespace

template <typename Real>
GrammarVars emit_grammar(ad::Tape<Real>& tape, const ModelConfig& config, std::span<const ad::Var> leaves) {
  if (leaves.size() != kSlotCount) throw StructuralError("expected one leaf per parameter slot");
  GrammarVars g;
  g.n = config.n;
  g.p = config.p;
  const ad::Var symbols = leaf<Real>(leaves, Slot::kSymbolEmbedding);
  std::vector<std::size_t> nt_rows(config.n);
  std::iota(nt_rows.begin(), nt_rows.end(), 0);
  const ad::Var nonterminals = ad::gather_rows(tape, symbols, std::span<const std::size_t>(nt_rows));
  g.U = ad::softmax(tape, two_layer(tape, nonterminals, leaves, Slot::kU1), 1);
  g.V = ad::softmax(tape, two_layer(tape, symbols, leaves, Slot::kV1), 0);
  g.W = ad::softmax(tape, two_layer(tape, symbols, leaves, Slot::kW1), 0);

  const ad::Var tags = residual(tape, leaf<Real>(leaves, Slot::kPreterminalEmbedding), leaves, Slot::kT1);  // p x k
  const ad::Var word_logits =
      ad::matmul(tape, leaf<Real>(leaves, Slot::kTerminalEmbedding), tags, ad::Trans::kNo, ad::Trans::kYes);  // q x p
  g.emission_t = ad::softmax(tape, word_logits, 0);

  const ad::Var root = residual(tape, leaf<Real>(leaves, Slot::kStartEmbedding), leaves, Slot::kS1);  // 1 x k
  const ad::Var start_logits =
      ad::matmul(tape, root, leaf<Real>(leaves, Slot::kNonterminalEmbedding), ad::Trans::kNo, ad::Trans::kYes);  // 1 x n
  g.start = ad::softmax(tape, start_logits, 1);
  return g;
}

namespace {

template <typename Real>
Matrix to_matrix(const ad::Array<Real>& a) {
  Matrix out(static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = static_cast<double>(a[i]);
  return out;
}

template <typename Real>
struct Emitted {
  ad::Tape<Real> tape;
  GrammarVars vars;
};

template <typename Real>
void emit_constants(const NeuralParams<Real>& params, Emitted<Real>& out) {
  std::vector<ad::Var> leaves;
  leaves.reserve(kSlotCount);
  for (const auto& p : params.parameters()) leaves.push_back(out.tape.constant(p.value));
  out.vars = emit_grammar(out.tape, params.config(), leaves);
}

}  // namespace

template <typename Real>
BinaryFactors emit_binary_factors(const NeuralParams<Real>& params) {
  Emitted<Real> e;
  emit_constants(params, e);
  return {to_matrix(e.tape.value(e.vars.U)), to_matrix(e.tape.value(e.vars.V)), to_matrix(e.tape.value(e.vars.W))};
}

template <typename Real>
Matrix emit_preterminal_matrix(const NeuralParams<Real>& params) {
  Emitted<Real> e;
  emit_constants(params, e);
  return to_matrix(e.tape.value(e.vars.emission_t)).transpose();
}

template <typename Real>
Vector emit_start_vector(const NeuralParams<Real>& params) {
  Emitted<Real> e;
  emit_constants(params, e);
  return to_matrix(e.tape.value(e.vars.start)).row(0).transpose();
}

template <typename Real>
TdPcfg emit_td_pcfg(const NeuralParams<Real>& params) {
  Emitted<Real> e;
  emit_constants(params, e);
  TdPcfg g;
  g.U = to_matrix(e.tape.value(e.vars.U));
  g.V = to_matrix(e.tape.value(e.vars.V));
  g.W = to_matrix(e.tape.value(e.vars.W));
  g.emission = to_matrix(e.tape.value(e.vars.emission_t)).transpose();
  g.start = to_matrix(e.tape.value(e.vars.start)).row(0).transpose();
  return g;
}

template <typename To, typename From>
NeuralParams<To> convert(const NeuralParams<From>& params) {
  std::vector<ad::Array<To>> values;
  values.reserve(kSlotCount);
  for (const auto& p : params.parameters()) {
    std::vector<To> data(p.value.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<To>(p.value[i]);
    values.emplace_back(p.value.rows(), p.value.cols(), std::move(data));
  }
  return NeuralParams<To>::from_arrays(params.config(), std::move(values));
}

#define TNPCFG_INSTANTIATE(Real)                                                                              \
  template class NeuralParams<Real>;                                                                          \
  template std::vector<ad::Var> register_parameters<Real>(ad::Tape<Real>&, NeuralParams<Real>&);              \
  template GrammarVars emit_grammar<Real>(ad::Tape<Real>&, const ModelConfig&, std::span<const ad::Var>);      \
  template BinaryFactors emit_binary_factors<Real>(const NeuralParams<Real>&);                                \
  template Matrix emit_preterminal_matrix<Real>(const NeuralParams<Real>&);                                   \
  template Vector emit_start_vector<Real>(const NeuralParams<Real>&);                                         \
  template TdPcfg emit_td_pcfg<Real>(const NeuralParams<Real>&);

TNPCFG_INSTANTIATE(float)
TNPCFG_INSTANTIATE(double)

#undef TNPCFG_INSTANTIATE

template NeuralParams<float> convert<float, double>(const NeuralParams<double>&);
template NeuralParams<double> convert<double, float>(const NeuralParams<float>&);
template NeuralParams<float> convert<float, float>(const NeuralParams<float>&);
template NeuralParams<double> convert<double, double>(const NeuralParams<double>&);

}  // namespace tnpcfg
