#include "tnpcfg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tnpcfg {

namespace {

constexpr const char* kMagic = "tnpcfg-checkpoint";

template <typename Bits>
void put_le(std::ostream& out, Bits bits) {
  char bytes[sizeof(Bits)];
  for (std::size_t i = 0; i < sizeof(Bits); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(Bits));
}

template <typename Bits>
Bits get_le(std::istream& in) {
  unsigned char bytes[sizeof(Bits)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(Bits))) throw std::runtime_error("checkpoint is truncated");
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(Bits); ++i) bits |= static_cast<Bits>(bytes[i]) << (8 * i);
  return bits;
}

std::string read_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint is truncated");
  return line;
}

NamedArray from_matrix(const std::string& name, const Matrix& m) {
  NamedArray a{name, static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), Precision::kDouble, {}};
  a.data.assign(m.data(), m.data() + m.size());
  return a;
}

Matrix to_matrix(const NamedArray& a) {
  Matrix m(static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols));
  std::copy(a.data.begin(), a.data.end(), m.data());
  return m;
}

std::size_t to_size(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  const unsigned long long v = std::stoull(value, &used);
  if (used != value.size()) throw std::runtime_error("checkpoint field " + key + " is not an integer: " + value);
  return static_cast<std::size_t>(v);
}

void add_grammar(Checkpoint& ckpt, const TdPcfg& g) {
  ckpt.arrays.push_back(from_matrix("U", g.U));
  ckpt.arrays.push_back(from_matrix("V", g.V));
  ckpt.arrays.push_back(from_matrix("W", g.W));
  ckpt.arrays.push_back(from_matrix("Q", g.emission));
  ckpt.arrays.push_back(from_matrix("r", g.start.transpose()));
}

}  // namespace

const NamedArray& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw std::runtime_error("checkpoint has no array named " + name);
}

bool Checkpoint::has_array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

const std::string& Checkpoint::get(const std::string& key) const {
  const auto it = manifest.find(key);
  if (it == manifest.end()) throw std::runtime_error("checkpoint manifest lacks " + key);
  return it->second;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kMagic << '\n';
  for (const auto& [key, value] : ckpt.manifest) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw std::invalid_argument("manifest entry " + key + " cannot be stored");
    }
    out << key << '=' << value << '\n';
  }
  out << "vocab_size=" << ckpt.vocabulary.size() << "\n\n";
  for (const auto& w : ckpt.vocabulary) out << w << '\n';
  out << "arrays=" << ckpt.arrays.size() << '\n';
  for (const auto& a : ckpt.arrays) {
    if (a.data.size() != a.rows * a.cols) throw std::invalid_argument("array " + a.name + " has the wrong size");
    out << a.name << ' ' << to_string(a.dtype) << ' ' << a.rows << ' ' << a.cols << '\n';
    for (double v : a.data) {
      if (a.dtype == Precision::kSingle) {
        put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  if (read_line(in) != kMagic) throw std::runtime_error(path.string() + " is not a checkpoint");
  Checkpoint ckpt;
  std::size_t vocab_size = 0;
  for (std::string line = read_line(in); !line.empty(); line = read_line(in)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed manifest line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "vocab_size") {
      vocab_size = to_size(key, value);
    } else {
      ckpt.manifest[key] = value;
    }
  }
  if (ckpt.get("schema_version") != std::to_string(kCheckpointSchema)) {
    throw std::runtime_error("unsupported checkpoint schema " + ckpt.get("schema_version"));
  }
  for (std::size_t i = 0; i < vocab_size; ++i) ckpt.vocabulary.push_back(read_line(in));
  const std::string count_line = read_line(in);
  if (!count_line.starts_with("arrays=")) throw std::runtime_error("malformed array count: " + count_line);
  const std::size_t count = to_size("arrays", count_line.substr(7));
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream header(read_line(in));
    NamedArray a;
    std::string dtype;
    if (!(header >> a.name >> dtype >> a.rows >> a.cols)) throw std::runtime_error("malformed array header");
    a.dtype = parse_precision(dtype);
    a.data.resize(a.rows * a.cols);
    for (auto& v : a.data) {
      v = a.dtype == Precision::kSingle ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in)))
                                        : std::bit_cast<double>(get_le<std::uint64_t>(in));
    }
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

template <typename Real>
Checkpoint make_checkpoint(const NeuralParams<Real>& params, const Vocabulary& vocab,
                           const std::map<std::string, std::string>& extra) {
  const ModelConfig& c = params.config();
  if (vocab.size() != c.q) throw std::invalid_argument("vocabulary size does not match the model");
  Checkpoint ckpt;
  ckpt.manifest = extra;
  ckpt.manifest["schema_version"] = std::to_string(kCheckpointSchema);
  ckpt.manifest["kind"] = "neural";
  ckpt.manifest["n"] = std::to_string(c.n);
  ckpt.manifest["p"] = std::to_string(c.p);
  ckpt.manifest["q"] = std::to_string(c.q);
  ckpt.manifest["d"] = std::to_string(c.d);
  ckpt.manifest["k"] = std::to_string(c.k);
  ckpt.manifest["dtype"] = to_string(c.dtype);
  ckpt.manifest["seed"] = std::to_string(c.seed);
  ckpt.manifest["activation"] = c.activation;
  ckpt.vocabulary = vocab.words();
  add_grammar(ckpt, emit_td_pcfg(params));
  const Precision dtype = std::is_same_v<Real, float> ? Precision::kSingle : Precision::kDouble;
  for (const auto& p : params.parameters()) {
    NamedArray a{p.name, p.value.rows(), p.value.cols(), dtype, {}};
    for (Real v : p.value.values()) a.data.push_back(static_cast<double>(v));
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

Checkpoint make_grammar_checkpoint(const TdPcfg& g, const Vocabulary& vocab,
                                   const std::map<std::string, std::string>& extra) {
  if (vocab.size() != g.q()) throw std::invalid_argument("vocabulary size does not match the grammar");
  Checkpoint ckpt;
  ckpt.manifest = extra;
  ckpt.manifest["schema_version"] = std::to_string(kCheckpointSchema);
  ckpt.manifest["kind"] = "grammar";
  ckpt.manifest["n"] = std::to_string(g.n());
  ckpt.manifest["p"] = std::to_string(g.p());
  ckpt.manifest["q"] = std::to_string(g.q());
  ckpt.manifest["d"] = std::to_string(g.rank());
  ckpt.manifest["dtype"] = "f64";
  ckpt.vocabulary = vocab.words();
  add_grammar(ckpt, g);
  return ckpt;
}

ModelConfig model_config(const Checkpoint& ckpt) {
  ModelConfig c;
  c.n = to_size("n", ckpt.get("n"));
  c.p = to_size("p", ckpt.get("p"));
  c.q = to_size("q", ckpt.get("q"));
  c.d = to_size("d", ckpt.get("d"));
  c.k = ckpt.manifest.contains("k") ? to_size("k", ckpt.get("k")) : 0;
  c.dtype = parse_precision(ckpt.get("dtype"));
  if (ckpt.manifest.contains("seed")) c.seed = to_size("seed", ckpt.get("seed"));
  if (ckpt.manifest.contains("activation")) c.activation = ckpt.get("activation");
  return c;
}

TdPcfg grammar(const Checkpoint& ckpt) {
  TdPcfg g;
  g.U = to_matrix(ckpt.array("U"));
  g.V = to_matrix(ckpt.array("V"));
  g.W = to_matrix(ckpt.array("W"));
  g.emission = to_matrix(ckpt.array("Q"));
  g.start = to_matrix(ckpt.array("r")).row(0).transpose();
  const ModelConfig c = model_config(ckpt);
  if (g.n() != c.n || g.p() != c.p || g.q() != c.q || g.rank() != c.d) {
    throw StructuralError("checkpoint arrays disagree with the manifest sizes");
  }
  return g;
}

Vocabulary vocabulary(const Checkpoint& ckpt) {
  return Vocabulary(ckpt.vocabulary, std::vector<std::size_t>(ckpt.vocabulary.size(), 0));
}

template <typename Real>
NeuralParams<Real> load_params(const Checkpoint& ckpt) {
  ModelConfig c = model_config(ckpt);
  c.dtype = std::is_same_v<Real, float> ? Precision::kSingle : Precision::kDouble;
  std::vector<ad::Array<Real>> values;
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    const NamedArray& a = ckpt.array(slot_name(static_cast<Slot>(s)));
    std::vector<Real> data(a.data.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<Real>(a.data[i]);
    values.emplace_back(a.rows, a.cols, std::move(data));
  }
  return NeuralParams<Real>::from_arrays(c, std::move(values));
}

template Checkpoint make_checkpoint<float>(const NeuralParams<float>&, const Vocabulary&,
                                           const std::map<std::string, std::string>&);
template Checkpoint make_checkpoint<double>(const NeuralParams<double>&, const Vocabulary&,
                                            const std::map<std::string, std::string>&);
template NeuralParams<float> load_params<float>(const Checkpoint&);
template NeuralParams<double> load_params<double>(const Checkpoint&);

}  // namespace tnpcfg
