#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tnpcfg/corpus.hpp"
#include "tnpcfg/grammar.hpp"
#include "tnpcfg/parameterizer.hpp"

namespace tnpcfg {

inline constexpr int kCheckpointSchema = 1;

struct NamedArray {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Precision on disk; values are held in double either way.
  Precision dtype = Precision::kDouble;
  std::vector<double> data;
};

/// A text manifest of key=value lines, the vocabulary, then named arrays
/// stored as little-endian IEEE-754 with explicit shapes.
///
/// Layout:
///   tnpcfg-checkpoint
///   key=value ...            (schema_version, n, p, q, d, k, dtype, ...)
///   vocab_size=<q>
///   <blank line>
///   q lines, one word each
///   arrays=<count>
///   per array: "<name> <f32|f64> <rows> <cols>\n" followed by raw bytes
struct Checkpoint {
  std::map<std::string, std::string> manifest;
  std::vector<std::string> vocabulary;
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
  const std::string& get(const std::string& key) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Manifest fields, the grammar snapshot ("U", "V", "W", "Q", "r" in f64)
/// and every network parameter in the model precision.
template <typename Real>
Checkpoint make_checkpoint(const NeuralParams<Real>& params, const Vocabulary& vocab,
                           const std::map<std::string, std::string>& extra = {});

/// Grammar snapshot only, for hand-built or sampled grammars.
Checkpoint make_grammar_checkpoint(const TdPcfg& g, const Vocabulary& vocab,
                                   const std::map<std::string, std::string>& extra = {});

ModelConfig model_config(const Checkpoint& ckpt);
TdPcfg grammar(const Checkpoint& ckpt);
Vocabulary vocabulary(const Checkpoint& ckpt);
template <typename Real>
NeuralParams<Real> load_params(const Checkpoint& ckpt);

}  // namespace tnpcfg
