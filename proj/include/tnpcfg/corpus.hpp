#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tnpcfg/decoder.hpp"
#include "tnpcfg/grammar.hpp"
#include "tnpcfg/inside.hpp"

namespace tnpcfg {

/// Bracketed tree node. A preterminal carries its word in `word` and has no
/// children; every other node has at least one child and an empty word.
struct TreeNode {
  std::string label;
  std::string word;
  std::vector<TreeNode> children;

  bool is_preterminal() const { return children.empty(); }
  std::size_t leaf_count() const;
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class TreebankError : public std::runtime_error {
 public:
  TreebankError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Parses bracketed trees, one per line or spread over several lines. A
/// root with an empty label and a single child (the usual treebank
/// wrapper) is unwrapped.
std::vector<TreeNode> parse_treebank(const std::string& text);
std::vector<TreeNode> read_treebank(const std::filesystem::path& path);

/// Single-line bracketed form, e.g. "(S (NP (DT the) (NN cat)) (VP (VBD sat)))".
std::string write_tree(const TreeNode& tree);
void write_treebank(const std::filesystem::path& path, std::span<const TreeNode> trees);

std::vector<std::string> words(const TreeNode& tree);
std::vector<std::string> tags(const TreeNode& tree);

/// Standard treebank punctuation tags plus empty elements.
const std::set<std::string>& default_punctuation_tags();

struct PreprocessStats {
  std::size_t input = 0;
  /// Trees with no words left.
  std::size_t dropped_empty = 0;
  /// Trees left with a single word.
  std::size_t dropped_short = 0;
  std::size_t removed_tokens = 0;
};

/// Deletes preterminals whose tag is in `punct_tags`, removes constituents
/// left without children, collapses unary chains produced by a deletion
/// (keeping the upper label) and strips function tags ("NP-SBJ-1" -> "NP").
/// Trees with fewer than two remaining words are dropped. Idempotent.
std::vector<TreeNode> preprocess(std::span<const TreeNode> trees, const std::set<std::string>& punct_tags,
                                 PreprocessStats* stats = nullptr);

/// Training vocabulary: the most frequent words (ties broken by first
/// occurrence) followed by a single unknown token.
class Vocabulary {
 public:
  static constexpr const char* kUnknown = "<unk>";

  Vocabulary() = default;
  /// Words in id order; the unknown token must be last and unique.
  Vocabulary(std::vector<std::string> words, std::vector<std::size_t> counts);

  std::size_t size() const { return words_.size(); }
  WordId unknown() const { return static_cast<WordId>(words_.size() - 1); }
  WordId id(const std::string& word) const;
  const std::string& word(WordId id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t count(WordId id) const { return counts_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& words() const { return words_; }

  Sentence encode(std::span<const std::string> tokens) const;

  /// "word<TAB>id<TAB>count" per line.
  void write(const std::filesystem::path& path) const;
  static Vocabulary read(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, WordId> index_;
};

Vocabulary build_vocab(std::span<const TreeNode> trees, std::size_t size = 10000);

struct GoldSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string label;

  friend bool operator==(const GoldSpan&, const GoldSpan&) = default;
  friend auto operator<=>(const GoldSpan&, const GoldSpan&) = default;
};

/// Every constituent, preterminals included, in pre-order.
std::vector<GoldSpan> gold_spans(const TreeNode& tree);

struct SampledCorpus {
  std::vector<Sentence> sentences;
  /// Generating derivations; span labels are nonterminal ids, tags preterminal ids.
  std::vector<ParseTree> trees;
  std::size_t attempts = 0;
};

/// Ancestral samples from `g`. Derivations longer than `max_length` words or
/// deeper than `max_depth` are rejected. Throws std::runtime_error when more
/// than 99% of attempts are rejected.
SampledCorpus sample_corpus(const TdPcfg& g, std::size_t count, std::size_t max_length, std::uint64_t seed,
                            std::size_t max_depth = 200);

/// Bracketed tree for a sampled derivation, with labels "NT<i>"/"T<i>" and
/// words named by `vocabulary` (or "w<id>" when empty).
TreeNode to_tree_node(const ParseTree& tree, const Sentence& sentence, std::size_t n,
                      std::span<const std::string> vocabulary = {});

}  // namespace tnpcfg
