#include "tnpcfg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>

namespace tnpcfg {

std::size_t TreeNode::leaf_count() const {
  if (is_preterminal()) return 1;
  std::size_t total = 0;
  for (const auto& c : children) total += c.leaf_count();
  return total;
}

namespace {

struct Token {
  enum Kind { kOpen, kClose, kAtom } kind;
  std::string text;
  std::size_t line;
};

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  std::size_t line = 1;
  for (std::size_t i = 0; i < text.size();) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '(' || c == ')') {
      out.push_back({c == '(' ? Token::kOpen : Token::kClose, std::string(1, c), line});
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && text[j] != '(' && text[j] != ')' && !std::isspace(static_cast<unsigned char>(text[j]))) {
        ++j;
      }
      out.push_back({Token::kAtom, text.substr(i, j - i), line});
      i = j;
    }
  }
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  std::vector<TreeNode> parse_all() {
    std::vector<TreeNode> trees;
    while (pos_ < tokens_.size()) {
      const Token& t = tokens_[pos_];
      if (t.kind != Token::kOpen) throw TreebankError(t.line, "expected '(' but found '" + t.text + "'");
      TreeNode tree = parse_node();
      if (tree.label.empty()) {
        if (tree.children.size() == 1) {
          tree = std::move(tree.children.front());
        } else {
          tree.label = "ROOT";
        }
      }
      trees.push_back(std::move(tree));
    }
    return trees;
  }

 private:
  TreeNode parse_node() {
    const std::size_t open_line = tokens_[pos_].line;
    ++pos_;
    TreeNode node;
    if (pos_ < tokens_.size() && tokens_[pos_].kind == Token::kAtom) node.label = tokens_[pos_++].text;
    if (pos_ >= tokens_.size()) throw TreebankError(open_line, "unbalanced parentheses: '(' is never closed");
    if (tokens_[pos_].kind == Token::kAtom) {
      node.word = tokens_[pos_++].text;
      if (node.label.empty()) throw TreebankError(open_line, "word '" + node.word + "' has no tag");
    } else {
      while (pos_ < tokens_.size() && tokens_[pos_].kind == Token::kOpen) node.children.push_back(parse_node());
      if (node.children.empty() && pos_ < tokens_.size()) {
        throw TreebankError(tokens_[pos_].line, "empty constituent");
      }
    }
    if (pos_ >= tokens_.size()) throw TreebankError(open_line, "unbalanced parentheses: '(' is never closed");
    if (tokens_[pos_].kind != Token::kClose) {
      throw TreebankError(tokens_[pos_].line, "expected ')' but found '" + tokens_[pos_].text + "'");
    }
    ++pos_;
    return node;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

void write_node(const TreeNode& node, std::ostringstream& out) {
  out << '(' << node.label;
  if (node.is_preterminal()) {
    out << ' ' << node.word;
  } else {
    for (const auto& c : node.children) {
      out << ' ';
      write_node(c, out);
    }
  }
  out << ')';
}

std::string strip_function_tags(const std::string& label) {
  if (label.empty() || label.front() == '-') return label;
  const auto cut = label.find_first_of("-=", 1);
  return cut == std::string::npos ? label : label.substr(0, cut);
}

std::optional<TreeNode> clean(const TreeNode& node, const std::set<std::string>& punct, std::size_t& removed) {
  if (node.is_preterminal()) {
    if (punct.contains(node.label)) {
      ++removed;
      return std::nullopt;
    }
    return TreeNode{strip_function_tags(node.label), node.word, {}};
  }
  TreeNode out{strip_function_tags(node.label), "", {}};
  for (const auto& c : node.children) {
    if (auto kept = clean(c, punct, removed)) out.children.push_back(std::move(*kept));
  }
  if (out.children.empty()) return std::nullopt;
  const bool deleted = out.children.size() < node.children.size();
  if (deleted && out.children.size() == 1 && !out.children.front().is_preterminal()) {
    std::vector<TreeNode> grandchildren = std::move(out.children.front().children);
    out.children = std::move(grandchildren);
  }
  return out;
}

void collect(const TreeNode& node, std::vector<std::string>& out, bool want_words) {
  if (node.is_preterminal()) {
    out.push_back(want_words ? node.word : node.label);
    return;
  }
  for (const auto& c : node.children) collect(c, out, want_words);
}

}  // namespace

std::vector<TreeNode> parse_treebank(const std::string& text) { return Parser(tokenize(text)).parse_all(); }

std::vector<TreeNode> read_treebank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open treebank " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_treebank(buffer.str());
}

std::string write_tree(const TreeNode& tree) {
  std::ostringstream out;
  write_node(tree, out);
  return out.str();
}

void write_treebank(const std::filesystem::path& path, std::span<const TreeNode> trees) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : trees) out << write_tree(t) << '\n';
}

std::vector<std::string> words(const TreeNode& tree) {
  std::vector<std::string> out;
  collect(tree, out, true);
  return out;
}

std::vector<std::string> tags(const TreeNode& tree) {
  std::vector<std::string> out;
  collect(tree, out, false);
  return out;
}

const std::set<std::string>& default_punctuation_tags() {
  static const std::set<std::string> tags{",", ".", ":", "``", "''", "-LRB-", "-RRB-", "-NONE-"};
  return tags;
}

std::vector<TreeNode> preprocess(std::span<const TreeNode> trees, const std::set<std::string>& punct_tags,
                                 PreprocessStats* stats) {
  PreprocessStats local;
  local.input = trees.size();
  std::vector<TreeNode> out;
  for (const auto& t : trees) {
    auto cleaned = clean(t, punct_tags, local.removed_tokens);
    if (!cleaned) {
      ++local.dropped_empty;
    } else if (cleaned->leaf_count() < 2) {
      ++local.dropped_short;
    } else {
      out.push_back(std::move(*cleaned));
    }
  }
  if (stats) *stats = local;
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<std::size_t> counts)
    : words_(std::move(words)), counts_(std::move(counts)) {
  if (words_.empty() || words_.back() != kUnknown) throw std::invalid_argument("vocabulary must end with <unk>");
  if (counts_.size() != words_.size()) throw std::invalid_argument("vocabulary counts do not match words");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<WordId>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary entry '" + words_[i] + "'");
    }
  }
}

WordId Vocabulary::id(const std::string& word) const {
  const auto it = index_.find(word);
  return it == index_.end() ? unknown() : it->second;
}

Sentence Vocabulary::encode(std::span<const std::string> tokens) const {
  Sentence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

void Vocabulary::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < words_.size(); ++i) out << words_[i] << '\t' << i << '\t' << counts_[i] << '\n';
}

Vocabulary Vocabulary::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> ws;
  std::vector<std::size_t> cs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string word;
    std::size_t id = 0;
    std::size_t count = 0;
    if (!std::getline(fields, word, '\t') || !(fields >> id >> count) || id != ws.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed vocabulary line");
    }
    ws.push_back(word);
    cs.push_back(count);
  }
  return Vocabulary(std::move(ws), std::move(cs));
}

Vocabulary build_vocab(std::span<const TreeNode> trees, std::size_t size) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : trees) {
    for (const auto& w : words(t)) {
      if (counts[w]++ == 0) order.push_back(w);
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) { return counts[a] > counts[b]; });
  std::vector<std::size_t> kept_counts;
  std::size_t unknown = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < size && order[i] != Vocabulary::kUnknown) {
      kept_counts.push_back(counts[order[i]]);
    } else {
      unknown += counts[order[i]];
    }
  }
  std::vector<std::string> kept;
  for (const auto& w : order) {
    if (kept.size() == kept_counts.size()) break;
    if (w != Vocabulary::kUnknown) kept.push_back(w);
  }
  kept.emplace_back(Vocabulary::kUnknown);
  kept_counts.push_back(unknown);
  return Vocabulary(std::move(kept), std::move(kept_counts));
}

std::vector<GoldSpan> gold_spans(const TreeNode& tree) {
  std::vector<GoldSpan> out;
  std::size_t position = 0;
  std::function<void(const TreeNode&)> visit = [&](const TreeNode& node) {
    if (node.is_preterminal()) {
      out.push_back({position, position, node.label});
      ++position;
      return;
    }
    const std::size_t slot = out.size();
    out.push_back({position, 0, node.label});
    for (const auto& c : node.children) visit(c);
    out[slot].end = position - 1;
  };
  visit(tree);
  return out;
}

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct Categorical {
  std::vector<double> cdf;

  template <typename Row>
  explicit Categorical(const Row& weights) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      acc += weights(i);
      cdf.push_back(acc);
    }
  }

  std::size_t draw(std::mt19937_64& rng) const {
    const double u = uniform01(rng) * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  }
};

}  // namespace

SampledCorpus sample_corpus(const TdPcfg& g, std::size_t count, std::size_t max_length, std::uint64_t seed,
                            std::size_t max_depth) {
  for (const ValidationReport& report : {validate_factored(g), validate_distributions(g.emission, g.start)}) {
    if (!report.ok()) throw std::invalid_argument("cannot sample from an invalid grammar: " + report.to_string());
  }
  if (max_length < 2) throw std::invalid_argument("max_length must be at least 2");
  const std::size_t n = g.n();
  std::vector<Categorical> rank_of, left_of, right_of, word_of;
  for (std::size_t a = 0; a < n; ++a) rank_of.emplace_back(g.U.row(static_cast<Eigen::Index>(a)));
  for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(g.rank()); ++l) {
    left_of.emplace_back(g.V.col(l));
    right_of.emplace_back(g.W.col(l));
  }
  for (std::size_t t = 0; t < g.p(); ++t) word_of.emplace_back(g.emission.row(static_cast<Eigen::Index>(t)));
  const Categorical root_of(g.start);

  std::mt19937_64 rng(seed);
  SampledCorpus out;
  const std::size_t budget = std::max<std::size_t>(1000, 100 * count);
  while (out.sentences.size() < count) {
    if (out.attempts >= budget) {
      throw std::runtime_error("more than 99% of sampled derivations exceed the length or depth limit; the grammar's "
                               "expected length is too large, so raise max_length or use a different grammar");
    }
    ++out.attempts;
    Sentence sentence;
    ParseTree tree;
    std::size_t frontier = 1;
    std::function<bool(std::size_t, std::size_t)> expand = [&](std::size_t sym, std::size_t depth) -> bool {
      if (depth > max_depth) return false;
      if (sym >= n) {
        tree.tags.push_back(static_cast<SymbolId>(sym));
        sentence.push_back(static_cast<WordId>(word_of[sym - n].draw(rng)));
        return true;
      }
      if (++frontier > max_length) return false;
      const std::size_t slot = tree.spans.size();
      tree.spans.push_back({sentence.size(), 0, static_cast<SymbolId>(sym)});
      const std::size_t l = rank_of[sym].draw(rng);
      const std::size_t b = left_of[l].draw(rng);
      const std::size_t c = right_of[l].draw(rng);
      if (!expand(b, depth + 1) || !expand(c, depth + 1)) return false;
      tree.spans[slot].end = sentence.size() - 1;
      return true;
    };
    if (!expand(root_of.draw(rng), 0)) continue;
    tree.length = sentence.size();
    out.sentences.push_back(std::move(sentence));
    out.trees.push_back(std::move(tree));
  }
  return out;
}

TreeNode to_tree_node(const ParseTree& tree, const Sentence& sentence, std::size_t n,
                      std::span<const std::string> vocabulary) {
  if (tree.length != sentence.size()) throw std::invalid_argument("tree and sentence lengths differ");
  std::map<std::pair<std::size_t, std::size_t>, SymbolId> labels;
  for (const auto& s : tree.spans) labels[{s.begin, s.end}] = s.label;
  auto word_name = [&](std::size_t i) {
    const auto id = static_cast<std::size_t>(sentence[i]);
    return id < vocabulary.size() ? vocabulary[id] : "w" + std::to_string(id);
  };
  auto leaf = [&](std::size_t i) {
    const SymbolId tag = i < tree.tags.size() ? tree.tags[i] : -1;
    const std::string name = tag >= 0 ? "T" + std::to_string(static_cast<std::size_t>(tag) - n) : "X";
    return TreeNode{name, word_name(i), {}};
  };
  std::function<TreeNode(std::size_t, std::size_t)> build = [&](std::size_t i, std::size_t j) -> TreeNode {
    if (i == j) return leaf(i);
    const SymbolId label = labels.at({i, j});
    TreeNode node{label >= 0 ? "NT" + std::to_string(label) : "X", "", {}};
    for (std::size_t pos = i; pos <= j;) {
      std::size_t end = pos;
      for (std::size_t e = j - (pos == i ? 1 : 0); e > pos; --e) {
        if (labels.contains({pos, e})) {
          end = e;
          break;
        }
      }
      node.children.push_back(build(pos, end));
      pos = end + 1;
    }
    return node;
  };
  if (tree.length == 0) throw std::invalid_argument("empty tree");
  if (tree.length == 1) return leaf(0);
  return build(0, tree.length - 1);
}

}  // namespace tnpcfg
