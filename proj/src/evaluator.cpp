#include "tnpcfg/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <stdexcept>

namespace tnpcfg {

namespace {

using SpanSet = std::set<std::pair<std::size_t, std::size_t>>;

bool nontrivial(std::size_t begin, std::size_t end, std::size_t length) {
  return begin < end && !(begin == 0 && end + 1 == length);
}

SpanSet gold_set(const GoldTree& gold) {
  SpanSet out;
  for (const auto& s : gold.spans) {
    if (nontrivial(s.begin, s.end, gold.length)) out.emplace(s.begin, s.end);
  }
  return out;
}

SpanSet pred_set(const ParseTree& pred) {
  SpanSet out;
  for (const auto& s : pred.spans) {
    if (nontrivial(s.begin, s.end, pred.length)) out.emplace(s.begin, s.end);
  }
  return out;
}

void check_aligned(std::span<const GoldTree> gold, std::span<const ParseTree> pred) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument("gold has " + std::to_string(gold.size()) + " sentences but predictions have " +
                                std::to_string(pred.size()));
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].length != pred[i].length) {
      throw std::invalid_argument("sentence " + std::to_string(i) + ": gold has " + std::to_string(gold[i].length) +
                                  " words but the prediction has " + std::to_string(pred[i].length));
    }
  }
}

}  // namespace

GoldTree GoldTree::from(const TreeNode& tree) { return {tree.leaf_count(), gold_spans(tree), tnpcfg::words(tree)}; }

std::optional<double> sentence_f1(const GoldTree& gold, const ParseTree& pred) {
  if (gold.length != pred.length) throw std::invalid_argument("gold and predicted lengths differ");
  const SpanSet g = gold_set(gold);
  if (g.empty()) return std::nullopt;
  const SpanSet p = pred_set(pred);
  std::size_t overlap = 0;
  for (const auto& s : p) overlap += g.contains(s);
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

CorpusF1 corpus_f1(std::span<const GoldTree> gold, std::span<const ParseTree> pred) {
  check_aligned(gold, pred);
  CorpusF1 out;
  double total = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (const auto f = sentence_f1(gold[i], pred[i])) {
      total += *f;
      ++out.scored;
    } else {
      ++out.skipped;
    }
  }
  out.mean = out.scored == 0 ? 0.0 : total / static_cast<double>(out.scored);
  return out;
}

std::vector<LabelRecall> recall_by_label(std::span<const GoldTree> gold, std::span<const ParseTree> pred,
                                         std::span<const std::string> labels) {
  check_aligned(gold, pred);
  std::map<std::string, std::pair<std::size_t, std::size_t>> hits;  // label -> (found, total)
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const SpanSet p = pred_set(pred[i]);
    std::set<GoldSpan> seen;
    for (const auto& s : gold[i].spans) {
      if (!nontrivial(s.begin, s.end, gold[i].length) || !seen.insert(s).second) continue;
      auto& [found, total] = hits[s.label];
      ++total;
      found += p.contains({s.begin, s.end});
    }
  }
  std::vector<LabelRecall> out;
  for (const auto& label : labels) {
    LabelRecall r{label, std::nullopt, 0};
    if (const auto it = hits.find(label); it != hits.end() && it->second.second > 0) {
      r.gold_count = it->second.second;
      r.recall = 100.0 * static_cast<double>(it->second.first) / static_cast<double>(r.gold_count);
    }
    out.push_back(r);
  }
  return out;
}

Correspondence label_correspondence(std::span<const GoldTree> gold, std::span<const ParseTree> pred,
                                    std::size_t top_k, std::size_t top_labels) {
  check_aligned(gold, pred);
  std::map<SymbolId, std::size_t> predicted;
  std::vector<std::pair<std::string, SymbolId>> correct;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::map<std::pair<std::size_t, std::size_t>, std::string> outer;
    for (const auto& s : gold[i].spans) {
      if (nontrivial(s.begin, s.end, gold[i].length)) outer.try_emplace({s.begin, s.end}, s.label);
    }
    for (const auto& s : pred[i].spans) {
      if (!nontrivial(s.begin, s.end, pred[i].length)) continue;
      if (s.label < 0) throw std::invalid_argument("correspondence needs labeled predictions");
      ++predicted[s.label];
      if (const auto it = outer.find({s.begin, s.end}); it != outer.end()) correct.emplace_back(it->second, s.label);
    }
  }

  auto by_count = [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; };
  std::vector<std::pair<SymbolId, std::size_t>> nts(predicted.begin(), predicted.end());
  std::sort(nts.begin(), nts.end(), by_count);
  std::map<std::string, std::size_t> label_freq;
  for (const auto& c : correct) ++label_freq[c.first];
  std::vector<std::pair<std::string, std::size_t>> gls(label_freq.begin(), label_freq.end());
  std::sort(gls.begin(), gls.end(), by_count);

  Correspondence out;
  std::map<SymbolId, std::size_t> column_of;
  for (std::size_t c = 0; c < std::min(top_k, nts.size()); ++c) {
    column_of[nts[c].first] = c;
    out.columns.push_back(nts[c].first);
  }
  const bool other_column = nts.size() > top_k;
  if (other_column) out.columns.push_back(-1);
  std::map<std::string, std::size_t> row_of;
  for (std::size_t r = 0; r < std::min(top_labels, gls.size()); ++r) {
    row_of[gls[r].first] = r;
    out.rows.push_back(gls[r].first);
  }
  if (gls.size() > top_labels) out.rows.emplace_back("OTHER");

  out.values.assign(out.rows.size(), std::vector<double>(out.columns.size(), 0.0));
  out.row_counts.assign(out.rows.size(), 0);
  for (const auto& [label, nt] : correct) {
    const auto r = row_of.contains(label) ? row_of.at(label) : out.rows.size() - 1;
    const auto c = column_of.contains(nt) ? column_of.at(nt) : out.columns.size() - 1;
    out.values[r][c] += 1.0;
    ++out.row_counts[r];
  }
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    for (auto& v : out.values[r]) v /= static_cast<double>(out.row_counts[r]);
  }
  return out;
}

std::vector<Cluster> cluster_report(std::span<const std::vector<std::string>> sentences,
                                    std::span<const ParseTree> pred, SymbolId nonterminal, std::size_t top_n) {
  if (sentences.size() != pred.size()) throw std::invalid_argument("sentences and predictions are not aligned");
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (const auto& s : pred[i].spans) {
      if (s.label != nonterminal) continue;
      std::string text;
      for (std::size_t w = s.begin; w <= s.end; ++w) text += (w == s.begin ? "" : " ") + sentences[i].at(w);
      ++counts[text];
    }
  }
  std::vector<Cluster> out;
  for (auto& [text, count] : counts) out.push_back({text, count});
  std::stable_sort(out.begin(), out.end(), [](const Cluster& a, const Cluster& b) { return a.count > b.count; });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of an empty list");
  double total = 0.0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

double biased_std(std::span<const double> xs) {
  const double mu = mean(xs);
  double total = 0.0;
  for (double x : xs) total += (x - mu) * (x - mu);
  return std::sqrt(total / static_cast<double>(xs.size()));
}

namespace {

ParseTree chain(std::size_t length, bool left) {
  ParseTree tree{length, {}, {}};
  if (length < 2) return tree;
  for (std::size_t w = length; w >= 2; --w) {
    tree.spans.push_back(left ? LabeledSpan{0, w - 1, -1} : LabeledSpan{length - w, length - 1, -1});
  }
  return tree;
}

}  // namespace

ParseTree left_branching(std::size_t length) { return chain(length, true); }
ParseTree right_branching(std::size_t length) { return chain(length, false); }

ParseTree random_tree(std::size_t length, std::mt19937_64& rng) {
  ParseTree tree{length, {}, {}};
  std::function<void(std::size_t, std::size_t)> build = [&](std::size_t i, std::size_t j) {
    if (i == j) return;
    tree.spans.push_back({i, j, -1});
    const std::size_t k = i + static_cast<std::size_t>(rng() % (j - i));
    build(i, k);
    build(k + 1, j);
  };
  if (length >= 2) build(0, length - 1);
  return tree;
}

void write_metrics(std::ostream& out, std::span<const Metric> metrics) {
  out << "name\tvalue\tseed\n" << std::setprecision(10);
  for (const auto& m : metrics) out << m.name << '\t' << m.value << '\t' << m.seed << '\n';
}

}  // namespace tnpcfg
