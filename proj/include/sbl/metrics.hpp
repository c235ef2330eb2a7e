#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sbl/errors.hpp"
#include "sbl/tree.hpp"

namespace sbl::train {

// exp(-mean log p), natural base.
inline double perplexity(const std::vector<double>& log_probs) {
  if (log_probs.empty()) throw ContractError("perplexity: no target positions");
  double s = 0.0;
  for (double lp : log_probs) {
    if (!std::isfinite(lp)) throw ContractError("perplexity: non-finite log-probability");
    s += lp;
  }
  return std::exp(-s / static_cast<double>(log_probs.size()));
}

struct F1Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Unlabeled bracketing F1, micro-averaged over the corpus. Constituents are
// spans of length >= 2 including the full-sentence span.
inline F1Scores uf1(const std::vector<const BinaryTree*>& pred,
                    const std::vector<const BinaryTree*>& gold) {
  if (pred.size() != gold.size()) throw ContractError("uf1: corpus sizes differ");
  int64_t correct = 0, n_pred = 0, n_gold = 0;
  for (size_t s = 0; s < pred.size(); ++s) {
    if (leaf_count(*pred[s]) != leaf_count(*gold[s]))
      throw ContractError("uf1: leaf counts differ in sentence " + std::to_string(s));
    auto ps = tree_spans(*pred[s]);
    auto gs = tree_spans(*gold[s]);
    n_pred += static_cast<int64_t>(ps.size());
    n_gold += static_cast<int64_t>(gs.size());
    for (const auto& sp : ps) correct += gs.count(sp);
  }
  F1Scores out;
  out.precision = n_pred == 0 ? 0.0 : static_cast<double>(correct) / n_pred;
  out.recall = n_gold == 0 ? 0.0 : static_cast<double>(correct) / n_gold;
  out.f1 = (out.precision + out.recall) == 0.0
               ? 0.0
               : 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

struct AttachmentScores {
  double uas = 0.0;
  double uuas = 0.0;
};

// Heads are 1-indexed token ids with 0 marking the root. UAS counts exact
// directed matches; UUAS compares undirected edge sets against the gold
// tree's T-1 edges. Both aggregate corpus-wide by token/edge counts.
inline AttachmentScores uas_uuas(const std::vector<std::vector<int>>& pred,
                                 const std::vector<std::vector<int>>& gold) {
  if (pred.size() != gold.size()) throw ContractError("uas_uuas: corpus sizes differ");
  int64_t correct = 0, tokens = 0, edge_hits = 0, edges = 0;
  for (size_t s = 0; s < pred.size(); ++s) {
    const auto& p = pred[s];
    const auto& g = gold[s];
    if (p.size() != g.size())
      throw ContractError("uas_uuas: length mismatch in sentence " + std::to_string(s));
    int T = static_cast<int>(g.size());
    int roots = 0;
    for (int h : g)
      if (h == 0) ++roots;
    if (roots != 1) throw ContractError("uas_uuas: gold must have exactly one root");
    auto undirected = [T](const std::vector<int>& heads) {
      std::set<std::pair<int, int>> es;
      for (int i = 0; i < T; ++i) {
        if (heads[i] == 0) continue;
        int a = i + 1, b = heads[i];
        es.insert({a < b ? a : b, a < b ? b : a});
      }
      return es;
    };
    for (int i = 0; i < T; ++i)
      if (p[i] == g[i]) ++correct;
    tokens += T;
    auto pe = undirected(p);
    auto ge = undirected(g);
    for (const auto& e : pe) edge_hits += ge.count(e);
    edges += T - 1;
  }
  AttachmentScores out;
  out.uas = tokens == 0 ? 0.0 : static_cast<double>(correct) / tokens;
  out.uuas = edges == 0 ? 0.0 : static_cast<double>(edge_hits) / edges;
  return out;
}

// Named scalar metrics plus per-bucket breakdowns, stamped with the dataset,
// seed and the conventions the numbers were computed under.
struct MetricReport {
  std::string dataset_id;
  uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, double> metrics;
  std::map<std::string, std::map<std::string, double>> buckets;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["dataset_id"] = dataset_id;
    j["seed"] = seed;
    j["config"] = config;
    j["metrics"] = metrics;
    j["buckets"] = buckets;
    j["conventions"] = {
        {"uf1_spans", "length >= 2, full-sentence span included"},
        {"aggregation", "micro"},
        {"perplexity_base", "e"},
    };
    return j;
  }
};

}  // namespace sbl::train
