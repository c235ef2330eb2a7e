#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "sbl/errors.hpp"

namespace sbl::udgn {

// Greedy head readout: each token takes its most probable head. No tree
// constraint; the result may contain cycles. Ties break to the smallest index.
inline std::vector<int> extract_argmax(const std::vector<std::vector<double>>& p) {
  std::vector<int> heads(p.size(), 0);
  for (size_t i = 0; i < p.size(); ++i) {
    int best = 0;
    for (size_t j = 1; j < p[i].size(); ++j)
      if (p[i][j] > p[i][best]) best = static_cast<int>(j);
    heads[i] = best;
  }
  return heads;
}

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct ArboResult {
  std::vector<int> heads;  // heads[v] = parent of v; root has -1
  double total = 0.0;
};

// Maximum spanning arborescence rooted at `root`. W[u][v] is the weight of
// the directed edge u -> v (u heads v); kNegInf marks absent edges. Classic
// contraction algorithm: pick the best incoming edge per node, contract any
// cycle with adjusted weights, recurse, then expand.
inline ArboResult max_arborescence(const std::vector<std::vector<double>>& W, int root) {
  int n = static_cast<int>(W.size());
  std::vector<int> best(n, -1);
  for (int v = 0; v < n; ++v) {
    if (v == root) continue;
    for (int u = 0; u < n; ++u) {
      if (u == v || W[u][v] == kNegInf) continue;
      if (best[v] == -1 || W[u][v] > W[best[v]][v]) best[v] = u;
    }
    if (best[v] == -1) throw ContractError("arborescence: node has no incoming edge");
  }

  // look for a cycle among the greedy picks
  std::vector<int> state(n, 0);  // 0 unseen, 1 on path, 2 done
  std::vector<int> cycle;
  for (int s = 0; s < n && cycle.empty(); ++s) {
    int v = s;
    std::vector<int> path;
    while (v != -1 && state[v] == 0) {
      state[v] = 1;
      path.push_back(v);
      v = best[v];
    }
    if (v != -1 && state[v] == 1) {
      auto it = std::find(path.begin(), path.end(), v);
      cycle.assign(it, path.end());
    }
    for (int u : path) state[u] = 2;
  }

  if (cycle.empty()) {
    ArboResult res;
    res.heads.assign(n, -1);
    for (int v = 0; v < n; ++v) {
      if (v == root) continue;
      res.heads[v] = best[v];
      res.total += W[best[v]][v];
    }
    return res;
  }

  std::vector<bool> in_cycle(n, false);
  double cycle_total = 0.0;
  for (int v : cycle) {
    in_cycle[v] = true;
    cycle_total += W[best[v]][v];
  }

  // contracted graph: survivors keep their relative order, supernode is last
  std::vector<int> to_new(n, -1), to_old;
  for (int v = 0; v < n; ++v)
    if (!in_cycle[v]) {
      to_new[v] = static_cast<int>(to_old.size());
      to_old.push_back(v);
    }
  int super = static_cast<int>(to_old.size());
  int m = super + 1;

  std::vector<std::vector<double>> W2(m, std::vector<double>(m, kNegInf));
  std::vector<int> out_src(m, -1);  // best cycle member heading each survivor
  std::vector<int> in_dst(m, -1);   // cycle member entered from each survivor
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u == v || W[u][v] == kNegInf) continue;
      if (!in_cycle[u] && !in_cycle[v]) {
        W2[to_new[u]][to_new[v]] = W[u][v];
      } else if (in_cycle[u] && !in_cycle[v]) {
        int nv = to_new[v];
        if (W[u][v] > W2[super][nv]) {
          W2[super][nv] = W[u][v];
          out_src[nv] = u;
        }
      } else if (!in_cycle[u] && in_cycle[v]) {
        int nu = to_new[u];
        double adjusted = W[u][v] - W[best[v]][v];
        if (adjusted > W2[nu][super]) {
          W2[nu][super] = adjusted;
          in_dst[nu] = v;
        }
      }
    }
  }

  ArboResult sub = max_arborescence(W2, root == -1 ? -1 : to_new[root]);

  ArboResult res;
  res.heads.assign(n, -1);
  res.total = sub.total + cycle_total;
  for (int v = 0; v < n; ++v) {
    if (v == root || in_cycle[v]) continue;
    int h2 = sub.heads[to_new[v]];
    res.heads[v] = h2 == super ? out_src[to_new[v]] : to_old[h2];
  }
  int enter2 = sub.heads[super];
  int broken = in_dst[enter2];
  for (int v : cycle) res.heads[v] = v == broken ? to_old[enter2] : best[v];
  return res;
}

}  // namespace detail

struct ChuLiuResult {
  std::vector<int> heads;  // heads[i] = head token of i; the root holds -1
  int root = -1;
  double log_weight = 0.0;
};

// Maximum directed spanning tree over the head distribution. Edge u -> v
// scores log(p[v][u] + 1e-12); every token is tried as the root and the
// best-scoring arborescence wins (ties keep the smallest root index).
inline ChuLiuResult extract_chuliu(const std::vector<std::vector<double>>& p) {
  int n = static_cast<int>(p.size());
  if (n < 2) throw ContractError("extract_chuliu: need at least 2 tokens");
  for (const auto& row : p)
    if (static_cast<int>(row.size()) != n) throw ContractError("extract_chuliu: p is not square");

  std::vector<std::vector<double>> W(n, std::vector<double>(n, detail::kNegInf));
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (u != v) W[u][v] = std::log(p[v][u] + 1e-12);

  ChuLiuResult best;
  bool have = false;
  for (int r = 0; r < n; ++r) {
    std::vector<std::vector<double>> Wr = W;
    for (int u = 0; u < n; ++u) Wr[u][r] = detail::kNegInf;  // nothing heads the root
    detail::ArboResult a = detail::max_arborescence(Wr, r);
    if (!have || a.total > best.log_weight) {
      have = true;
      best.heads = a.heads;
      best.root = r;
      best.log_weight = a.total;
    }
  }
  return best;
}

}  // namespace sbl::udgn
