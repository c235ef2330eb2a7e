#pragma once

#include <algorithm>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sbl/errors.hpp"

namespace sbl {

// Unlabeled binary constituency tree over token indices. Leaves are exactly
// 0..n-1 in left-to-right order.
struct BinaryTree {
  int leaf = -1;  // >= 0 for leaves
  std::unique_ptr<BinaryTree> left, right;

  bool is_leaf() const { return leaf >= 0; }

  static std::unique_ptr<BinaryTree> make_leaf(int idx) {
    auto t = std::make_unique<BinaryTree>();
    t->leaf = idx;
    return t;
  }

  static std::unique_ptr<BinaryTree> make_node(std::unique_ptr<BinaryTree> l,
                                               std::unique_ptr<BinaryTree> r) {
    auto t = std::make_unique<BinaryTree>();
    t->left = std::move(l);
    t->right = std::move(r);
    return t;
  }

  std::unique_ptr<BinaryTree> clone() const {
    if (is_leaf()) return make_leaf(leaf);
    return make_node(left->clone(), right->clone());
  }
};

using TreePtr = std::unique_ptr<BinaryTree>;

inline int leaf_count(const BinaryTree& t) {
  return t.is_leaf() ? 1 : leaf_count(*t.left) + leaf_count(*t.right);
}

inline bool tree_equal(const BinaryTree& a, const BinaryTree& b) {
  if (a.is_leaf() != b.is_leaf()) return false;
  if (a.is_leaf()) return a.leaf == b.leaf;
  return tree_equal(*a.left, *b.left) && tree_equal(*a.right, *b.right);
}

// Renders "( ( w0 w1 ) w2 )" with leaves substituted by `tokens`, or by their
// index when no tokens are given.
inline std::string render_tree(const BinaryTree& t, const std::vector<std::string>& tokens = {}) {
  if (t.is_leaf()) {
    if (!tokens.empty()) return tokens.at(t.leaf);
    return "w" + std::to_string(t.leaf);
  }
  return "( " + render_tree(*t.left, tokens) + " " + render_tree(*t.right, tokens) + " )";
}

namespace detail {
inline TreePtr distance_to_tree_rec(int lo, int hi, const std::vector<double>& d, int dlo) {
  // tokens lo..hi inclusive; boundaries d[dlo .. dlo + (hi-lo) - 1], where
  // boundary b separates token lo+b-dlo ... one boundary per adjacent pair.
  if (lo == hi) return BinaryTree::make_leaf(lo);
  int n = hi - lo;  // number of boundaries in this span
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (d[dlo + i] > d[dlo + best]) best = i;  // ties keep the smallest index
  int split = lo + best;  // left child covers lo..split
  return BinaryTree::make_node(detail::distance_to_tree_rec(lo, split, d, dlo),
                               detail::distance_to_tree_rec(split + 1, hi, d, dlo + best + 1));
}
}  // namespace detail

// Top-down recursive split at the largest distance: the boundary with the
// maximal value becomes the root split, then both sides recurse. Ties break
// toward the smallest index.
inline TreePtr distance_to_tree(const std::vector<double>& distances, int n) {
  if (n < 1) throw ContractError("distance_to_tree: need at least one token");
  if (static_cast<int>(distances.size()) != n - 1)
    throw ContractError("distance_to_tree: " + std::to_string(distances.size()) +
                        " distances for " + std::to_string(n) + " tokens");
  return detail::distance_to_tree_rec(0, n - 1, distances, 0);
}

// Height of each internal node (leaves are height 0) at the boundary between
// consecutive leaves: entry i is the height of the lowest common ancestor of
// leaves i and i+1. Feeding these to distance_to_tree reproduces the tree.
inline std::vector<double> boundary_heights(const BinaryTree& t) {
  std::vector<double> out;
  struct Walk {
    std::vector<double>* out;
    int walk(const BinaryTree& node) {
      if (node.is_leaf()) return 0;
      int hl = walk(*node.left);
      // the boundary between left's last leaf and right's first leaf belongs
      // to this node; reserve its slot before walking right
      size_t at = out->size();
      out->push_back(0.0);
      int hr = walk(*node.right);
      int h = 1 + std::max(hl, hr);
      (*out)[at] = static_cast<double>(h);
      return h;
    }
  } w{&out};
  w.walk(t);
  return out;
}

// All spans (first_leaf, last_leaf) of length >= 2, including the full span.
inline std::set<std::pair<int, int>> tree_spans(const BinaryTree& t) {
  std::set<std::pair<int, int>> spans;
  struct Walk {
    std::set<std::pair<int, int>>* spans;
    std::pair<int, int> walk(const BinaryTree& node) {
      if (node.is_leaf()) return {node.leaf, node.leaf};
      auto l = walk(*node.left);
      auto r = walk(*node.right);
      spans->insert({l.first, r.second});
      return {l.first, r.second};
    }
  } w{&spans};
  w.walk(t);
  return spans;
}

// Enumerates every binary tree shape over leaves lo..hi (Catalan many).
inline std::vector<TreePtr> enumerate_trees(int lo, int hi) {
  std::vector<TreePtr> out;
  if (lo == hi) {
    out.push_back(BinaryTree::make_leaf(lo));
    return out;
  }
  for (int split = lo; split < hi; ++split) {
    auto lefts = enumerate_trees(lo, split);
    auto rights = enumerate_trees(split + 1, hi);
    for (const auto& l : lefts)
      for (const auto& r : rights)
        out.push_back(BinaryTree::make_node(l->clone(), r->clone()));
  }
  return out;
}

// Parses the bracketed rendering back into a tree; leaves are numbered in
// surface order and their strings returned through `tokens` when non-null.
inline TreePtr parse_tree(const std::string& line, std::vector<std::string>* tokens = nullptr) {
  std::vector<std::string> toks;
  std::string cur;
  for (char c : line) {
    if (c == ' ' || c == '\t') {
      if (!cur.empty()) toks.push_back(std::exchange(cur, ""));
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) toks.push_back(cur);

  size_t pos = 0;
  int next_leaf = 0;
  struct Parser {
    const std::vector<std::string>& toks;
    size_t& pos;
    int& next_leaf;
    std::vector<std::string>* tokens;
    TreePtr parse() {
      if (pos >= toks.size()) throw ContractError("parse_tree: unexpected end of input");
      if (toks[pos] == "(") {
        ++pos;
        TreePtr l = parse();
        TreePtr r = parse();
        while (pos < toks.size() && toks[pos] != ")") {  // n-ary input folds left
          l = BinaryTree::make_node(std::move(l), std::move(r));
          r = parse();
        }
        if (pos >= toks.size()) throw ContractError("parse_tree: missing ')'");
        ++pos;
        return BinaryTree::make_node(std::move(l), std::move(r));
      }
      if (toks[pos] == ")") throw ContractError("parse_tree: unexpected ')'");
      if (tokens != nullptr) tokens->push_back(toks[pos]);
      ++pos;
      return BinaryTree::make_leaf(next_leaf++);
    }
  } p{toks, pos, next_leaf, tokens};
  TreePtr t = p.parse();
  if (pos != toks.size()) throw ContractError("parse_tree: trailing tokens");
  return t;
}

}  // namespace sbl
