#pragma once

#include <vector>

#include "sbl/errors.hpp"
#include "sbl/tree.hpp"

namespace sbl::om {

inline int argmax_slot(const std::vector<double>& p) {
  int best = 0;
  for (size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = static_cast<int>(i);  // ties keep the smallest slot
  return best;
}

// Greedy shift-reduce readout of an attention trace. The head pointer h
// tracks where the previous token was shifted; attending deeper into the
// stack (y > h) composes that many pairs before the next shift. Pops are
// guarded when fewer than two subtrees are on the stack, and the tail loop
// drains the stack into a single root.
inline TreePtr parse_trace(const std::vector<std::vector<double>>& attention) {
  if (attention.empty()) throw ContractError("om parse: empty trace");
  size_t T = attention.size();
  std::vector<TreePtr> stack;
  stack.push_back(BinaryTree::make_leaf(0));
  int h = argmax_slot(attention[0]) - 1;
  for (size_t t = 1; t < T; ++t) {
    int y = argmax_slot(attention[t]);
    int d = y - h;
    for (int j = 0; j < d && stack.size() >= 2; ++j) {
      TreePtr right = std::move(stack.back());
      stack.pop_back();
      TreePtr left = std::move(stack.back());
      stack.pop_back();
      stack.push_back(BinaryTree::make_node(std::move(left), std::move(right)));
    }
    stack.push_back(BinaryTree::make_leaf(static_cast<int>(t)));
    h = y - 1;
  }
  while (stack.size() > 1) {
    TreePtr right = std::move(stack.back());
    stack.pop_back();
    TreePtr left = std::move(stack.back());
    stack.pop_back();
    stack.push_back(BinaryTree::make_node(std::move(left), std::move(right)));
  }
  return std::move(stack.back());
}

}  // namespace sbl::om
