#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "sbl/errors.hpp"
#include "sbl/rng.hpp"
#include "sbl/tree.hpp"

namespace sbl::tasks {

// Prefix-notation lists of single-digit integers under MAX / MIN / MED / SM
// (sum mod 10), e.g. "[MAX 2 9 [MIN 4 7 ] 0 ]" evaluates to 9.

inline bool is_listops_operator(const std::string& tok) {
  return tok == "[MAX" || tok == "[MIN" || tok == "[MED" || tok == "[SM";
}

namespace detail {

inline int listops_eval(const std::vector<std::string>& toks, size_t& pos) {
  if (pos >= toks.size())
    throw ContractError("listops: unexpected end of expression at token " + std::to_string(pos));
  const std::string& tok = toks[pos];
  if (tok.size() == 1 && tok[0] >= '0' && tok[0] <= '9') {
    ++pos;
    return tok[0] - '0';
  }
  if (!is_listops_operator(tok))
    throw ContractError("listops: unexpected token '" + tok + "' at position " +
                        std::to_string(pos));
  std::string op = tok.substr(1);
  ++pos;
  std::vector<int> args;
  while (pos < toks.size() && toks[pos] != "]") args.push_back(listops_eval(toks, pos));
  if (pos >= toks.size())
    throw ContractError("listops: missing ']' at position " + std::to_string(pos));
  ++pos;  // consume "]"
  if (args.empty())
    throw ContractError("listops: empty argument list at position " + std::to_string(pos));
  if (op == "MAX") return *std::max_element(args.begin(), args.end());
  if (op == "MIN") return *std::min_element(args.begin(), args.end());
  if (op == "MED") {  // lower median for even-length lists
    std::sort(args.begin(), args.end());
    return args[(args.size() - 1) / 2];
  }
  int s = 0;
  for (int a : args) s += a;
  return ((s % 10) + 10) % 10;  // SM
}

}  // namespace detail

// Recursive-descent evaluation; throws with the offending position on
// malformed input.
inline int listops_oracle(const std::vector<std::string>& tokens) {
  size_t pos = 0;
  int v = detail::listops_eval(tokens, pos);
  if (pos != tokens.size())
    throw ContractError("listops: trailing tokens at position " + std::to_string(pos));
  return v;
}

// Left-branching binarization of the nesting structure: each list folds its
// operator, arguments and closing bracket into a left spine.
inline TreePtr listops_gold_tree(const std::vector<std::string>& tokens) {
  size_t pos = 0;
  struct Builder {
    const std::vector<std::string>& toks;
    size_t& pos;
    TreePtr build() {
      if (pos >= toks.size()) throw ContractError("listops: truncated expression");
      if (!is_listops_operator(toks[pos]))
        return BinaryTree::make_leaf(static_cast<int>(pos++));
      TreePtr spine = BinaryTree::make_leaf(static_cast<int>(pos++));
      while (pos < toks.size() && toks[pos] != "]")
        spine = BinaryTree::make_node(std::move(spine), build());
      if (pos >= toks.size()) throw ContractError("listops: missing ']'");
      spine = BinaryTree::make_node(std::move(spine),
                                    BinaryTree::make_leaf(static_cast<int>(pos++)));
      return spine;
    }
  } b{tokens, pos};
  TreePtr t = b.build();
  if (pos != tokens.size()) throw ContractError("listops: trailing tokens");
  return t;
}

struct ListopsConfig {
  int count = 1000;
  int max_depth = 4;  // nesting levels, >= 1
  int max_args = 4;   // arguments per list, >= 2
  double p_recurse = 0.3;

  void validate() const {
    if (count <= 0) throw ConfigError("listops: count must be positive");
    if (max_depth < 1) throw ConfigError("listops: max_depth must be >= 1");
    if (max_args < 2) throw ConfigError("listops: max_args must be >= 2");
    if (p_recurse < 0.0 || p_recurse > 1.0) throw ConfigError("listops: p_recurse in [0,1]");
  }
};

struct ListopsExample {
  std::vector<std::string> tokens;
  int answer = 0;
};

namespace detail {
inline void gen_list(Rng& rng, const ListopsConfig& cfg, int depth,
                     std::vector<std::string>& out) {
  static const char* kOps[4] = {"[MAX", "[MIN", "[MED", "[SM"};
  out.push_back(kOps[rng.next_below(4)]);
  int nargs = static_cast<int>(rng.uniform_int(2, cfg.max_args));
  for (int a = 0; a < nargs; ++a) {
    if (depth < cfg.max_depth && rng.bernoulli(cfg.p_recurse))
      gen_list(rng, cfg, depth + 1, out);
    else
      out.push_back(std::string(1, static_cast<char>('0' + rng.next_below(10))));
  }
  out.push_back("]");
}
}  // namespace detail

inline std::vector<ListopsExample> gen_listops(Rng& rng, const ListopsConfig& cfg) {
  cfg.validate();
  std::vector<ListopsExample> out;
  out.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) {
    ListopsExample ex;
    detail::gen_list(rng, cfg, 1, ex.tokens);
    ex.answer = listops_oracle(ex.tokens);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace sbl::tasks
