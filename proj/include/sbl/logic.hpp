#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sbl/errors.hpp"
#include "sbl/rng.hpp"

namespace sbl::tasks {

// Propositional formulas over six variables a..f with or / and / not, in the
// fully parenthesized surface form "c ( and ( not ( a ( or b ) ) ) )".

constexpr int kLogicVars = 6;

struct Formula {
  enum Kind { kVar, kNot, kAnd, kOr } kind = kVar;
  int var = -1;
  std::unique_ptr<Formula> a, b;

  static std::unique_ptr<Formula> make_var(int v) {
    auto f = std::make_unique<Formula>();
    f->kind = kVar;
    f->var = v;
    return f;
  }
  static std::unique_ptr<Formula> make_not(std::unique_ptr<Formula> x) {
    auto f = std::make_unique<Formula>();
    f->kind = kNot;
    f->a = std::move(x);
    return f;
  }
  static std::unique_ptr<Formula> make_bin(Kind k, std::unique_ptr<Formula> l,
                                           std::unique_ptr<Formula> r) {
    auto f = std::make_unique<Formula>();
    f->kind = k;
    f->a = std::move(l);
    f->b = std::move(r);
    return f;
  }
};

using FormulaPtr = std::unique_ptr<Formula>;

inline int op_count(const Formula& f) {
  switch (f.kind) {
    case Formula::kVar: return 0;
    case Formula::kNot: return 1 + op_count(*f.a);
    default: return 1 + op_count(*f.a) + op_count(*f.b);
  }
}

namespace detail {
inline void render_wrapped(const Formula& f, std::vector<std::string>& out);

inline void render_binary(const Formula& f, std::vector<std::string>& out) {
  render_wrapped(*f.a, out);
  out.push_back("(");
  out.push_back(f.kind == Formula::kAnd ? "and" : "or");
  render_wrapped(*f.b, out);
  out.push_back(")");
}

inline void render_wrapped(const Formula& f, std::vector<std::string>& out) {
  switch (f.kind) {
    case Formula::kVar:
      out.push_back(std::string(1, static_cast<char>('a' + f.var)));
      return;
    case Formula::kNot:
      out.push_back("(");
      out.push_back("not");
      render_wrapped(*f.a, out);
      out.push_back(")");
      return;
    default:
      out.push_back("(");
      render_binary(f, out);
      out.push_back(")");
      return;
  }
}
}  // namespace detail

// Top-level binary clauses are printed without their outer parentheses,
// matching the "f ( and ( not a ) )" shape.
inline std::vector<std::string> render_formula(const Formula& f) {
  std::vector<std::string> out;
  if (f.kind == Formula::kAnd || f.kind == Formula::kOr)
    detail::render_binary(f, out);
  else
    detail::render_wrapped(f, out);
  return out;
}

namespace detail {
struct LogicParser {
  const std::vector<std::string>& toks;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& why) {
    throw ContractError("logic parse error at token " + std::to_string(pos) + ": " + why);
  }

  const std::string& peek() {
    if (pos >= toks.size()) fail("unexpected end of input");
    return toks[pos];
  }

  bool at_end() const { return pos >= toks.size(); }

  FormulaPtr parse_operand() {
    const std::string& t = peek();
    if (t == "(") {
      ++pos;
      FormulaPtr f;
      if (peek() == "not") {
        ++pos;
        f = Formula::make_not(parse_operand());
      } else {
        f = parse_clause();
      }
      if (peek() != ")") fail("expected ')'");
      ++pos;
      return f;
    }
    if (t.size() == 1 && t[0] >= 'a' && t[0] < 'a' + kLogicVars) {
      ++pos;
      return Formula::make_var(t[0] - 'a');
    }
    fail("expected a variable or '('");
  }

  // operand followed by an optional "( op operand )" (canonical form) or a
  // bare "op operand" (accepted leniently).
  FormulaPtr parse_clause() {
    FormulaPtr left = parse_operand();
    if (at_end() || peek() == ")") return left;
    if (peek() == "(") {
      ++pos;
      Formula::Kind k = parse_op();
      FormulaPtr right = parse_operand();
      if (peek() != ")") fail("expected ')'");
      ++pos;
      return Formula::make_bin(k, std::move(left), std::move(right));
    }
    Formula::Kind k = parse_op();
    return Formula::make_bin(k, std::move(left), parse_operand());
  }

  Formula::Kind parse_op() {
    const std::string& t = peek();
    if (t != "and" && t != "or") fail("expected 'and' or 'or'");
    ++pos;
    return t == "and" ? Formula::kAnd : Formula::kOr;
  }
};
}  // namespace detail

inline FormulaPtr parse_formula(const std::vector<std::string>& tokens) {
  detail::LogicParser p{tokens};
  FormulaPtr f = p.parse_clause();
  if (!p.at_end())
    throw ContractError("logic parse error: trailing tokens at " + std::to_string(p.pos));
  return f;
}

// Truth table over all 2^6 assignments, one bit per assignment. Bit i of the
// mask for variable v is the value of v in assignment i.
inline uint64_t truth_mask(const Formula& f) {
  switch (f.kind) {
    case Formula::kVar: {
      uint64_t m = 0;
      for (int i = 0; i < 64; ++i)
        if ((i >> f.var) & 1) m |= 1ULL << i;
      return m;
    }
    case Formula::kNot: return ~truth_mask(*f.a);
    case Formula::kAnd: return truth_mask(*f.a) & truth_mask(*f.b);
    case Formula::kOr: return truth_mask(*f.a) | truth_mask(*f.b);
  }
  return 0;
}

enum class Relation {
  kEquivalence = 0,
  kForwardEntailment,
  kReverseEntailment,
  kNegation,
  kAlternation,
  kCover,
  kIndependence,
};

constexpr int kNumRelations = 7;

inline const char* relation_name(Relation r) {
  switch (r) {
    case Relation::kEquivalence: return "equivalence";
    case Relation::kForwardEntailment: return "forward-entailment";
    case Relation::kReverseEntailment: return "reverse-entailment";
    case Relation::kNegation: return "negation";
    case Relation::kAlternation: return "alternation";
    case Relation::kCover: return "cover";
    case Relation::kIndependence: return "independence";
  }
  return "?";
}

inline Relation relation_from_name(const std::string& s) {
  for (int i = 0; i < kNumRelations; ++i)
    if (s == relation_name(static_cast<Relation>(i))) return static_cast<Relation>(i);
  throw ConfigError("unknown relation label '" + s + "'");
}

// Exhaustive truth-table decision over the four overlap counts.
inline Relation relation_of_masks(uint64_t m1, uint64_t m2) {
  bool both = (m1 & m2) != 0;
  bool only1 = (m1 & ~m2) != 0;
  bool only2 = (~m1 & m2) != 0;
  bool neither = (~m1 & ~m2) != 0;
  if (!only1 && !only2) return Relation::kEquivalence;
  if (!only1) return Relation::kForwardEntailment;
  if (!only2) return Relation::kReverseEntailment;
  if (!both && !neither) return Relation::kNegation;
  if (!both) return Relation::kAlternation;
  if (!neither) return Relation::kCover;
  return Relation::kIndependence;
}

inline Relation logic_relation_oracle(const std::vector<std::string>& s1,
                                      const std::vector<std::string>& s2) {
  return relation_of_masks(truth_mask(*parse_formula(s1)), truth_mask(*parse_formula(s2)));
}

struct LogicExample {
  std::vector<std::string> s1, s2;
  Relation label = Relation::kIndependence;
  int ops1 = 0, ops2 = 0;

  int bucket() const { return ops1 > ops2 ? ops1 : ops2; }
};

struct LogicConfig {
  int count = 1000;
  int min_ops = 0;   // smallest per-pair operator bucket
  int max_ops = 6;   // largest; the full task tests up to 12

  void validate() const {
    if (count <= 0) throw ConfigError("logic: count must be positive");
    if (min_ops < 0 || max_ops < min_ops || max_ops > 12)
      throw ConfigError("logic: need 0 <= min_ops <= max_ops <= 12");
  }
};

namespace detail {
// Formula with exactly `ops` operators over the given variable pool.
inline FormulaPtr gen_formula(Rng& rng, int ops, const std::vector<int>& pool) {
  if (ops == 0) return Formula::make_var(pool[rng.next_below(pool.size())]);
  int choice = static_cast<int>(rng.next_below(3));
  if (choice == 0) return Formula::make_not(gen_formula(rng, ops - 1, pool));
  int left = static_cast<int>(rng.next_below(static_cast<uint64_t>(ops)));  // 0..ops-1
  return Formula::make_bin(choice == 1 ? Formula::kAnd : Formula::kOr,
                           gen_formula(rng, left, pool),
                           gen_formula(rng, ops - 1 - left, pool));
}
}  // namespace detail

// Random pairs, labelled by the truth-table oracle. Buckets (the larger
// operator count of the pair) are spread uniformly over [min_ops, max_ops].
// Both sides draw from a small shared variable pool so that non-trivial
// relations appear often.
inline std::vector<LogicExample> gen_logic(Rng& rng, const LogicConfig& cfg) {
  cfg.validate();
  std::vector<LogicExample> out;
  out.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) {
    int bucket = static_cast<int>(rng.uniform_int(cfg.min_ops, cfg.max_ops));
    int other = static_cast<int>(rng.uniform_int(0, bucket));
    int ops1 = bucket, ops2 = other;
    if (rng.bernoulli(0.5)) std::swap(ops1, ops2);
    int pool_size = static_cast<int>(rng.uniform_int(1, 4));
    std::vector<int> pool;  // drawn without replacement
    std::vector<int> all{0, 1, 2, 3, 4, 5};
    for (int k = 0; k < pool_size; ++k) {
      size_t at = rng.next_below(all.size());
      pool.push_back(all[at]);
      all.erase(all.begin() + static_cast<long>(at));
    }
    FormulaPtr f1 = detail::gen_formula(rng, ops1, pool);
    FormulaPtr f2 = detail::gen_formula(rng, ops2, pool);
    LogicExample ex;
    ex.s1 = render_formula(*f1);
    ex.s2 = render_formula(*f2);
    ex.ops1 = ops1;
    ex.ops2 = ops2;
    ex.label = relation_of_masks(truth_mask(*f1), truth_mask(*f2));
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- systematic-generalization splits --------------------------------------

enum class Split { kA, kB, kC };

inline Split split_from_string(const std::string& s) {
  if (s == "A" || s == "a") return Split::kA;
  if (s == "B" || s == "b") return Split::kB;
  if (s == "C" || s == "c") return Split::kC;
  throw ConfigError("unknown split '" + s + "' (expected A, B or C)");
}

namespace detail {
// A: an `and` whose right operand is exactly (not a).
// B: an `and` whose right operand is a negation of anything.
// C: an `and` or `or` whose right operand is a negation of anything.
inline bool node_matches(const Formula& f, Split split) {
  bool binary = f.kind == Formula::kAnd || f.kind == Formula::kOr;
  if (!binary) return false;
  if (split != Split::kC && f.kind != Formula::kAnd) return false;
  const Formula& r = *f.b;
  if (r.kind != Formula::kNot) return false;
  if (split == Split::kA) return r.a->kind == Formula::kVar && r.a->var == 0;
  return true;
}

inline bool formula_matches(const Formula& f, Split split) {
  if (node_matches(f, split)) return true;
  if (f.a && formula_matches(*f.a, split)) return true;
  if (f.b && formula_matches(*f.b, split)) return true;
  return false;
}
}  // namespace detail

inline bool example_matches_split(const LogicExample& ex, Split split) {
  return detail::formula_matches(*parse_formula(ex.s1), split) ||
         detail::formula_matches(*parse_formula(ex.s2), split);
}

struct SplitResult {
  std::vector<LogicExample> train, test;
};

// Pairs matching the pattern in either sentence form the test set.
inline SplitResult filter_systematic_split(const std::vector<LogicExample>& examples,
                                           Split split) {
  SplitResult res;
  for (const LogicExample& ex : examples) {
    if (example_matches_split(ex, split))
      res.test.push_back(ex);
    else
      res.train.push_back(ex);
  }
  return res;
}

}  // namespace sbl::tasks
