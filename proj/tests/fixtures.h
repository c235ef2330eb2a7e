#pragma once

// Hand-computed metric fixtures shared by the unit and acceptance suites.
// Span convention: constituents are spans of length >= 2 including the full
// sentence; heads are 1-indexed with 0 marking the root.

#include <string>
#include <vector>

namespace fixtures {

struct Uf1Case {
  std::vector<std::string> pred, gold;  // one bracketed tree per sentence
  double precision, recall, f1;
};

inline std::vector<Uf1Case> uf1_cases() {
  return {
      // identical trees
      {{"( ( w0 w1 ) w2 )"}, {"( ( w0 w1 ) w2 )"}, 1.0, 1.0, 1.0},
      {{"( w0 ( w1 w2 ) )"}, {"( w0 ( w1 w2 ) )"}, 1.0, 1.0, 1.0},
      // left vs right branching, n=3: only the full span agrees
      {{"( ( w0 w1 ) w2 )"}, {"( w0 ( w1 w2 ) )"}, 0.5, 0.5, 0.5},
      {{"( w0 ( w1 w2 ) )"}, {"( ( w0 w1 ) w2 )"}, 0.5, 0.5, 0.5},
      // n=2 has a single tree
      {{"( w0 w1 )"}, {"( w0 w1 )"}, 1.0, 1.0, 1.0},
      // balanced vs left, n=4: {(0,1),(2,3),(0,3)} vs {(0,1),(0,2),(0,3)}
      {{"( ( w0 w1 ) ( w2 w3 ) )"}, {"( ( ( w0 w1 ) w2 ) w3 )"}, 2.0 / 3, 2.0 / 3, 2.0 / 3},
      // left vs right, n=4: only the full span
      {{"( ( ( w0 w1 ) w2 ) w3 )"}, {"( w0 ( w1 ( w2 w3 ) ) )"}, 1.0 / 3, 1.0 / 3, 1.0 / 3},
      // n=5: {(0,1),(2,3),(0,3),(0,4)} vs {(2,3),(1,3),(0,3),(0,4)} -> 3 hits
      {{"( ( ( w0 w1 ) ( w2 w3 ) ) w4 )"},
       {"( ( w0 ( w1 ( w2 w3 ) ) ) w4 )"},
       0.75, 0.75, 0.75},
      // n=6: {(0,1),(0,2),(0,3),(4,5),(0,5)} vs {(0,1),(2,3),(4,5),(2,5),(0,5)} -> 3 hits
      {{"( ( ( ( w0 w1 ) w2 ) w3 ) ( w4 w5 ) )"},
       {"( ( w0 w1 ) ( ( w2 w3 ) ( w4 w5 ) ) )"},
       0.6, 0.6, 0.6},
      // corpus micro-average: (1 of 2) + (1 of 1) hits over 3 spans each side
      {{"( ( w0 w1 ) w2 )", "( w0 w1 )"},
       {"( w0 ( w1 w2 ) )", "( w0 w1 )"},
       2.0 / 3, 2.0 / 3, 2.0 / 3},
      // corpus micro-average: (2 of 3) + (1 of 2)
      {{"( ( w0 w1 ) ( w2 w3 ) )", "( ( w0 w1 ) w2 )"},
       {"( ( ( w0 w1 ) w2 ) w3 )", "( w0 ( w1 w2 ) )"},
       0.6, 0.6, 0.6},
  };
}

struct UasCase {
  std::vector<std::vector<int>> pred, gold;
  double uas, uuas;
};

inline std::vector<UasCase> uas_cases() {
  return {
      {{{2, 0, 2}}, {{2, 0, 2}}, 1.0, 1.0},
      // one wrong head that also breaks the undirected edge
      {{{2, 0, 1}}, {{2, 0, 2}}, 2.0 / 3, 0.5},
      // fully reversed chain: zero directed hits, all undirected edges kept
      {{{2, 3, 0}}, {{0, 1, 2}}, 0.0, 1.0},
      {{{0, 1}}, {{0, 1}}, 1.0, 1.0},
      // two tokens flipped: direction lost, edge kept
      {{{2, 0}}, {{0, 1}}, 0.0, 1.0},
      // star vs chain
      {{{2, 0, 2, 2}}, {{0, 1, 1, 1}}, 0.0, 1.0 / 3},
      // one detachment in four
      {{{2, 0, 1, 3}}, {{2, 0, 2, 3}}, 0.75, 2.0 / 3},
      // argmax-style prediction without a root
      {{{2, 1, 2}}, {{2, 0, 2}}, 2.0 / 3, 1.0},
      {{{0, 3, 1}}, {{0, 1, 1}}, 2.0 / 3, 0.5},
      // corpus aggregation of two earlier cases: (2+2)/(3+2), (1+1)/(2+1)
      {{{2, 0, 1}, {0, 1}}, {{2, 0, 2}, {0, 1}}, 0.8, 2.0 / 3},
  };
}

struct PplCase {
  std::vector<double> log_probs;
  double ppl;
};

inline std::vector<PplCase> ppl_cases() {
  const double ln = std::log(0.1);
  return {
      {{ln, ln, ln, ln}, 10.0},                                   // uniform over 10
      {{0.0, 0.0, 0.0}, 1.0},                                     // certain
      {{std::log(0.5), std::log(0.5)}, 2.0},                      // halves
      {{0.0, std::log(0.25)}, 2.0},                               // mixed certain/quarter
      {{std::log(0.2)}, 5.0},                                     // single position
      {{ln, ln, ln}, 10.0},
      {{-1.0}, std::exp(1.0)},
      {{-2.0, 0.0}, std::exp(1.0)},
      {{std::log(0.5), std::log(0.125)}, 4.0},
      {{std::log(0.25), std::log(0.25), std::log(0.25), std::log(0.25)}, 4.0},
  };
}

}  // namespace fixtures
