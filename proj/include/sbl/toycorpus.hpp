#pragma once

#include <string>
#include <vector>

#include "sbl/rng.hpp"

namespace sbl::tasks {

// Small templated corpus for masked-LM sanity runs. Each noun selects a
// unique verb and a noun-keyed adverb, determiners agree in number, and most
// sentences conjoin two independent clauses, so recovering a masked token
// requires attending inside the right clause; unigram frequencies stay far
// from the ceiling.
inline std::vector<std::vector<std::string>> gen_toy_corpus(Rng& rng, int count) {
  static const std::vector<std::pair<std::string, std::string>> kNouns = {
      {"cat", "cats"},   {"dog", "dogs"},   {"bird", "birds"}, {"fish", "fishes"},
      {"horse", "horses"}, {"cow", "cows"}, {"fox", "foxes"},  {"owl", "owls"},
      {"bee", "bees"},   {"ant", "ants"},
  };
  static const std::vector<std::pair<std::string, std::string>> kVerbs = {
      {"meows", "meow"},   {"barks", "bark"},   {"chirps", "chirp"}, {"swims", "swim"},
      {"neighs", "neigh"}, {"moos", "moo"},     {"yips", "yip"},     {"hoots", "hoot"},
      {"buzzes", "buzz"},  {"marches", "march"},
  };
  static const std::vector<std::string> kAdverbs = {"quietly", "loudly", "slowly", "quickly"};

  auto clause = [&](Rng& r, std::vector<std::string>& s) {
    bool plural = r.bernoulli(0.5);
    size_t noun = r.next_below(kNouns.size());
    if (plural)
      s.push_back(r.bernoulli(0.5) ? "the" : "these");
    else
      s.push_back(r.bernoulli(0.5) ? "the" : "this");
    s.push_back(plural ? kNouns[noun].second : kNouns[noun].first);
    s.push_back(plural ? kVerbs[noun].second : kVerbs[noun].first);
    if (r.bernoulli(0.5)) s.push_back(kAdverbs[noun % kAdverbs.size()]);
  };

  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::vector<std::string> s;
    clause(rng, s);
    if (rng.bernoulli(0.6)) {
      s.push_back("and");
      clause(rng, s);
    }
    corpus.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace sbl::tasks
