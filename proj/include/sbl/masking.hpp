#pragma once

#include <cstdint>
#include <vector>

#include "sbl/errors.hpp"
#include "sbl/rng.hpp"
#include "sbl/vocab.hpp"

namespace sbl::tasks {

struct MaskedBatch {
  std::vector<int64_t> input;      // ids with <mask> substituted in
  std::vector<int64_t> positions;  // masked positions
  std::vector<int64_t> targets;    // original ids at those positions
  std::vector<bool> is_masked;
};

// Each token is independently replaced by <mask> with probability `rate`;
// <unk> and <pad> are never masked.
inline MaskedBatch mask_tokens(const std::vector<int64_t>& ids, double rate, Rng& rng,
                               const Vocab& vocab) {
  if (!(rate > 0.0 && rate < 1.0)) throw ContractError("mask_tokens: rate must be in (0,1)");
  MaskedBatch out;
  out.input = ids;
  out.is_masked.assign(ids.size(), false);
  for (size_t i = 0; i < ids.size(); ++i) {
    bool eligible = ids[i] != vocab.unk_id() && ids[i] != vocab.pad_id();
    bool hit = rng.bernoulli(rate);  // drawn for every token, so the stream
                                     // does not depend on eligibility
    if (eligible && hit) {
      out.input[i] = vocab.mask_id();
      out.positions.push_back(static_cast<int64_t>(i));
      out.targets.push_back(ids[i]);
      out.is_masked[i] = true;
    }
  }
  return out;
}

}  // namespace sbl::tasks
