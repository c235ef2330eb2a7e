#pragma once

#include <string>

#include "sbl/param.hpp"
#include "sbl/rng.hpp"
#include "sbl/tape.hpp"

namespace sbl {

// One-hidden-layer ReLU classifier head.
struct MlpHead {
  Param* w1 = nullptr;
  Param* b1 = nullptr;
  Param* w2 = nullptr;
  Param* b2 = nullptr;

  MlpHead() = default;
  MlpHead(ParamStore& store, const std::string& prefix, int64_t in, int64_t hidden, int64_t out,
          Rng& rng) {
    w1 = &store.add_uniform(prefix + ".w1", {in, hidden}, in, rng);
    b1 = &store.add_zeros(prefix + ".b1", {hidden});
    w2 = &store.add_uniform(prefix + ".w2", {hidden, out}, hidden, rng);
    b2 = &store.add_zeros(prefix + ".b2", {out});
  }

  Tensor forward(Tape& tape, Tensor x) const {
    Tensor h = tape.relu(tape.add(tape.matmul(x, tape.param(*w1)), tape.param(*b1)));
    return tape.add(tape.matmul(h, tape.param(*w2)), tape.param(*b2));
  }
};

}  // namespace sbl
