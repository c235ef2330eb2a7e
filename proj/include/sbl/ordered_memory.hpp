#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sbl/heads.hpp"
#include "sbl/param.hpp"
#include "sbl/rng.hpp"
#include "sbl/tape.hpp"

namespace sbl::om {

struct Config {
  int64_t slots = 4;       // N
  int64_t slot_dim = 16;   // D
  int64_t input_dim = 16;  // embedding width
  int64_t att_hidden = 16;
  int64_t cell_hidden = 32;
  int64_t vocab = 0;

  void validate() const {
    if (slots < 2) throw ConfigError("om: need at least 2 memory slots");
    if (slot_dim <= 0 || input_dim <= 0 || att_hidden <= 0 || cell_hidden <= 0 || vocab <= 0)
      throw ConfigError("om: dimensions must be positive");
  }
};

struct Model {
  Config cfg;
  ParamStore params;
  Param* embedding = nullptr;
  Param* w_in = nullptr;
  Param* b_in = nullptr;
  Param* ln_gain = nullptr;  // affine shared between the input projection and
  Param* ln_bias = nullptr;  // the cell-output normalization
  Param* att_w1 = nullptr;
  Param* att_b1 = nullptr;
  Param* att_w2 = nullptr;
  Param* att_b2 = nullptr;
  Param* cell_w1 = nullptr;
  Param* cell_b1 = nullptr;
  Param* cell_w2 = nullptr;
  Param* cell_b2 = nullptr;
  Param* init_mem = nullptr;       // learned M_0
  Param* init_candidate = nullptr; // learned M-hat_0

  explicit Model(const Config& cfg_, Rng rng) : cfg(cfg_) {
    cfg.validate();
    int64_t d = cfg.slot_dim;
    embedding = &params.add_uniform("embedding", {cfg.vocab, cfg.input_dim}, cfg.input_dim, rng);
    w_in = &params.add_uniform("in.w", {cfg.input_dim, d}, cfg.input_dim, rng);
    b_in = &params.add_zeros("in.b", {d});
    ln_gain = &params.add_ones("ln.gain", {d});
    ln_bias = &params.add_zeros("ln.bias", {d});
    att_w1 = &params.add_uniform("att.w1", {2 * d, cfg.att_hidden}, 2 * d, rng);
    att_b1 = &params.add_zeros("att.b1", {cfg.att_hidden});
    att_w2 = &params.add_uniform("att.w2", {cfg.att_hidden, 1}, cfg.att_hidden, rng);
    att_b2 = &params.add_zeros("att.b2", {1});
    cell_w1 = &params.add_uniform("cell.w1", {2 * d, cfg.cell_hidden}, 2 * d, rng);
    cell_b1 = &params.add_zeros("cell.b1", {cfg.cell_hidden});
    cell_w2 = &params.add_uniform("cell.w2", {cfg.cell_hidden, 4 * d}, cfg.cell_hidden, rng);
    cell_b2 = &params.add_zeros("cell.b2", {4 * d});
    init_mem = &params.add_uniform("init.m", {cfg.slots, d}, d, rng);
    init_candidate = &params.add_uniform("init.mhat", {cfg.slots, d}, d, rng);
  }
};

// Per-tape bound views of the model parameters.
struct Bound {
  Tensor w_in, b_in, ln_gain, ln_bias;
  Tensor att_w1, att_b1, att_w2, att_b2;
  Tensor cell_w1, cell_b1, cell_w2, cell_b2;

  Bound(Tape& tape, Model& m)
      : w_in(tape.param(*m.w_in)),
        b_in(tape.param(*m.b_in)),
        ln_gain(tape.param(*m.ln_gain)),
        ln_bias(tape.param(*m.ln_bias)),
        att_w1(tape.param(*m.att_w1)),
        att_b1(tape.param(*m.att_b1)),
        att_w2(tape.param(*m.att_w2)),
        att_b2(tape.param(*m.att_b2)),
        cell_w1(tape.param(*m.cell_w1)),
        cell_b1(tape.param(*m.cell_b1)),
        cell_w2(tape.param(*m.cell_w2)),
        cell_b2(tape.param(*m.cell_b2)) {}
};

inline Tensor affine_ln(Tape& tape, const Bound& bd, Tensor x) {
  return tape.add(tape.mul(tape.layer_norm(x), bd.ln_gain), bd.ln_bias);
}

// x_tilde = LN(W x + b), sharing its affine with the cell output LN.
inline Tensor project_input(Tape& tape, const Bound& bd, Tensor x) {
  return affine_ln(tape, bd, tape.add(tape.matmul(x, bd.w_in), bd.b_in));
}

// Stick-breaking attention over candidate slots. Slots whose cumulative mask
// from the previous step is zero receive exactly zero probability; the last
// slot is always available.
inline Tensor masked_attention(Tape& tape, const Bound& bd, Tensor x_tilde, Tensor candidates,
                               Tensor cp_prev) {
  int64_t n = candidates.shape()[0];
  Tensor x_rows = tape.matmul(tape.constant({n, 1}, std::vector<double>(n, 1.0)), x_tilde);
  Tensor pair = tape.concat({candidates, x_rows}, 1);
  Tensor hidden = tape.tanh(tape.add(tape.matmul(pair, bd.att_w1), bd.att_b1));
  Tensor scores = tape.add(tape.matmul(hidden, bd.att_w2), bd.att_b2);
  scores = tape.scale(scores, 1.0 / std::sqrt(static_cast<double>(n)));
  scores = tape.reshape(scores, {n});
  Tensor mask = tape.concat({tape.slice(cp_prev, 0, 1, n - 1), tape.scalar_const(1.0)}, 0);
  return tape.masked_softmax(scores, mask);
}

// Composes a memory slot with the candidate below it. Both inputs are (1, D).
inline Tensor gated_recursive_cell(Tape& tape, const Bound& bd, Tensor mem_i,
                                   Tensor candidate_below) {
  int64_t d = mem_i.shape()[1];
  Tensor z = tape.concat({candidate_below, mem_i}, 1);
  Tensor hidden = tape.relu(tape.add(tape.matmul(z, bd.cell_w1), bd.cell_b1));
  Tensor gates = tape.add(tape.matmul(hidden, bd.cell_w2), bd.cell_b2);
  Tensor vg = tape.sigmoid(tape.slice(gates, 1, 0, d));
  Tensor hg = tape.sigmoid(tape.slice(gates, 1, d, d));
  Tensor cg = tape.sigmoid(tape.slice(gates, 1, 2 * d, d));
  Tensor u = tape.slice(gates, 1, 3 * d, d);
  Tensor mix = tape.add(tape.add(tape.mul(vg, candidate_below), tape.mul(hg, mem_i)),
                        tape.mul(cg, u));
  return affine_ln(tape, bd, mix);
}

struct State {
  std::vector<Tensor> memory;     // N rows, each (1, D)
  std::vector<Tensor> candidate;  // N rows, each (1, D)
  Tensor cp;                      // (N)
};

struct StepResult {
  State state;
  Tensor p;       // attention over slots, sums to 1
  Tensor output;  // o_t at the top slot (1, D)
};

// One grid update: attend, copy the stack prefix, then recompose candidates
// bottom-up with the projected input waiting below the attended slot.
inline StepResult step(Tape& tape, const Bound& bd, Tensor x_tilde, const State& prev,
                       Tensor forced_p = {}) {
  int64_t n = static_cast<int64_t>(prev.memory.size());
  Tensor p = forced_p.valid() ? forced_p : masked_attention(tape, bd, x_tilde,
                                                            tape.concat(prev.candidate, 0), prev.cp);
  Tensor cp = tape.cumsum(p, 0);
  // rcp_i = sum_{j >= i} p_j, via the complement of the shifted cumulative sum
  Tensor rcp = tape.scale(tape.concat({tape.zeros({1}), tape.slice(cp, 0, 0, n - 1)}, 0), -1.0, 1.0);

  State next;
  next.cp = cp;
  Tensor below = x_tilde;
  Tensor output;
  for (int64_t i = 0; i < n; ++i) {
    Tensor rcp_i = tape.slice(rcp, 0, i, 1);
    Tensor cp_i = tape.slice(cp, 0, i, 1);
    Tensor keep = tape.scale(rcp_i, -1.0, 1.0);
    Tensor mem = tape.add(tape.mul(prev.memory[i], keep), tape.mul(prev.candidate[i], rcp_i));
    output = gated_recursive_cell(tape, bd, mem, below);
    Tensor shift = tape.scale(cp_i, -1.0, 1.0);
    Tensor cand = tape.add(tape.mul(x_tilde, shift), tape.mul(output, cp_i));
    next.memory.push_back(mem);
    next.candidate.push_back(cand);
    below = cand;
  }
  return {std::move(next), p, output};
}

struct Trace {
  std::vector<std::vector<double>> attention;  // T x N
  std::vector<double> output;                  // o_T at the top slot (D)
  Tensor output_tensor;                        // same, still on the tape
  std::vector<std::string> diagnostics;
  // memory snapshots per step (filled when collect_memory is set): T x N x D
  std::vector<std::vector<std::vector<double>>> memory;
  std::vector<std::vector<std::vector<double>>> candidate;
};

struct ForwardOptions {
  const std::vector<int>* forced_attention = nullptr;  // one-hot slot per step
  bool collect_memory = false;
};

// Runs the full sequence and returns the attention trace plus the final
// composed output o_T^N.
inline Trace forward(Tape& tape, Model& m, const std::vector<int64_t>& ids,
                     const ForwardOptions& opt = {}) {
  if (ids.empty()) throw ContractError("om: empty token sequence");
  for (int64_t id : ids)
    if (id < 0 || id >= m.cfg.vocab)
      throw VocabError("om: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(m.cfg.vocab));
  if (opt.forced_attention != nullptr && opt.forced_attention->size() != ids.size())
    throw ContractError("om: forced attention length mismatch");

  int64_t n = m.cfg.slots;
  Bound bd(tape, m);
  Tensor emb = tape.embedding_lookup(tape.param(*m.embedding), ids);
  Tensor m0 = tape.param(*m.init_mem);
  Tensor mhat0 = tape.param(*m.init_candidate);

  State state;
  for (int64_t i = 0; i < n; ++i) {
    state.memory.push_back(tape.slice(m0, 0, i, 1));
    state.candidate.push_back(tape.slice(mhat0, 0, i, 1));
  }
  state.cp = tape.zeros({n});

  Trace trace;
  for (size_t t = 0; t < ids.size(); ++t) {
    Tensor x = tape.slice(emb, 0, static_cast<int64_t>(t), 1);
    Tensor x_tilde = project_input(tape, bd, x);
    Tensor forced;
    if (opt.forced_attention != nullptr) {
      std::vector<double> onehot(n, 0.0);
      int slot = (*opt.forced_attention)[t];
      if (slot < 0 || slot >= n) throw ContractError("om: forced slot out of range");
      onehot[slot] = 1.0;
      forced = tape.constant({n}, std::move(onehot));
    }
    StepResult sr = step(tape, bd, x_tilde, state, forced);
    state = std::move(sr.state);
    trace.attention.push_back(sr.p.to_vector());

    auto cp = state.cp.val();
    for (int64_t i = 1; i < n; ++i)
      if (cp[i] < cp[i - 1] - 1e-6)
        trace.diagnostics.push_back("cp not monotone at t=" + std::to_string(t + 1) + " slot " +
                                    std::to_string(i));
    if (opt.collect_memory) {
      std::vector<std::vector<double>> ms, cs;
      for (int64_t i = 0; i < n; ++i) {
        ms.push_back(state.memory[i].to_vector());
        cs.push_back(state.candidate[i].to_vector());
      }
      trace.memory.push_back(std::move(ms));
      trace.candidate.push_back(std::move(cs));
    }
    trace.output_tensor = sr.output;
  }
  trace.output = trace.output_tensor.to_vector();
  return trace;
}

// Feature block for sentence-pair classification: (h1, h2, h1*h2, |h1-h2|).
inline Tensor pair_features(Tape& tape, Tensor h1, Tensor h2) {
  return tape.concat({h1, h2, tape.mul(h1, h2), tape.abs(tape.sub(h1, h2))}, 1);
}

}  // namespace sbl::om
