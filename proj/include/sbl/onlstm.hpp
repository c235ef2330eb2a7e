#pragma once

#include <string>
#include <vector>

#include "sbl/param.hpp"
#include "sbl/rng.hpp"
#include "sbl/tape.hpp"
#include "sbl/tree.hpp"

namespace sbl::onlstm {

// cummax over the innermost axis: cumulative sum of a softmax. Monotone
// non-decreasing, bounded in [0, 1], terminal value 1.
inline Tensor cummax(Tape& tape, Tensor logits) {
  if (!logits.valid() || logits.size() < 1) throw ContractError("cummax: empty input");
  int axis = static_cast<int>(logits.shape().size()) - 1;
  return tape.cumsum(tape.softmax(logits, axis), axis);
}

// Master-gate combination. All inputs are chunk-expanded to the hidden
// dimension; returns (f_hat, i_hat, omega).
struct CombinedGates {
  Tensor f_hat, i_hat, omega;
};

inline CombinedGates combine_master_gates(Tape& tape, Tensor master_f, Tensor master_i, Tensor f,
                                          Tensor i) {
  if (master_f.shape() != f.shape() || master_i.shape() != i.shape() ||
      master_f.shape() != master_i.shape())
    throw ContractError("combine_master_gates: gate dimensions differ");
  Tensor omega = tape.mul(master_f, master_i);
  Tensor f_hat = tape.add(tape.mul(f, omega), tape.sub(master_f, omega));
  Tensor i_hat = tape.add(tape.mul(i, omega), tape.sub(master_i, omega));
  return {f_hat, i_hat, omega};
}

struct Config {
  int64_t vocab = 0;
  int64_t input_dim = 16;   // embedding width
  int64_t hidden_dim = 16;  // D
  int64_t chunk = 2;        // C; master gates have D/C entries
  int64_t layers = 3;
  double dropout = 0.0;  // between layers only

  int64_t master_dim() const { return hidden_dim / chunk; }

  void validate() const {
    if (vocab <= 0) throw ConfigError("onlstm: vocab must be positive");
    if (hidden_dim <= 0 || input_dim <= 0 || layers <= 0)
      throw ConfigError("onlstm: dimensions must be positive");
    if (chunk <= 0 || hidden_dim % chunk != 0)
      throw ConfigError("onlstm: hidden_dim must be a multiple of the chunk factor");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("onlstm: dropout must be in [0,1)");
  }
};

struct Model {
  Config cfg;
  ParamStore params;
  Param* embedding = nullptr;
  std::vector<Param*> w;  // per layer: (in + D) x (4D + 2Dm)
  std::vector<Param*> b;
  Param* w_out = nullptr;  // D x vocab
  Param* b_out = nullptr;

  explicit Model(const Config& cfg_, Rng rng) : cfg(cfg_) {
    cfg.validate();
    int64_t d = cfg.hidden_dim, dm = cfg.master_dim();
    embedding = &params.add_uniform("embedding", {cfg.vocab, cfg.input_dim}, cfg.input_dim, rng);
    for (int64_t l = 0; l < cfg.layers; ++l) {
      int64_t in = l == 0 ? cfg.input_dim : d;
      std::string tag = "layer" + std::to_string(l);
      w.push_back(&params.add_uniform(tag + ".w", {in + d, 4 * d + 2 * dm}, in + d, rng));
      b.push_back(&params.add_zeros(tag + ".b", {4 * d + 2 * dm}));
    }
    w_out = &params.add_uniform("out.w", {d, cfg.vocab}, d, rng);
    b_out = &params.add_zeros("out.b", {cfg.vocab});
  }
};

struct StepOutput {
  Tensor h, c;            // (1, D)
  Tensor master_f;        // (1, Dm), monotone non-decreasing
  Tensor master_i;        // (1, Dm), monotone non-increasing
  Tensor dist;            // scalar estimate of the forget split point, in [0, Dm]
};

namespace detail {
// 0/1 matrix that repeats each master-gate entry `chunk` times.
inline Tensor chunk_expander(Tape& tape, int64_t dm, int64_t chunk) {
  std::vector<double> e(dm * dm * chunk, 0.0);
  for (int64_t k = 0; k < dm; ++k)
    for (int64_t c = 0; c < chunk; ++c) e[k * (dm * chunk) + k * chunk + c] = 1.0;
  return tape.constant({dm, dm * chunk}, std::move(e));
}
}  // namespace detail

// One cell update. x: (1, in), h/c: (1, D).
inline StepOutput step(Tape& tape, const Config& cfg, Tensor w, Tensor b, Tensor expander,
                       Tensor x, Tensor h_prev, Tensor c_prev) {
  int64_t d = cfg.hidden_dim, dm = cfg.master_dim();
  Tensor z = tape.concat({x, h_prev}, 1);
  Tensor g = tape.add(tape.matmul(z, w), b);
  Tensor i = tape.sigmoid(tape.slice(g, 1, 0, d));
  Tensor f = tape.sigmoid(tape.slice(g, 1, d, d));
  Tensor o = tape.sigmoid(tape.slice(g, 1, 2 * d, d));
  Tensor chat = tape.tanh(tape.slice(g, 1, 3 * d, d));
  Tensor master_f = cummax(tape, tape.slice(g, 1, 4 * d, dm));
  Tensor master_i = tape.scale(cummax(tape, tape.slice(g, 1, 4 * d + dm, dm)), -1.0, 1.0);
  Tensor dist = tape.scale(tape.sum(master_f), -1.0, static_cast<double>(dm));

  Tensor mf = tape.matmul(master_f, expander);
  Tensor mi = tape.matmul(master_i, expander);
  CombinedGates cg = combine_master_gates(tape, mf, mi, f, i);
  Tensor c = tape.add(tape.mul(cg.f_hat, c_prev), tape.mul(cg.i_hat, chat));
  Tensor h = tape.mul(o, tape.tanh(c));
  return {h, c, master_f, master_i, dist};
}

struct Encoded {
  std::vector<Tensor> hidden;                 // per layer: (T, D)
  std::vector<std::vector<Tensor>> dist;      // per layer: scalar d-hat for t = 1..T-1
  Tensor final_h;                             // last layer, last step (1, D)
};

// Runs the stacked encoder from zero states over a token sequence. The
// distance for the boundary between tokens t-1 and t is the estimate produced
// while consuming token t; the estimate at t = 0 is discarded.
inline Encoded run(Tape& tape, Model& m, const std::vector<int64_t>& ids, Rng* dropout_rng = nullptr) {
  if (ids.empty()) throw ContractError("onlstm: empty token sequence");
  for (int64_t id : ids)
    if (id < 0 || id >= m.cfg.vocab)
      throw VocabError("onlstm: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(m.cfg.vocab));
  int64_t T = static_cast<int64_t>(ids.size());
  int64_t d = m.cfg.hidden_dim;
  Tensor expander = detail::chunk_expander(tape, m.cfg.master_dim(), m.cfg.chunk);
  Tensor emb = tape.embedding_lookup(tape.param(*m.embedding), ids);  // (T, in)

  Encoded out;
  std::vector<Tensor> inputs;
  for (int64_t t = 0; t < T; ++t) inputs.push_back(tape.slice(emb, 0, t, 1));

  for (int64_t l = 0; l < m.cfg.layers; ++l) {
    Tensor w = tape.param(*m.w[l]);
    Tensor b = tape.param(*m.b[l]);
    Tensor h = tape.zeros({1, d});
    Tensor c = tape.zeros({1, d});
    std::vector<Tensor> hs;
    std::vector<Tensor> dists;
    for (int64_t t = 0; t < T; ++t) {
      StepOutput so = step(tape, m.cfg, w, b, expander, inputs[t], h, c);
      h = so.h;
      c = so.c;
      hs.push_back(so.h);
      if (t > 0) dists.push_back(so.dist);
    }
    Tensor stacked = T == 1 ? hs[0] : tape.concat(hs, 0);
    out.hidden.push_back(stacked);
    out.dist.push_back(std::move(dists));
    out.final_h = hs.back();
    if (l + 1 < m.cfg.layers) {
      inputs = hs;
      if (m.cfg.dropout > 0.0 && dropout_rng != nullptr) {
        double keep = 1.0 - m.cfg.dropout;
        for (auto& x : inputs) {
          std::vector<double> mask(d);
          for (double& v : mask) v = dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
          x = tape.mul(x, tape.constant({1, d}, std::move(mask)));
        }
      }
    }
  }
  return out;
}

// Mean next-token NLL over the sequence (positions 0..T-2 predict 1..T-1).
inline Tensor lm_nll(Tape& tape, Model& m, const std::vector<int64_t>& ids,
                     Rng* dropout_rng = nullptr) {
  if (ids.size() < 2) throw ContractError("onlstm: language modeling needs >= 2 tokens");
  Encoded enc = run(tape, m, ids, dropout_rng);
  int64_t T = static_cast<int64_t>(ids.size());
  Tensor ctx = tape.slice(enc.hidden.back(), 0, 0, T - 1);
  Tensor logits = tape.add(tape.matmul(ctx, tape.param(*m.w_out)), tape.param(*m.b_out));
  std::vector<int64_t> targets(ids.begin() + 1, ids.end());
  return tape.mean(tape.nll(logits, targets));
}

struct DistanceProfile {
  std::vector<std::vector<double>> per_layer;  // layers x (T-1)
};

// Extracts syntactic distances (one sequence per layer) without keeping the
// tape. Callers pick a layer (1-based; the middle layers parse best).
inline DistanceProfile distances(Model& m, const std::vector<int64_t>& ids) {
  Tape tape;
  Encoded enc = run(tape, m, ids);
  DistanceProfile prof;
  for (const auto& layer : enc.dist) {
    std::vector<double> ds;
    ds.reserve(layer.size());
    for (const Tensor& t : layer) ds.push_back(t.scalar());
    prof.per_layer.push_back(std::move(ds));
  }
  return prof;
}

// Distance-based constituency parse of one sentence using layer `layer`
// (1-based index into the stack).
inline TreePtr parse(Model& m, const std::vector<int64_t>& ids, int layer) {
  if (layer < 1 || layer > static_cast<int>(m.cfg.layers))
    throw ConfigError("onlstm: layer " + std::to_string(layer) + " out of range");
  DistanceProfile prof = distances(m, ids);
  return distance_to_tree(prof.per_layer[layer - 1], static_cast<int>(ids.size()));
}

}  // namespace sbl::onlstm
