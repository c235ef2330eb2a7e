#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sbl/param.hpp"
#include "sbl/rng.hpp"
#include "sbl/tape.hpp"

namespace sbl::udgn {

enum class Activation { kTanh, kIdentity, kRelu, kElu };
enum class Competition { kSoftmax, kSigmoid };
enum class PositionMode { kRelativeBias, kAbsoluteEncoding };

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "identity") return Activation::kIdentity;
  if (s == "relu") return Activation::kRelu;
  if (s == "elu") return Activation::kElu;
  throw ConfigError("udgn: unknown activation '" + s + "'");
}

struct Config {
  int64_t vocab = 0;
  int64_t tags = 32;         // soft tag classes shared across rare words
  int64_t emb_dim = 32;      // parser embedding width
  int64_t lstm_hidden = 32;  // per direction
  int64_t lstm_layers = 1;
  int64_t proj_dim = 32;     // head/dependent projection width
  int64_t hidden_dim = 32;   // D, the graph-network width
  int64_t channels = 4;      // N_c
  int64_t layers = 2;        // L
  int64_t max_len = 128;     // only used by absolute positional encoding
  Activation activation = Activation::kTanh;
  bool gates_enabled = true;
  Competition competition = Competition::kSoftmax;
  PositionMode position = PositionMode::kRelativeBias;

  int64_t channel_dim() const { return hidden_dim / channels; }

  void validate() const {
    if (vocab <= 0) throw ConfigError("udgn: vocab must be positive");
    if (tags <= 0 || emb_dim <= 0 || lstm_hidden <= 0 || lstm_layers <= 0 || proj_dim <= 0 ||
        hidden_dim <= 0 || layers <= 0 || max_len <= 0)
      throw ConfigError("udgn: dimensions must be positive");
    if (channels <= 0 || hidden_dim % channels != 0)
      throw ConfigError("udgn: hidden_dim must be a multiple of the channel count");
  }
};

struct Model {
  Config cfg;
  ParamStore params;

  // parser
  Param* word_emb = nullptr;  // V x emb
  Param* tag_emb = nullptr;   // K x emb
  Param* tag_logits = nullptr;  // V x K
  struct LstmDir {
    Param* w;  // (in + h) x 4h
    Param* b;
  };
  std::vector<LstmDir> lstm_fwd, lstm_bwd;
  Param* w_head = nullptr;
  Param* b_head = nullptr;
  Param* w_dep = nullptr;
  Param* b_dep = nullptr;

  // graph network trunk
  Param* trunk_emb = nullptr;  // V x D
  Param* pos_emb = nullptr;    // max_len x D (absolute mode only)
  struct Layer {
    std::vector<Param*> w_ch;  // per channel: D x 4*Dc
    std::vector<Param*> b_ch;
    std::vector<Param*> bias_left;   // per channel, scalar
    std::vector<Param*> bias_right;
    Param* w_out;
    Param* b_out;
  };
  std::vector<Layer> layers;
  Param* w_vocab = nullptr;  // D x V
  Param* b_vocab = nullptr;

  explicit Model(const Config& cfg_, Rng rng) : cfg(cfg_) {
    cfg.validate();
    word_emb = &params.add_uniform("parser.word_emb", {cfg.vocab, cfg.emb_dim}, cfg.emb_dim, rng);
    tag_emb = &params.add_uniform("parser.tag_emb", {cfg.tags, cfg.emb_dim}, cfg.emb_dim, rng);
    tag_logits = &params.add_uniform("parser.tag_logits", {cfg.vocab, cfg.tags}, cfg.tags, rng);
    for (int64_t l = 0; l < cfg.lstm_layers; ++l) {
      int64_t in = l == 0 ? cfg.emb_dim : 2 * cfg.lstm_hidden;
      std::string tag = "parser.lstm" + std::to_string(l);
      lstm_fwd.push_back({&params.add_uniform(tag + ".fwd.w", {in + cfg.lstm_hidden, 4 * cfg.lstm_hidden},
                                              in + cfg.lstm_hidden, rng),
                          &params.add_zeros(tag + ".fwd.b", {4 * cfg.lstm_hidden})});
      lstm_bwd.push_back({&params.add_uniform(tag + ".bwd.w", {in + cfg.lstm_hidden, 4 * cfg.lstm_hidden},
                                              in + cfg.lstm_hidden, rng),
                          &params.add_zeros(tag + ".bwd.b", {4 * cfg.lstm_hidden})});
    }
    w_head = &params.add_uniform("parser.head.w", {2 * cfg.lstm_hidden, cfg.proj_dim},
                                 2 * cfg.lstm_hidden, rng);
    b_head = &params.add_zeros("parser.head.b", {cfg.proj_dim});
    w_dep = &params.add_uniform("parser.dep.w", {2 * cfg.lstm_hidden, cfg.proj_dim},
                                2 * cfg.lstm_hidden, rng);
    b_dep = &params.add_zeros("parser.dep.b", {cfg.proj_dim});

    trunk_emb = &params.add_uniform("trunk.emb", {cfg.vocab, cfg.hidden_dim}, cfg.hidden_dim, rng);
    if (cfg.position == PositionMode::kAbsoluteEncoding)
      pos_emb = &params.add_uniform("trunk.pos", {cfg.max_len, cfg.hidden_dim}, cfg.hidden_dim, rng);
    int64_t dc = cfg.channel_dim();
    for (int64_t l = 0; l < cfg.layers; ++l) {
      Layer layer;
      std::string tag = "trunk.layer" + std::to_string(l);
      for (int64_t k = 0; k < cfg.channels; ++k) {
        std::string ck = tag + ".ch" + std::to_string(k);
        layer.w_ch.push_back(&params.add_uniform(ck + ".w", {cfg.hidden_dim, 4 * dc},
                                                 cfg.hidden_dim, rng));
        layer.b_ch.push_back(&params.add_zeros(ck + ".b", {4 * dc}));
        if (cfg.position == PositionMode::kRelativeBias) {
          layer.bias_left.push_back(&params.add_zeros(ck + ".bias_left", {1}));
          layer.bias_right.push_back(&params.add_zeros(ck + ".bias_right", {1}));
        }
      }
      layer.w_out = &params.add_uniform(tag + ".out.w", {cfg.hidden_dim, cfg.hidden_dim},
                                        cfg.hidden_dim, rng);
      layer.b_out = &params.add_zeros(tag + ".out.b", {cfg.hidden_dim});
      layers.push_back(layer);
    }
    w_vocab = &params.add_uniform("trunk.vocab.w", {cfg.hidden_dim, cfg.vocab}, cfg.hidden_dim, rng);
    b_vocab = &params.add_zeros("trunk.vocab.b", {cfg.vocab});
  }
};

// Word embedding plus the soft-tag component: e_w + sum_k softmax(tau_w)_k e_tag_k.
inline Tensor soft_tag_embed(Tape& tape, Model& m, const std::vector<int64_t>& ids) {
  Tensor words = tape.embedding_lookup(tape.param(*m.word_emb), ids);
  Tensor tag_dist = tape.softmax(tape.embedding_lookup(tape.param(*m.tag_logits), ids), 1);
  return tape.add(words, tape.matmul(tag_dist, tape.param(*m.tag_emb)));
}

namespace detail {

inline Tensor lstm_direction(Tape& tape, Tensor w, Tensor b, const std::vector<Tensor>& xs,
                             int64_t hidden, bool backward) {
  int64_t T = static_cast<int64_t>(xs.size());
  Tensor h = tape.zeros({1, hidden});
  Tensor c = tape.zeros({1, hidden});
  std::vector<Tensor> out(T);
  for (int64_t s = 0; s < T; ++s) {
    int64_t t = backward ? T - 1 - s : s;
    Tensor z = tape.concat({xs[t], h}, 1);
    Tensor g = tape.add(tape.matmul(z, w), b);
    Tensor i = tape.sigmoid(tape.slice(g, 1, 0, hidden));
    Tensor f = tape.sigmoid(tape.slice(g, 1, hidden, hidden));
    Tensor o = tape.sigmoid(tape.slice(g, 1, 2 * hidden, hidden));
    Tensor u = tape.tanh(tape.slice(g, 1, 3 * hidden, hidden));
    c = tape.add(tape.mul(f, c), tape.mul(i, u));
    h = tape.mul(o, tape.tanh(c));
    out[t] = h;
  }
  return tape.concat(out, 0);
}

inline std::vector<Tensor> rows_of(Tape& tape, Tensor mat) {
  std::vector<Tensor> rows;
  for (int64_t t = 0; t < mat.shape()[0]; ++t) rows.push_back(tape.slice(mat, 0, t, 1));
  return rows;
}

inline Tensor apply_activation(Tape& tape, Activation act, Tensor x) {
  switch (act) {
    case Activation::kTanh: return tape.tanh(x);
    case Activation::kIdentity: return x;
    case Activation::kRelu: return tape.relu(x);
    case Activation::kElu: return tape.elu(x);
  }
  throw ConfigError("udgn: bad activation");
}

}  // namespace detail

// Head-probability matrix: BiLSTM over soft-tag embeddings, bilinear
// head/dependent scores, diagonal masked out, row softmax. (T, T).
inline Tensor parser_forward(Tape& tape, Model& m, const std::vector<int64_t>& ids) {
  int64_t T = static_cast<int64_t>(ids.size());
  if (T < 2) throw ContractError("udgn parser: degenerate sentence (a single token has no head)");
  Tensor x = soft_tag_embed(tape, m, ids);
  std::vector<Tensor> inputs = detail::rows_of(tape, x);
  Tensor states;
  for (int64_t l = 0; l < m.cfg.lstm_layers; ++l) {
    Tensor fwd = detail::lstm_direction(tape, tape.param(*m.lstm_fwd[l].w),
                                        tape.param(*m.lstm_fwd[l].b), inputs, m.cfg.lstm_hidden,
                                        false);
    Tensor bwd = detail::lstm_direction(tape, tape.param(*m.lstm_bwd[l].w),
                                        tape.param(*m.lstm_bwd[l].b), inputs, m.cfg.lstm_hidden,
                                        true);
    states = tape.concat({fwd, bwd}, 1);
    if (l + 1 < m.cfg.lstm_layers) inputs = detail::rows_of(tape, states);
  }
  Tensor h_head = tape.add(tape.matmul(states, tape.param(*m.w_head)), tape.param(*m.b_head));
  Tensor h_dep = tape.add(tape.matmul(states, tape.param(*m.w_dep)), tape.param(*m.b_dep));
  Tensor scores = tape.scale(tape.matmul(h_dep, h_head, /*transpose_b=*/true),
                             1.0 / std::sqrt(static_cast<double>(m.cfg.proj_dim)));
  std::vector<double> diag(T * T, 0.0);
  for (int64_t i = 0; i < T; ++i) diag[i * T + i] = -1e30;
  scores = tape.add(scores, tape.constant({T, T}, std::move(diag)));
  return tape.softmax(scores, 1);
}

// Fuzzy-or of the two directed probabilities: the chance that at least one
// directed dependency links i and j. Symmetric, zero diagonal.
inline Tensor dependency_mask(Tape& tape, Tensor p) {
  const Shape& s = p.shape();
  if (s.size() != 2 || s[0] != s[1])
    throw ContractError("dependency_mask: p must be square, got " + shape_str(s));
  auto vals = p.val();
  for (double v : vals)
    if (v < 0.0 || v > 1.0)
      throw ContractError("dependency_mask: probabilities must lie in [0,1]");
  for (int64_t i = 0; i < s[0]; ++i)
    if (vals[i * s[0] + i] != 0.0)
      throw ContractError("dependency_mask: p has a non-zero diagonal");
  Tensor pt = tape.transpose(p);
  return tape.sub(tape.add(p, pt), tape.mul(p, pt));
}

struct LayerResult {
  Tensor out;                          // (T, D)
  std::vector<Tensor> channel_probs;  // per channel: (T, T) competition weights
};

// One graph layer: channels compete per token pair, the mask throttles each
// pair, channel payloads are gated and aggregated, then projected back with a
// residual connection.
inline LayerResult dgn_layer(Tape& tape, Model& m, int64_t layer_idx, Tensor h, Tensor mask) {
  const Config& cfg = m.cfg;
  const Model::Layer& L = m.layers[layer_idx];
  int64_t T = h.shape()[0];
  int64_t dc = cfg.channel_dim();

  std::vector<Tensor> scores(cfg.channels);
  std::vector<Tensor> values(cfg.channels), gates(cfg.channels);
  Tensor lower_mask, upper_mask;
  if (cfg.position == PositionMode::kRelativeBias) {
    std::vector<double> lower(T * T, 0.0), upper(T * T, 0.0);
    for (int64_t i = 0; i < T; ++i)
      for (int64_t j = 0; j < T; ++j) {
        if (i > j) lower[i * T + j] = 1.0;
        if (i < j) upper[i * T + j] = 1.0;
      }
    lower_mask = tape.constant({T, T}, std::move(lower));
    upper_mask = tape.constant({T, T}, std::move(upper));
  }
  for (int64_t k = 0; k < cfg.channels; ++k) {
    Tensor proj = tape.add(tape.matmul(h, tape.param(*L.w_ch[k])), tape.param(*L.b_ch[k]));
    Tensor q = tape.slice(proj, 1, 0, dc);
    Tensor key = tape.slice(proj, 1, dc, dc);
    values[k] = tape.slice(proj, 1, 2 * dc, dc);
    gates[k] = tape.slice(proj, 1, 3 * dc, dc);
    Tensor e = tape.scale(tape.matmul(q, key, /*transpose_b=*/true),
                          1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)));
    if (cfg.position == PositionMode::kRelativeBias) {
      Tensor bias = tape.add(tape.mul(lower_mask, tape.param(*L.bias_left[k])),
                             tape.mul(upper_mask, tape.param(*L.bias_right[k])));
      e = tape.add(e, bias);
    }
    scores[k] = e;
  }

  LayerResult res;
  res.channel_probs.resize(cfg.channels);
  if (cfg.competition == Competition::kSoftmax) {
    std::vector<Tensor> cols;
    for (int64_t k = 0; k < cfg.channels; ++k)
      cols.push_back(tape.reshape(scores[k], {T * T, 1}));
    Tensor stacked = cfg.channels == 1 ? cols[0] : tape.concat(cols, 1);
    Tensor probs = tape.softmax(stacked, 1);
    for (int64_t k = 0; k < cfg.channels; ++k)
      res.channel_probs[k] = tape.reshape(tape.slice(probs, 1, k, 1), {T, T});
  } else {
    for (int64_t k = 0; k < cfg.channels; ++k) res.channel_probs[k] = tape.sigmoid(scores[k]);
  }

  std::vector<Tensor> outputs;
  for (int64_t k = 0; k < cfg.channels; ++k) {
    Tensor a = tape.mul(res.channel_probs[k], mask);
    Tensor payload = detail::apply_activation(tape, cfg.activation, values[k]);
    Tensor prop = tape.matmul(a, payload);
    outputs.push_back(cfg.gates_enabled ? tape.mul(tape.sigmoid(gates[k]), prop) : prop);
  }
  Tensor merged = cfg.channels == 1 ? outputs[0] : tape.concat(outputs, 1);
  res.out = tape.add(h, tape.add(tape.matmul(merged, tape.param(*L.w_out)), tape.param(*L.b_out)));
  return res;
}

struct ForwardResult {
  Tensor hidden;  // (T, D) contextual embeddings
  Tensor logits;  // (T, V)
  Tensor p;       // (T, T) head probabilities
  Tensor mask;    // (T, T) fuzzy-or mask
  std::vector<std::vector<Tensor>> channel_probs;  // layers x channels
};

// Full pass: parser -> soft mask -> graph layers -> per-position vocabulary
// logits. All gradient flow into the parser goes through the mask.
inline ForwardResult forward(Tape& tape, Model& m, const std::vector<int64_t>& ids) {
  for (int64_t id : ids)
    if (id < 0 || id >= m.cfg.vocab)
      throw VocabError("udgn: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(m.cfg.vocab));
  int64_t T = static_cast<int64_t>(ids.size());
  ForwardResult res;
  res.p = parser_forward(tape, m, ids);
  res.mask = dependency_mask(tape, res.p);
  Tensor h = tape.embedding_lookup(tape.param(*m.trunk_emb), ids);
  if (m.cfg.position == PositionMode::kAbsoluteEncoding) {
    if (T > m.cfg.max_len)
      throw ConfigError("udgn: sentence longer than max_len for absolute positions");
    h = tape.add(h, tape.slice(tape.param(*m.pos_emb), 0, 0, T));
  }
  for (int64_t l = 0; l < m.cfg.layers; ++l) {
    LayerResult lr = dgn_layer(tape, m, l, h, res.mask);
    h = lr.out;
    res.channel_probs.push_back(std::move(lr.channel_probs));
  }
  res.hidden = h;
  res.logits = tape.add(tape.matmul(h, tape.param(*m.w_vocab)), tape.param(*m.b_vocab));
  return res;
}

// Mean NLL of the original tokens at the masked positions.
inline Tensor mlm_nll(Tape& tape, const ForwardResult& fwd, const std::vector<int64_t>& positions,
                      const std::vector<int64_t>& targets) {
  if (positions.empty()) throw ContractError("mlm_nll: no masked positions");
  if (positions.size() != targets.size()) throw ContractError("mlm_nll: positions/targets differ");
  Tensor rows = tape.embedding_lookup(fwd.logits, positions);
  return tape.mean(tape.nll(rows, targets));
}

}  // namespace sbl::udgn
