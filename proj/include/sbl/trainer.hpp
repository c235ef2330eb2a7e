#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sbl/adam.hpp"
#include "sbl/checkpoint.hpp"
#include "sbl/dataset.hpp"
#include "sbl/heads.hpp"
#include "sbl/listops.hpp"
#include "sbl/logic.hpp"
#include "sbl/masking.hpp"
#include "sbl/metrics.hpp"
#include "sbl/om_parse.hpp"
#include "sbl/onlstm.hpp"
#include "sbl/ordered_memory.hpp"
#include "sbl/udgn.hpp"
#include "sbl/vocab.hpp"

namespace sbl::train {

enum class ModelKind { kOm, kOnlstm, kUdgn };
enum class TaskKind { kListops, kLogic, kMlm, kLm };

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kOm: return "om";
    case ModelKind::kOnlstm: return "onlstm";
    case ModelKind::kUdgn: return "udgn";
  }
  return "?";
}

inline ModelKind model_kind_from(const std::string& s) {
  if (s == "om") return ModelKind::kOm;
  if (s == "onlstm") return ModelKind::kOnlstm;
  if (s == "udgn") return ModelKind::kUdgn;
  throw ConfigError("unknown model kind '" + s + "'");
}

inline const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::kListops: return "listops";
    case TaskKind::kLogic: return "logic";
    case TaskKind::kMlm: return "mlm";
    case TaskKind::kLm: return "lm";
  }
  return "?";
}

inline TaskKind task_kind_from(const std::string& s) {
  if (s == "listops") return TaskKind::kListops;
  if (s == "logic") return TaskKind::kLogic;
  if (s == "mlm") return TaskKind::kMlm;
  if (s == "lm") return TaskKind::kLm;
  throw ConfigError("unknown task kind '" + s + "'");
}

// Free model hyperparameters; defaults are desk-scale settings.
struct Dims {
  int64_t om_slots = 8;
  int64_t om_dim = 64;
  int64_t om_att_hidden = 64;
  int64_t om_cell_hidden = 128;
  int64_t on_hidden = 64;
  int64_t on_chunk = 8;
  int64_t on_layers = 3;
  int64_t emb_dim = 64;
  int64_t head_hidden = 0;  // 0: derived as 2 * encoder width
  int64_t ud_tags = 32;
  int64_t ud_lstm_hidden = 64;
  int64_t ud_lstm_layers = 1;
  int64_t ud_proj = 64;
  int64_t ud_hidden = 64;
  int64_t ud_channels = 4;
  int64_t ud_layers = 2;
  int64_t ud_max_len = 128;
  std::string ud_activation = "tanh";
  bool ud_gates = true;
  std::string ud_competition = "softmax";
  std::string ud_position = "relative";

  nlohmann::json to_json() const {
    return {{"om_slots", om_slots},       {"om_dim", om_dim},
            {"om_att_hidden", om_att_hidden}, {"om_cell_hidden", om_cell_hidden},
            {"on_hidden", on_hidden},     {"on_chunk", on_chunk},
            {"on_layers", on_layers},     {"emb_dim", emb_dim},
            {"head_hidden", head_hidden}, {"ud_tags", ud_tags},
            {"ud_lstm_hidden", ud_lstm_hidden}, {"ud_lstm_layers", ud_lstm_layers},
            {"ud_proj", ud_proj},         {"ud_hidden", ud_hidden},
            {"ud_channels", ud_channels}, {"ud_layers", ud_layers},
            {"ud_max_len", ud_max_len},   {"ud_activation", ud_activation},
            {"ud_gates", ud_gates},       {"ud_competition", ud_competition},
            {"ud_position", ud_position}};
  }

  static Dims from_json(const nlohmann::json& j) {
    Dims d;
    d.om_slots = j.value("om_slots", d.om_slots);
    d.om_dim = j.value("om_dim", d.om_dim);
    d.om_att_hidden = j.value("om_att_hidden", d.om_att_hidden);
    d.om_cell_hidden = j.value("om_cell_hidden", d.om_cell_hidden);
    d.on_hidden = j.value("on_hidden", d.on_hidden);
    d.on_chunk = j.value("on_chunk", d.on_chunk);
    d.on_layers = j.value("on_layers", d.on_layers);
    d.emb_dim = j.value("emb_dim", d.emb_dim);
    d.head_hidden = j.value("head_hidden", d.head_hidden);
    d.ud_tags = j.value("ud_tags", d.ud_tags);
    d.ud_lstm_hidden = j.value("ud_lstm_hidden", d.ud_lstm_hidden);
    d.ud_lstm_layers = j.value("ud_lstm_layers", d.ud_lstm_layers);
    d.ud_proj = j.value("ud_proj", d.ud_proj);
    d.ud_hidden = j.value("ud_hidden", d.ud_hidden);
    d.ud_channels = j.value("ud_channels", d.ud_channels);
    d.ud_layers = j.value("ud_layers", d.ud_layers);
    d.ud_max_len = j.value("ud_max_len", d.ud_max_len);
    d.ud_activation = j.value("ud_activation", d.ud_activation);
    d.ud_gates = j.value("ud_gates", d.ud_gates);
    d.ud_competition = j.value("ud_competition", d.ud_competition);
    d.ud_position = j.value("ud_position", d.ud_position);
    return d;
  }
};

inline udgn::Config udgn_config_from_dims(const Dims& d, int64_t vocab) {
  udgn::Config c;
  c.vocab = vocab;
  c.tags = d.ud_tags;
  c.emb_dim = d.emb_dim;
  c.lstm_hidden = d.ud_lstm_hidden;
  c.lstm_layers = d.ud_lstm_layers;
  c.proj_dim = d.ud_proj;
  c.hidden_dim = d.ud_hidden;
  c.channels = d.ud_channels;
  c.layers = d.ud_layers;
  c.max_len = d.ud_max_len;
  c.activation = udgn::activation_from_string(d.ud_activation);
  c.gates_enabled = d.ud_gates;
  if (d.ud_competition == "softmax")
    c.competition = udgn::Competition::kSoftmax;
  else if (d.ud_competition == "sigmoid")
    c.competition = udgn::Competition::kSigmoid;
  else
    throw ConfigError("unknown competition mode '" + d.ud_competition + "'");
  if (d.ud_position == "relative")
    c.position = udgn::PositionMode::kRelativeBias;
  else if (d.ud_position == "absolute")
    c.position = udgn::PositionMode::kAbsoluteEncoding;
  else
    throw ConfigError("unknown position mode '" + d.ud_position + "'");
  return c;
}

// A trainable model with everything the task needs: encoder, head, vocab.
struct Bundle {
  ModelKind kind = ModelKind::kOm;
  TaskKind task = TaskKind::kListops;
  tasks::Vocab vocab;
  Dims dims;
  int n_classes = 0;
  bool pair = false;
  uint64_t seed = 0;

  std::unique_ptr<om::Model> om_model;
  std::unique_ptr<onlstm::Model> on_model;
  std::unique_ptr<udgn::Model> ud_model;
  MlpHead head;

  ParamStore& params() {
    switch (kind) {
      case ModelKind::kOm: return om_model->params;
      case ModelKind::kOnlstm: return on_model->params;
      case ModelKind::kUdgn: return ud_model->params;
    }
    throw ConfigError("bundle: bad kind");
  }

  static Bundle create(ModelKind kind, TaskKind task, const tasks::Vocab& vocab, Dims dims,
                       int n_classes, uint64_t seed) {
    Bundle b;
    b.kind = kind;
    b.task = task;
    b.vocab = vocab;
    b.dims = dims;
    b.n_classes = n_classes;
    b.pair = task == TaskKind::kLogic;
    b.seed = seed;
    Rng rng = Rng(seed).split(0xB00D);
    switch (kind) {
      case ModelKind::kOm: {
        om::Config c;
        c.slots = dims.om_slots;
        c.slot_dim = dims.om_dim;
        c.input_dim = dims.emb_dim;
        c.att_hidden = dims.om_att_hidden;
        c.cell_hidden = dims.om_cell_hidden;
        c.vocab = vocab.size();
        b.om_model = std::make_unique<om::Model>(c, rng.split(1));
        break;
      }
      case ModelKind::kOnlstm: {
        onlstm::Config c;
        c.vocab = vocab.size();
        c.input_dim = dims.emb_dim;
        c.hidden_dim = dims.on_hidden;
        c.chunk = dims.on_chunk;
        c.layers = dims.on_layers;
        b.on_model = std::make_unique<onlstm::Model>(c, rng.split(1));
        break;
      }
      case ModelKind::kUdgn: {
        if (task != TaskKind::kMlm) throw ConfigError("udgn trains with the mlm task");
        b.ud_model = std::make_unique<udgn::Model>(udgn_config_from_dims(dims, vocab.size()),
                                                   rng.split(1));
        break;
      }
    }
    if (task == TaskKind::kListops || task == TaskKind::kLogic) {
      if (n_classes <= 0) throw ConfigError("classifier needs n_classes");
      int64_t width = kind == ModelKind::kOm ? dims.om_dim : dims.on_hidden;
      int64_t in = b.pair ? 4 * width : width;
      int64_t hidden = dims.head_hidden > 0 ? dims.head_hidden : 2 * width;
      Rng hr = rng.split(2);
      b.head = MlpHead(b.params(), "head", in, hidden, n_classes, hr);
    }
    return b;
  }

  // Final sentence representation (1, width) for classification tasks.
  Tensor encode_final(Tape& tape, const std::vector<int64_t>& ids) {
    if (kind == ModelKind::kOm) {
      om::Trace tr = om::forward(tape, *om_model, ids);
      return tr.output_tensor;
    }
    onlstm::Encoded enc = onlstm::run(tape, *on_model, ids);
    return enc.final_h;
  }

  Tensor class_logits(Tape& tape, const std::vector<int64_t>& ids1,
                      const std::vector<int64_t>& ids2) {
    Tensor h1 = encode_final(tape, ids1);
    Tensor feat = h1;
    if (pair) {
      Tensor h2 = encode_final(tape, ids2);
      feat = om::pair_features(tape, h1, h2);
    }
    return head.forward(tape, feat);
  }

  nlohmann::json meta_json() const {
    nlohmann::json j;
    j["model"] = model_kind_name(kind);
    j["task"] = task_kind_name(task);
    j["vocab"] = vocab.tokens();
    j["dims"] = dims.to_json();
    j["n_classes"] = n_classes;
    j["pair"] = pair;
    j["seed"] = seed;
    return j;
  }

  static Bundle from_meta(const nlohmann::json& meta) {
    tasks::Vocab vocab(meta.at("vocab").get<std::vector<std::string>>());
    Bundle b = create(model_kind_from(meta.at("model").get<std::string>()),
                      task_kind_from(meta.at("task").get<std::string>()), vocab,
                      Dims::from_json(meta.at("dims")), meta.value("n_classes", 0),
                      meta.value("seed", uint64_t{0}));
    return b;
  }
};

// ---- checkpoint glue ---------------------------------------------------------

inline void save_bundle(const std::string& path, Bundle& b, Adam* adam = nullptr,
                        nlohmann::json extra_meta = {}) {
  checkpoint::File f;
  f.meta = b.meta_json();
  if (!extra_meta.is_null())
    for (auto& [k, v] : extra_meta.items()) f.meta[k] = v;
  checkpoint::pack_params(f, b.params());
  if (adam != nullptr) {
    f.meta["adam_steps"] = adam->steps();
    ParamStore& ps = b.params();
    for (size_t i = 0; i < ps.size(); ++i) {
      f.entries.push_back({"adam.m." + ps.at(i).name, ps.at(i).shape, adam->first_moments()[i]});
      f.entries.push_back({"adam.v." + ps.at(i).name, ps.at(i).shape, adam->second_moments()[i]});
    }
  }
  checkpoint::save(path, f);
}

inline Bundle load_bundle(const std::string& path, nlohmann::json* meta_out = nullptr) {
  checkpoint::File f = checkpoint::load(path);
  Bundle b = Bundle::from_meta(f.meta);
  checkpoint::unpack_params(f, b.params());
  if (meta_out != nullptr) *meta_out = f.meta;
  return b;
}

// Restores optimizer moments saved alongside the parameters (no-op when the
// checkpoint carries none). The Adam instance must be bound to this bundle's
// store.
inline void load_adam_state(const std::string& path, ParamStore& ps, Adam& adam) {
  checkpoint::File f = checkpoint::load(path);
  if (!f.meta.contains("adam_steps")) return;
  adam.set_steps(f.meta["adam_steps"].get<int64_t>());
  for (size_t i = 0; i < ps.size(); ++i) {
    const checkpoint::Entry* m = f.find("adam.m." + ps.at(i).name);
    const checkpoint::Entry* v = f.find("adam.v." + ps.at(i).name);
    if (m != nullptr) adam.first_moments()[i] = m->data;
    if (v != nullptr) adam.second_moments()[i] = v->data;
  }
}

// ---- encoded datasets ----------------------------------------------------------

struct EncodedExample {
  std::vector<int64_t> ids1, ids2;
  int label = -1;
  int ops = -1;
};

inline int label_to_class(TaskKind task, const std::string& label) {
  if (task == TaskKind::kListops) {
    if (label.size() != 1 || label[0] < '0' || label[0] > '9')
      throw ConfigError("listops label must be a digit, got '" + label + "'");
    return label[0] - '0';
  }
  if (task == TaskKind::kLogic)
    return static_cast<int>(tasks::relation_from_name(label));
  throw ConfigError("task has no class labels");
}

inline int task_class_count(TaskKind task) {
  if (task == TaskKind::kListops) return 10;
  if (task == TaskKind::kLogic) return tasks::kNumRelations;
  throw ConfigError("task has no class labels");
}

inline std::vector<EncodedExample> encode_examples(const std::vector<tasks::Example>& raw,
                                                   TaskKind task, const tasks::Vocab& vocab) {
  std::vector<EncodedExample> out;
  out.reserve(raw.size());
  for (const tasks::Example& ex : raw) {
    EncodedExample e;
    e.ids1 = vocab.encode(ex.tokens);
    if (!ex.tokens2.empty()) e.ids2 = vocab.encode(ex.tokens2);
    if (task == TaskKind::kListops || task == TaskKind::kLogic)
      e.label = label_to_class(task, ex.label);
    e.ops = ex.ops;
    out.push_back(std::move(e));
  }
  return out;
}

// ---- training -----------------------------------------------------------------

struct TrainOptions {
  int epochs = 2;
  int batch = 16;
  double lr = 1e-3;
  double clip_norm = 5.0;
  double mask_rate = 0.3;
  uint64_t seed = 0;
  std::string checkpoint_path;  // written after every epoch when non-empty
  std::string csv_path;
  std::string dataset_id;
  bool quiet = false;
};

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  std::map<std::string, double> metrics;
};

struct TrainOutcome {
  std::vector<EpochRow> rows;
  MetricReport report;
  bool diverged = false;
};

namespace detail {

inline void write_csv(const std::string& path, const std::vector<EpochRow>& rows) {
  if (path.empty()) return;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  std::vector<std::string> cols;
  for (const EpochRow& r : rows)
    for (const auto& [k, v] : r.metrics)
      if (std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);
  std::sort(cols.begin(), cols.end());
  os << "epoch,loss";
  for (const auto& c : cols) os << "," << c;
  os << "\n";
  os.precision(17);
  for (const EpochRow& r : rows) {
    os << r.epoch << "," << r.train_loss;
    for (const auto& c : cols) {
      os << ",";
      auto it = r.metrics.find(c);
      if (it != r.metrics.end()) os << it->second;
    }
    os << "\n";
  }
}

}  // namespace detail

// Accuracy (plus per-operator-count buckets when present) of a classifier.
inline std::map<std::string, double> eval_classifier(Bundle& b,
                                                     const std::vector<EncodedExample>& data) {
  int64_t hit = 0;
  std::map<int, std::pair<int64_t, int64_t>> by_bucket;
  for (const EncodedExample& ex : data) {
    Tape tape;
    Tensor logits = b.class_logits(tape, ex.ids1, ex.ids2);
    auto v = logits.val();
    int best = 0;
    for (int c = 1; c < b.n_classes; ++c)
      if (v[c] > v[best]) best = c;
    bool ok = best == ex.label;
    hit += ok;
    if (ex.ops >= 0) {
      auto& bb = by_bucket[ex.ops];
      ++bb.first;
      bb.second += ok;
    }
  }
  std::map<std::string, double> out;
  out["accuracy"] = data.empty() ? 0.0 : static_cast<double>(hit) / data.size();
  for (auto& [ops, cnt] : by_bucket)
    out["accuracy_ops" + std::to_string(ops)] =
        static_cast<double>(cnt.second) / static_cast<double>(cnt.first);
  return out;
}

// Masked perplexity with a fixed masking stream (comparable across models).
inline double eval_mlm_ppl(Bundle& b, const std::vector<std::vector<int64_t>>& corpus,
                           double rate, uint64_t mask_seed) {
  double nll_sum = 0.0;
  int64_t count = 0;
  Rng rng = Rng(mask_seed);
  for (size_t i = 0; i < corpus.size(); ++i) {
    Rng r = rng.split(i);
    tasks::MaskedBatch mb = tasks::mask_tokens(corpus[i], rate, r, b.vocab);
    if (mb.positions.empty()) continue;
    Tape tape;
    Tensor per_pos;
    if (b.kind == ModelKind::kUdgn) {
      udgn::ForwardResult fw = udgn::forward(tape, *b.ud_model, mb.input);
      per_pos = tape.nll(tape.embedding_lookup(fw.logits, mb.positions), mb.targets);
    } else if (b.kind == ModelKind::kOnlstm) {
      onlstm::Encoded enc = onlstm::run(tape, *b.on_model, mb.input);
      Tensor rows = tape.embedding_lookup(enc.hidden.back(), mb.positions);
      Tensor logits = tape.add(tape.matmul(rows, tape.param(*b.on_model->w_out)),
                               tape.param(*b.on_model->b_out));
      per_pos = tape.nll(logits, mb.targets);
    } else {
      throw ConfigError("mlm evaluation needs a udgn or onlstm model");
    }
    for (double v : per_pos.val()) nll_sum += v;
    count += static_cast<int64_t>(mb.positions.size());
  }
  if (count == 0) throw ContractError("eval_mlm_ppl: nothing was masked");
  return std::exp(nll_sum / static_cast<double>(count));
}

// Next-token perplexity for the recurrent LM task.
inline double eval_lm_ppl(Bundle& b, const std::vector<std::vector<int64_t>>& corpus) {
  double nll_sum = 0.0;
  int64_t count = 0;
  for (const auto& ids : corpus) {
    if (ids.size() < 2) continue;
    Tape tape;
    onlstm::Encoded enc = onlstm::run(tape, *b.on_model, ids);
    int64_t T = static_cast<int64_t>(ids.size());
    Tensor ctx = tape.slice(enc.hidden.back(), 0, 0, T - 1);
    Tensor logits = tape.add(tape.matmul(ctx, tape.param(*b.on_model->w_out)),
                             tape.param(*b.on_model->b_out));
    std::vector<int64_t> targets(ids.begin() + 1, ids.end());
    Tensor nll = tape.nll(logits, targets);
    for (double v : nll.val()) nll_sum += v;
    count += T - 1;
  }
  if (count == 0) throw ContractError("eval_lm_ppl: empty corpus");
  return std::exp(nll_sum / static_cast<double>(count));
}

// Add-one-smoothed unigram masked-LM baseline: train-set frequencies scored
// on the same masked positions.
inline double unigram_baseline_ppl(const std::vector<std::vector<int64_t>>& train,
                                   const std::vector<std::vector<int64_t>>& eval_corpus,
                                   double rate, uint64_t mask_seed, const tasks::Vocab& vocab) {
  std::vector<double> counts(vocab.size(), 1.0);
  double total = static_cast<double>(vocab.size());
  for (const auto& ids : train)
    for (int64_t id : ids) {
      counts[id] += 1.0;
      total += 1.0;
    }
  double nll_sum = 0.0;
  int64_t n = 0;
  Rng rng = Rng(mask_seed);
  for (size_t i = 0; i < eval_corpus.size(); ++i) {
    Rng r = rng.split(i);
    tasks::MaskedBatch mb = tasks::mask_tokens(eval_corpus[i], rate, r, vocab);
    for (int64_t t : mb.targets) {
      nll_sum += -std::log(counts[t] / total);
      ++n;
    }
  }
  if (n == 0) throw ContractError("unigram baseline: nothing was masked");
  return std::exp(nll_sum / static_cast<double>(n));
}

// Shared minibatch loop: shuffle, map-then-sum gradients in index order,
// clip, step. Returns mean loss; NaN losses abort with the last epoch's
// parameters restored.
class Trainer {
 public:
  Trainer(Bundle& bundle, const TrainOptions& opt)
      : b_(bundle), opt_(opt), adam_(bundle.params(), AdamConfig{opt.lr, 0.9, 0.999, 1e-8}) {}

  Adam& adam() { return adam_; }

  // Classification over encoded examples; eval_data may be empty.
  TrainOutcome train_classifier(const std::vector<EncodedExample>& data,
                                const std::vector<EncodedExample>& eval_data) {
    return run(static_cast<int64_t>(data.size()),
               [&](Tape& tape, int64_t i) {
                 const EncodedExample& ex = data[i];
                 Tensor logits = b_.class_logits(tape, ex.ids1, ex.ids2);
                 return tape.mean(tape.nll(logits, {ex.label}));
               },
               [&](int) {
                 return eval_data.empty() ? std::map<std::string, double>{}
                                          : eval_classifier(b_, eval_data);
               });
  }

  // Masked LM over a token-id corpus; masks are re-drawn every epoch.
  TrainOutcome train_mlm(const std::vector<std::vector<int64_t>>& corpus,
                         const std::vector<std::vector<int64_t>>& eval_corpus) {
    int cur_epoch = 0;
    TrainOutcome out = run(
        static_cast<int64_t>(corpus.size()),
        [&](Tape& tape, int64_t i) -> Tensor {
          Rng r = Rng(opt_.seed).split(0x3A5C).split(cur_epoch).split(i);
          tasks::MaskedBatch mb = tasks::mask_tokens(corpus[i], opt_.mask_rate, r, b_.vocab);
          if (mb.positions.empty()) return Tensor{};
          if (b_.kind == ModelKind::kUdgn) {
            udgn::ForwardResult fw = udgn::forward(tape, *b_.ud_model, mb.input);
            return udgn::mlm_nll(tape, fw, mb.positions, mb.targets);
          }
          onlstm::Encoded enc = onlstm::run(tape, *b_.on_model, mb.input);
          Tensor rows = tape.embedding_lookup(enc.hidden.back(), mb.positions);
          Tensor logits = tape.add(tape.matmul(rows, tape.param(*b_.on_model->w_out)),
                                   tape.param(*b_.on_model->b_out));
          return tape.mean(tape.nll(logits, mb.targets));
        },
        [&](int) {
          std::map<std::string, double> m;
          if (!eval_corpus.empty())
            m["masked_ppl"] = eval_mlm_ppl(b_, eval_corpus, opt_.mask_rate,
                                           Rng(opt_.seed).split(0xE7A1).seed());
          return m;
        },
        &cur_epoch);
    return out;
  }

  // Recurrent LM (next-token) over a token-id corpus.
  TrainOutcome train_lm(const std::vector<std::vector<int64_t>>& corpus,
                        const std::vector<std::vector<int64_t>>& eval_corpus) {
    return run(static_cast<int64_t>(corpus.size()),
               [&](Tape& tape, int64_t i) -> Tensor {
                 if (corpus[i].size() < 2) return Tensor{};
                 return onlstm::lm_nll(tape, *b_.on_model, corpus[i]);
               },
               [&](int) {
                 std::map<std::string, double> m;
                 if (!eval_corpus.empty()) m["ppl"] = eval_lm_ppl(b_, eval_corpus);
                 return m;
               });
  }

 private:
  Bundle& b_;
  TrainOptions opt_;
  Adam adam_;

  template <class LossFn, class EvalFn>
  TrainOutcome run(int64_t n, LossFn&& loss_fn, EvalFn&& eval_fn, int* epoch_out = nullptr) {
    TrainOutcome out;
    ParamStore& ps = b_.params();
    std::vector<std::vector<double>> last_good;
    for (Param& p : ps) last_good.push_back(p.value);

    for (int epoch = 1; epoch <= opt_.epochs; ++epoch) {
      if (epoch_out != nullptr) *epoch_out = epoch;
      Rng shuffle_rng = Rng(opt_.seed).split(0x5AFF).split(epoch);
      std::vector<int64_t> order(n);
      for (int64_t i = 0; i < n; ++i) order[i] = i;
      for (int64_t i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng_below(shuffle_rng, i + 1)]);

      double loss_sum = 0.0;
      int64_t loss_count = 0;
      bool diverged = false;
      for (int64_t at = 0; at < n && !diverged; at += opt_.batch) {
        int64_t end = std::min<int64_t>(n, at + opt_.batch);
        ps.zero_grad();
        int64_t used = 0;
        for (int64_t i = at; i < end; ++i) {
          Tape tape;
          Tensor loss;
          try {
            loss = loss_fn(tape, order[i]);
          } catch (const NumericError&) {
            diverged = true;
            break;
          }
          if (!loss.valid()) continue;
          double lv = loss.scalar();
          if (!std::isfinite(lv)) {
            diverged = true;
            break;
          }
          tape.backward(loss, /*accumulate_params=*/false);
          tape.flush_param_grads();
          loss_sum += lv;
          ++loss_count;
          ++used;
        }
        if (diverged) break;
        if (used == 0) continue;
        double inv = 1.0 / static_cast<double>(used);
        for (Param& p : ps)
          for (double& g : p.grad) g *= inv;
        adam_.clip_global_norm(opt_.clip_norm);
        adam_.step();
      }

      if (diverged) {
        for (size_t i = 0; i < ps.size(); ++i) ps.at(i).value = last_good[i];
        out.diverged = true;
        break;
      }

      EpochRow row;
      row.epoch = epoch;
      row.train_loss = loss_count == 0 ? 0.0 : loss_sum / static_cast<double>(loss_count);
      row.metrics = eval_fn(epoch);
      out.rows.push_back(row);
      for (size_t i = 0; i < ps.size(); ++i) last_good[i] = ps.at(i).value;
      if (!opt_.checkpoint_path.empty()) save_bundle(opt_.checkpoint_path, b_, &adam_);
      if (!opt_.quiet) {
        std::string line = "epoch " + std::to_string(epoch) +
                           " loss " + std::to_string(row.train_loss);
        for (const auto& [k, v] : row.metrics) line += " " + k + " " + std::to_string(v);
        std::fprintf(stderr, "%s\n", line.c_str());
      }
    }

    detail::write_csv(opt_.csv_path, out.rows);
    out.report.dataset_id = opt_.dataset_id;
    out.report.seed = opt_.seed;
    out.report.config = {{"epochs", opt_.epochs}, {"batch", opt_.batch},
                         {"lr", opt_.lr},         {"clip_norm", opt_.clip_norm},
                         {"mask_rate", opt_.mask_rate}, {"diverged", out.diverged}};
    if (!out.rows.empty()) {
      out.report.metrics["train_loss"] = out.rows.back().train_loss;
      for (const auto& [k, v] : out.rows.back().metrics) out.report.metrics[k] = v;
    }
    return out;
  }

  static int64_t rng_below(Rng& rng, int64_t n) {
    return static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n)));
  }
};

}  // namespace sbl::train
