// Command-line surface: dataset generation, training, parsing, evaluation,
// gradient checking and trace inspection. Every artifact-producing run writes
// a manifest of the fully resolved configuration next to its outputs;
// re-running with --config <manifest> reproduces the artifacts bit-exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sbl/chuliu.hpp"
#include "sbl/dataset.hpp"
#include "sbl/gradcheck.hpp"
#include "sbl/listops.hpp"
#include "sbl/logic.hpp"
#include "sbl/om_parse.hpp"
#include "sbl/pcc.hpp"
#include "sbl/toycorpus.hpp"
#include "sbl/trainer.hpp"
#include "sbl/tree.hpp"

namespace {

using namespace sbl;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;   // failed check or metric threshold
constexpr int kExitUsage = 2;     // bad flags or inconsistent configuration

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << text;
  if (!os) throw IoError("failed writing " + path);
}

void write_manifest(CLI::App* sub, const std::string& path) {
  std::ostringstream os;
  os << "# sbl " << sub->get_name() << " manifest; re-run with: sbl " << sub->get_name()
     << " --config " << path << "\n";
  os << "[" << sub->get_name() << "]\n";
  os << sub->config_to_str(/*default_also=*/true, /*write_description=*/false);
  write_text(path, os.str());
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::vector<tasks::Example> load_input(const std::string& path) {
  if (path.size() > 6 && path.substr(path.size() - 6) == ".jsonl") return tasks::read_jsonl(path);
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<tasks::Example> out;
  std::string line;
  while (std::getline(is, line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    tasks::Example ex;
    ex.tokens = std::move(toks);
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- gen --------------------------------------------------------------------

struct GenArgs {
  std::string task;
  std::string out;
  uint64_t seed = 0;
  int count = 1000;
  int max_depth = 4;
  int max_args = 4;
  double p_recurse = 0.3;
  int min_ops = 0;
  int max_ops = 6;
  std::string split = "none";
};

int run_gen(const GenArgs& a, CLI::App* sub) {
  Rng rng(a.seed);
  json meta;
  meta["task"] = a.task;
  meta["seed"] = a.seed;
  meta["count"] = a.count;

  if (a.task == "listops") {
    tasks::ListopsConfig cfg;
    cfg.count = a.count;
    cfg.max_depth = a.max_depth;
    cfg.max_args = a.max_args;
    cfg.p_recurse = a.p_recurse;
    cfg.validate();
    auto data = tasks::gen_listops(rng, cfg);
    std::vector<tasks::Example> examples;
    for (const auto& d : data) {
      tasks::Example ex;
      ex.tokens = d.tokens;
      ex.label = std::to_string(d.answer);
      ex.gold_tree = render_tree(*tasks::listops_gold_tree(d.tokens));
      examples.push_back(std::move(ex));
    }
    tasks::write_jsonl(a.out, examples);
    meta["max_depth"] = cfg.max_depth;
    meta["max_args"] = cfg.max_args;
    meta["p_recurse"] = cfg.p_recurse;
  } else if (a.task == "logic") {
    tasks::LogicConfig cfg;
    cfg.count = a.count;
    cfg.min_ops = a.min_ops;
    cfg.max_ops = a.max_ops;
    cfg.validate();
    auto data = tasks::gen_logic(rng, cfg);
    auto to_examples = [](const std::vector<tasks::LogicExample>& in) {
      std::vector<tasks::Example> out;
      for (const auto& d : in) {
        tasks::Example ex;
        ex.tokens = d.s1;
        ex.tokens2 = d.s2;
        ex.label = tasks::relation_name(d.label);
        ex.ops = d.bucket();
        out.push_back(std::move(ex));
      }
      return out;
    };
    meta["min_ops"] = cfg.min_ops;
    meta["max_ops"] = cfg.max_ops;
    meta["split"] = a.split;
    if (a.split == "none") {
      tasks::write_jsonl(a.out, to_examples(data));
    } else {
      auto split = tasks::filter_systematic_split(data, tasks::split_from_string(a.split));
      tasks::write_jsonl(a.out + ".train.jsonl", to_examples(split.train));
      tasks::write_jsonl(a.out + ".test.jsonl", to_examples(split.test));
      meta["train_count"] = split.train.size();
      meta["test_count"] = split.test.size();
    }
  } else if (a.task == "toy") {
    auto corpus = tasks::gen_toy_corpus(rng, a.count);
    std::vector<tasks::Example> examples;
    for (auto& s : corpus) {
      tasks::Example ex;
      ex.tokens = std::move(s);
      examples.push_back(std::move(ex));
    }
    tasks::write_jsonl(a.out, examples);
  } else {
    throw ConfigError("unknown gen task '" + a.task + "'");
  }

  write_text(a.out + ".meta.json", meta.dump(2) + "\n");
  write_manifest(sub, a.out + ".manifest");
  return kExitOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string model;
  std::string task;
  std::string data;
  std::string eval_data;
  std::string out;
  std::string resume;
  uint64_t seed = 0;
  int epochs = 2;
  int batch = 16;
  double lr = 1e-3;
  double clip = 5.0;
  double mask_rate = 0.3;
  int min_freq = 1;
  train::Dims dims;
};

tasks::Vocab vocab_from_examples(const std::vector<tasks::Example>& examples, int min_freq) {
  std::vector<std::vector<std::string>> corpus;
  for (const auto& ex : examples) {
    corpus.push_back(ex.tokens);
    if (!ex.tokens2.empty()) corpus.push_back(ex.tokens2);
  }
  return tasks::Vocab::build(corpus, min_freq);
}

std::vector<std::vector<int64_t>> corpus_ids(const std::vector<tasks::Example>& examples,
                                             const tasks::Vocab& vocab) {
  std::vector<std::vector<int64_t>> out;
  for (const auto& ex : examples) out.push_back(vocab.encode(ex.tokens));
  return out;
}

int run_train(const TrainArgs& a, CLI::App* sub) {
  train::ModelKind kind = train::model_kind_from(a.model);
  train::TaskKind task = train::task_kind_from(a.task);
  auto raw = tasks::read_jsonl(a.data);
  if (raw.empty()) throw ConfigError("training data is empty: " + a.data);

  train::Bundle bundle;
  if (!a.resume.empty()) {
    bundle = train::load_bundle(a.resume);
    if (bundle.kind != kind || bundle.task != task)
      throw ConfigError("checkpoint model/task does not match the requested run");
    tasks::Vocab data_vocab = vocab_from_examples(raw, a.min_freq);
    if (!(data_vocab == bundle.vocab))
      throw ConfigError("checkpoint vocabulary does not match the training data");
  } else {
    tasks::Vocab vocab = vocab_from_examples(raw, a.min_freq);
    int classes = 0;
    if (task == train::TaskKind::kListops || task == train::TaskKind::kLogic)
      classes = train::task_class_count(task);
    bundle = train::Bundle::create(kind, task, vocab, a.dims, classes, a.seed);
  }

  train::TrainOptions opt;
  opt.epochs = a.epochs;
  opt.batch = a.batch;
  opt.lr = a.lr;
  opt.clip_norm = a.clip;
  opt.mask_rate = a.mask_rate;
  opt.seed = a.seed;
  opt.checkpoint_path = a.out + ".ckpt";
  opt.csv_path = a.out + ".log.csv";
  opt.dataset_id = a.data;

  train::Trainer trainer(bundle, opt);
  if (!a.resume.empty()) train::load_adam_state(a.resume, bundle.params(), trainer.adam());

  train::TrainOutcome outcome;
  if (task == train::TaskKind::kMlm) {
    auto ids = corpus_ids(raw, bundle.vocab);
    std::vector<std::vector<int64_t>> eval_ids;
    if (!a.eval_data.empty()) eval_ids = corpus_ids(tasks::read_jsonl(a.eval_data), bundle.vocab);
    outcome = trainer.train_mlm(ids, eval_ids);
  } else if (task == train::TaskKind::kLm) {
    auto ids = corpus_ids(raw, bundle.vocab);
    std::vector<std::vector<int64_t>> eval_ids;
    if (!a.eval_data.empty()) eval_ids = corpus_ids(tasks::read_jsonl(a.eval_data), bundle.vocab);
    outcome = trainer.train_lm(ids, eval_ids);
  } else {
    auto data = train::encode_examples(raw, task, bundle.vocab);
    std::vector<train::EncodedExample> eval_data;
    if (!a.eval_data.empty())
      eval_data = train::encode_examples(tasks::read_jsonl(a.eval_data), task, bundle.vocab);
    outcome = trainer.train_classifier(data, eval_data);
  }

  outcome.report.config["model"] = a.model;
  outcome.report.config["task"] = a.task;
  write_text(a.out + ".metrics.json", outcome.report.to_json().dump(2) + "\n");
  write_manifest(sub, a.out + ".manifest");
  if (outcome.diverged) {
    std::fprintf(stderr, "training diverged; last good checkpoint retained\n");
    return kExitFailure;
  }
  return kExitOk;
}

// ---- parse ------------------------------------------------------------------

struct ParseArgs {
  std::string ckpt;
  std::string input;
  std::string out;
  std::string trace;
  std::string mode = "constituency";
  int layer = 2;
};

std::string heads_tsv(const std::vector<std::string>& tokens, const std::vector<int>& heads,
                      const std::vector<std::vector<double>>& p) {
  std::ostringstream os;
  for (size_t i = 0; i < tokens.size(); ++i) {
    double pmax = 0.0;
    if (heads[i] >= 0) {
      pmax = p[i][heads[i]];
    } else {
      for (double v : p[i]) pmax = std::max(pmax, v);
    }
    os << (i + 1) << "\t" << tokens[i] << "\t" << (heads[i] < 0 ? 0 : heads[i] + 1) << "\t"
       << pmax << "\n";
  }
  return os.str();
}

std::vector<std::vector<double>> matrix_rows(const Tensor& t) {
  int64_t n = t.shape()[0];
  std::vector<std::vector<double>> rows(n, std::vector<double>(t.shape()[1]));
  auto v = t.val();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < t.shape()[1]; ++j) rows[i][j] = v[i * t.shape()[1] + j];
  return rows;
}

int run_parse(const ParseArgs& a, CLI::App* sub) {
  train::Bundle bundle = train::load_bundle(a.ckpt);
  auto inputs = load_input(a.input);
  bool constituency = a.mode == "constituency";
  bool argmax_mode = a.mode == "dependency-argmax";
  bool chuliu_mode = a.mode == "dependency-chuliu";
  if (!constituency && !argmax_mode && !chuliu_mode)
    throw ConfigError("unknown parse mode '" + a.mode + "'");
  if (constituency && bundle.kind == train::ModelKind::kUdgn)
    throw ConfigError("constituency mode needs an om or onlstm checkpoint");
  if (!constituency && bundle.kind != train::ModelKind::kUdgn)
    throw ConfigError("dependency modes need a udgn checkpoint");

  std::ostringstream os;
  std::ostringstream trace_os;
  for (const auto& ex : inputs) {
    std::vector<int64_t> ids = bundle.vocab.encode(ex.tokens);
    if (constituency) {
      TreePtr tree;
      if (bundle.kind == train::ModelKind::kOm) {
        Tape tape;
        om::Trace tr = om::forward(tape, *bundle.om_model, ids);
        if (ids.size() == 1)
          tree = BinaryTree::make_leaf(0);
        else
          tree = om::parse_trace(tr.attention);
        for (size_t t = 0; t < tr.attention.size(); ++t) {
          json rec;
          rec["t"] = t + 1;
          rec["p"] = tr.attention[t];
          rec["argmax"] = om::argmax_slot(tr.attention[t]);
          trace_os << rec.dump() << "\n";
        }
      } else {
        tree = ids.size() == 1 ? BinaryTree::make_leaf(0)
                               : onlstm::parse(*bundle.on_model, ids, a.layer);
      }
      os << render_tree(*tree, ex.tokens) << "\n";
    } else {
      Tape tape;
      Tensor p = udgn::parser_forward(tape, *bundle.ud_model, ids);
      auto rows = matrix_rows(p);
      std::vector<int> heads;
      if (argmax_mode) {
        heads = udgn::extract_argmax(rows);
      } else {
        heads = udgn::extract_chuliu(rows).heads;
      }
      os << heads_tsv(ex.tokens, heads, rows) << "\n";
    }
  }

  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    write_text(a.out, os.str());
    write_manifest(sub, a.out + ".manifest");
  }
  if (!a.trace.empty()) write_text(a.trace, trace_os.str());
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string metric;
  std::string pred, gold;
  std::string ckpt, data;
  std::string out;
  double mask_rate = 0.3;
  uint64_t mask_seed = 0;
  double min_value = -1e300;  // threshold on the primary metric
  bool max_mode = false;      // when set, fail if the metric exceeds min_value
};

std::vector<std::vector<int>> read_heads_tsv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) {
      if (!cur.empty()) out.push_back(std::exchange(cur, {}));
      continue;
    }
    auto cols = split_ws(line);
    if (cols.size() < 3) throw IoError("bad TSV row in " + path + ": " + line);
    cur.push_back(std::stoi(cols[2]));
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<TreePtr> read_trees(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<TreePtr> out;
  std::string line;
  while (std::getline(is, line)) {
    if (split_ws(line).empty()) continue;
    out.push_back(parse_tree(line));
  }
  return out;
}

int run_eval(const EvalArgs& a, CLI::App*) {
  json report;
  double primary = 0.0;
  if (a.metric == "uf1") {
    auto pred = read_trees(a.pred);
    auto gold = read_trees(a.gold);
    std::vector<const BinaryTree*> pp, gp;
    for (auto& t : pred) pp.push_back(t.get());
    for (auto& t : gold) gp.push_back(t.get());
    train::F1Scores s = train::uf1(pp, gp);
    report["precision"] = s.precision;
    report["recall"] = s.recall;
    report["uf1"] = s.f1;
    primary = s.f1;
  } else if (a.metric == "uas") {
    auto pred = read_heads_tsv(a.pred);
    auto gold = read_heads_tsv(a.gold);
    train::AttachmentScores s = train::uas_uuas(pred, gold);
    report["uas"] = s.uas;
    report["uuas"] = s.uuas;
    primary = s.uas;
  } else if (a.metric == "accuracy") {
    train::Bundle bundle = train::load_bundle(a.ckpt);
    auto data = train::encode_examples(tasks::read_jsonl(a.data), bundle.task, bundle.vocab);
    auto metrics = train::eval_classifier(bundle, data);
    for (const auto& [k, v] : metrics) report[k] = v;
    primary = metrics.at("accuracy");
  } else if (a.metric == "mlm-ppl") {
    train::Bundle bundle = train::load_bundle(a.ckpt);
    auto ids = corpus_ids(tasks::read_jsonl(a.data), bundle.vocab);
    primary = train::eval_mlm_ppl(bundle, ids, a.mask_rate, a.mask_seed);
    report["masked_ppl"] = primary;
  } else if (a.metric == "lm-ppl") {
    train::Bundle bundle = train::load_bundle(a.ckpt);
    auto ids = corpus_ids(tasks::read_jsonl(a.data), bundle.vocab);
    primary = train::eval_lm_ppl(bundle, ids);
    report["ppl"] = primary;
  } else {
    throw ConfigError("unknown metric '" + a.metric + "'");
  }

  report["metric"] = a.metric;
  std::cout << report.dump(2) << "\n";
  if (!a.out.empty()) write_text(a.out, report.dump(2) + "\n");
  if (a.min_value > -1e300) {
    bool bad = a.max_mode ? primary > a.min_value : primary < a.min_value;
    if (bad) {
      std::fprintf(stderr, "metric %s = %g fails the %s threshold %g\n", a.metric.c_str(),
                   primary, a.max_mode ? "upper" : "lower", a.min_value);
      return kExitFailure;
    }
  }
  return kExitOk;
}

// ---- gradcheck ----------------------------------------------------------------

struct GradcheckArgs {
  std::string model = "all";
  uint64_t seed = 0;
  double tolerance = 1e-4;
};

GradCheckResult gradcheck_onlstm(uint64_t seed) {
  onlstm::Config cfg;
  cfg.vocab = 11;
  cfg.input_dim = 8;
  cfg.hidden_dim = 8;
  cfg.chunk = 2;
  cfg.layers = 2;
  onlstm::Model m(cfg, Rng(seed));
  std::vector<int64_t> ids = {3, 7, 1, 4};
  auto eval = [&](bool with_grad) {
    Tape t;
    Tensor loss = onlstm::lm_nll(t, m, ids);
    if (with_grad) t.backward(loss);
    return loss.scalar();
  };
  return grad_check(eval, m.params);
}

GradCheckResult gradcheck_om(uint64_t seed) {
  om::Config cfg;
  cfg.slots = 3;
  cfg.slot_dim = 8;
  cfg.input_dim = 8;
  cfg.att_hidden = 8;
  cfg.cell_hidden = 16;
  cfg.vocab = 10;
  om::Model m(cfg, Rng(seed));
  std::vector<int64_t> ids = {2, 5, 7, 1};
  auto eval = [&](bool with_grad) {
    Tape t;
    om::Trace tr = om::forward(t, m, ids);
    Tensor loss = t.sum(t.mul(tr.output_tensor, tr.output_tensor));
    if (with_grad) t.backward(loss);
    return loss.scalar();
  };
  return grad_check(eval, m.params);
}

GradCheckResult gradcheck_udgn(uint64_t seed) {
  udgn::Config cfg;
  cfg.vocab = 9;
  cfg.tags = 3;
  cfg.emb_dim = 6;
  cfg.lstm_hidden = 5;
  cfg.proj_dim = 4;
  cfg.hidden_dim = 8;
  cfg.channels = 2;
  cfg.layers = 2;
  udgn::Model m(cfg, Rng(seed));
  std::vector<int64_t> ids = {2, 8, 1, 5};
  auto eval = [&](bool with_grad) {
    Tape t;
    udgn::ForwardResult fw = udgn::forward(t, m, ids);
    Tensor loss = udgn::mlm_nll(t, fw, {0, 2}, {3, 7});
    if (with_grad) t.backward(loss);
    return loss.scalar();
  };
  return grad_check(eval, m.params);
}

int run_gradcheck(const GradcheckArgs& a, CLI::App*) {
  struct Row {
    const char* name;
    GradCheckResult res;
  };
  std::vector<Row> rows;
  if (a.model == "onlstm" || a.model == "all") rows.push_back({"onlstm", gradcheck_onlstm(a.seed)});
  if (a.model == "om" || a.model == "all") rows.push_back({"om", gradcheck_om(a.seed)});
  if (a.model == "udgn" || a.model == "all") rows.push_back({"udgn", gradcheck_udgn(a.seed)});
  if (rows.empty()) throw ConfigError("unknown gradcheck model '" + a.model + "'");
  bool ok = true;
  for (const auto& r : rows) {
    bool pass = r.res.max_rel_error < a.tolerance;
    ok = ok && pass;
    std::printf("%-8s max_rel_error %.3e %s", r.name, r.res.max_rel_error,
                pass ? "PASS" : "FAIL");
    if (!pass)
      std::printf("  worst: %s[%lld] analytic=%g numeric=%g", r.res.worst_param.c_str(),
                  static_cast<long long>(r.res.worst_index), r.res.analytic, r.res.numeric);
    std::printf("\n");
  }
  return ok ? kExitOk : kExitFailure;
}

// ---- inspect -------------------------------------------------------------------

struct InspectArgs {
  std::string ckpt;
  std::string input;
  std::string out;
  int layer = 2;
};

std::string format_matrix(const std::vector<std::vector<double>>& rows,
                          const std::vector<std::string>& labels) {
  std::ostringstream os;
  os << std::setw(10) << "";
  for (size_t j = 0; j < rows[0].size(); ++j)
    os << std::setw(9) << (j < labels.size() ? labels[j] : std::to_string(j));
  os << "\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    os << std::setw(10) << (i < labels.size() ? labels[i] : std::to_string(i));
    for (double v : rows[i]) os << std::setw(9) << std::fixed << std::setprecision(4) << v;
    os << "\n";
  }
  return os.str();
}

int run_inspect(const InspectArgs& a, CLI::App*) {
  train::Bundle bundle = train::load_bundle(a.ckpt);
  auto inputs = load_input(a.input);
  std::ostringstream os;
  for (const auto& ex : inputs) {
    std::vector<int64_t> ids = bundle.vocab.encode(ex.tokens);
    os << "# ";
    for (const auto& t : ex.tokens) os << t << " ";
    os << "\n";
    if (bundle.kind == train::ModelKind::kOm) {
      Tape tape;
      om::Trace tr = om::forward(tape, *bundle.om_model, ids);
      std::vector<std::string> slot_labels;
      for (size_t s = 0; s < tr.attention[0].size(); ++s)
        slot_labels.push_back("slot" + std::to_string(s));
      os << std::setw(10) << "";
      for (const auto& l : slot_labels) os << std::setw(9) << l;
      os << std::setw(9) << "argmax" << "\n";
      for (size_t t = 0; t < tr.attention.size(); ++t) {
        os << std::setw(10) << ex.tokens[t];
        for (double v : tr.attention[t])
          os << std::setw(9) << std::fixed << std::setprecision(4) << v;
        os << std::setw(9) << om::argmax_slot(tr.attention[t]) << "\n";
      }
      if (ids.size() > 1) {
        TreePtr tree = om::parse_trace(tr.attention);
        os << "tree: " << render_tree(*tree, ex.tokens) << "\n";
      }
    } else if (bundle.kind == train::ModelKind::kUdgn) {
      Tape tape;
      Tensor p = udgn::parser_forward(tape, *bundle.ud_model, ids);
      Tensor m = udgn::dependency_mask(tape, p);
      os << "head probabilities p:\n" << format_matrix(matrix_rows(p), ex.tokens);
      os << "dependency mask m:\n" << format_matrix(matrix_rows(m), ex.tokens);
    } else {
      onlstm::DistanceProfile prof = onlstm::distances(*bundle.on_model, ids);
      for (size_t l = 0; l < prof.per_layer.size(); ++l) {
        os << "layer " << (l + 1) << " distances:";
        for (double d : prof.per_layer[l])
          os << " " << std::fixed << std::setprecision(4) << d;
        os << "\n";
      }
      if (ids.size() > 1) {
        TreePtr tree = onlstm::parse(*bundle.on_model, ids, a.layer);
        os << "tree: " << render_tree(*tree, ex.tokens) << "\n";
      }
    }
    os << "\n";
  }
  if (a.out.empty())
    std::cout << os.str();
  else
    write_text(a.out, os.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-structure sequence models: ordered neurons, ordered memory, "
               "dependency graph induction"};
  app.require_subcommand(1);
  app.fallthrough();  // lets `sbl <sub> --config file` reach the app-level option
  app.set_config("--config", "", "manifest or key=value config to replay");

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset");
  gen_cmd->option_defaults()->always_capture_default(true);
  gen_cmd->add_option("--task", gen.task, "listops | logic | toy")->required();
  gen_cmd->add_option("--out", gen.out, "output JSONL path")->required();
  gen_cmd->add_option("--seed", gen.seed, "rng seed");
  gen_cmd->add_option("--count", gen.count, "number of examples");
  gen_cmd->add_option("--max-depth", gen.max_depth, "listops nesting bound");
  gen_cmd->add_option("--max-args", gen.max_args, "listops arguments per list");
  gen_cmd->add_option("--p-recurse", gen.p_recurse, "listops recursion probability");
  gen_cmd->add_option("--min-ops", gen.min_ops, "logic smallest operator bucket");
  gen_cmd->add_option("--max-ops", gen.max_ops, "logic largest operator bucket");
  gen_cmd->add_option("--split", gen.split, "none | A | B | C (logic)");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->option_defaults()->always_capture_default(true);
  train_cmd->add_option("--model", tr.model, "om | onlstm | udgn")->required();
  train_cmd->add_option("--task", tr.task, "listops | logic | mlm | lm")->required();
  train_cmd->add_option("--data", tr.data, "training JSONL")->required();
  train_cmd->add_option("--eval-data", tr.eval_data, "held-out JSONL");
  train_cmd->add_option("--out", tr.out, "output prefix")->required();
  train_cmd->add_option("--resume", tr.resume, "checkpoint to continue from");
  train_cmd->add_option("--seed", tr.seed, "rng seed");
  train_cmd->add_option("--epochs", tr.epochs, "training epochs");
  train_cmd->add_option("--batch", tr.batch, "minibatch size");
  train_cmd->add_option("--lr", tr.lr, "adam learning rate");
  train_cmd->add_option("--clip", tr.clip, "global gradient-norm clip");
  train_cmd->add_option("--mask-rate", tr.mask_rate, "mlm masking rate");
  train_cmd->add_option("--min-freq", tr.min_freq, "vocabulary frequency threshold");
  train_cmd->add_option("--om-slots", tr.dims.om_slots, "memory slots");
  train_cmd->add_option("--om-dim", tr.dims.om_dim, "slot width");
  train_cmd->add_option("--om-att-hidden", tr.dims.om_att_hidden, "attention mlp width");
  train_cmd->add_option("--om-cell-hidden", tr.dims.om_cell_hidden, "cell mlp width");
  train_cmd->add_option("--on-hidden", tr.dims.on_hidden, "hidden width");
  train_cmd->add_option("--on-chunk", tr.dims.on_chunk, "chunk factor");
  train_cmd->add_option("--on-layers", tr.dims.on_layers, "stacked layers");
  train_cmd->add_option("--emb-dim", tr.dims.emb_dim, "embedding width");
  train_cmd->add_option("--head-hidden", tr.dims.head_hidden, "classifier hidden width");
  train_cmd->add_option("--ud-tags", tr.dims.ud_tags, "soft tag classes");
  train_cmd->add_option("--ud-lstm-hidden", tr.dims.ud_lstm_hidden, "parser lstm width");
  train_cmd->add_option("--ud-lstm-layers", tr.dims.ud_lstm_layers, "parser lstm depth");
  train_cmd->add_option("--ud-proj", tr.dims.ud_proj, "head/dep projection width");
  train_cmd->add_option("--ud-hidden", tr.dims.ud_hidden, "graph network width");
  train_cmd->add_option("--ud-channels", tr.dims.ud_channels, "channels per layer");
  train_cmd->add_option("--ud-layers", tr.dims.ud_layers, "graph layers");
  train_cmd->add_option("--ud-max-len", tr.dims.ud_max_len, "absolute position table size");
  train_cmd->add_option("--ud-activation", tr.dims.ud_activation,
                        "tanh | identity | relu | elu");
  train_cmd->add_flag("--ud-gates,!--no-ud-gates", tr.dims.ud_gates, "gated channels");
  train_cmd->add_option("--ud-competition", tr.dims.ud_competition, "softmax | sigmoid");
  train_cmd->add_option("--ud-position", tr.dims.ud_position, "relative | absolute");

  ParseArgs pa;
  CLI::App* parse_cmd = app.add_subcommand("parse", "extract trees or heads");
  parse_cmd->option_defaults()->always_capture_default(true);
  parse_cmd->add_option("--ckpt", pa.ckpt, "model checkpoint")->required();
  parse_cmd->add_option("--input", pa.input, "text (one sentence per line) or JSONL")->required();
  parse_cmd->add_option("--out", pa.out, "output path (stdout when omitted)");
  parse_cmd->add_option("--trace", pa.trace, "attention trace JSONL dump (om)");
  parse_cmd->add_option("--mode", pa.mode,
                        "constituency | dependency-argmax | dependency-chuliu");
  parse_cmd->add_option("--layer", pa.layer, "onlstm distance layer (1-based)");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "compute metrics");
  eval_cmd->option_defaults()->always_capture_default(true);
  eval_cmd->add_option("--metric", ev.metric, "uf1 | uas | accuracy | mlm-ppl | lm-ppl")
      ->required();
  eval_cmd->add_option("--pred", ev.pred, "predicted trees/heads file");
  eval_cmd->add_option("--gold", ev.gold, "gold trees/heads file");
  eval_cmd->add_option("--ckpt", ev.ckpt, "model checkpoint");
  eval_cmd->add_option("--data", ev.data, "evaluation JSONL");
  eval_cmd->add_option("--out", ev.out, "report JSON path");
  eval_cmd->add_option("--mask-rate", ev.mask_rate, "mlm masking rate");
  eval_cmd->add_option("--mask-seed", ev.mask_seed, "mlm masking seed");
  eval_cmd->add_option("--min", ev.min_value, "fail (exit 1) when the metric is below this");
  eval_cmd->add_flag("--max-mode", ev.max_mode, "treat --min as an upper bound instead");

  GradcheckArgs gc;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gc_cmd->option_defaults()->always_capture_default(true);
  gc_cmd->add_option("--model", gc.model, "onlstm | om | udgn | all");
  gc_cmd->add_option("--seed", gc.seed, "rng seed");
  gc_cmd->add_option("--tolerance", gc.tolerance, "max relative error");

  InspectArgs in;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "pretty-print traces and matrices");
  inspect_cmd->option_defaults()->always_capture_default(true);
  inspect_cmd->add_option("--ckpt", in.ckpt, "model checkpoint")->required();
  inspect_cmd->add_option("--input", in.input, "text or JSONL input")->required();
  inspect_cmd->add_option("--out", in.out, "output path (stdout when omitted)");
  inspect_cmd->add_option("--layer", in.layer, "onlstm distance layer");

  try {
    app.parse(argc, argv);
    if (gen_cmd->parsed()) return run_gen(gen, gen_cmd);
    if (train_cmd->parsed()) return run_train(tr, train_cmd);
    if (parse_cmd->parsed()) return run_parse(pa, parse_cmd);
    if (eval_cmd->parsed()) return run_eval(ev, eval_cmd);
    if (gc_cmd->parsed()) return run_gradcheck(gc, gc_cmd);
    if (inspect_cmd->parsed()) return run_inspect(in, inspect_cmd);
    std::fprintf(stderr, "no subcommand given\n");
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitFailure;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
}
