#include "sbl/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <limits>

using namespace sbl;
using namespace sbl::train;

namespace {

// Single-token sequences whose token determines the label: separable by
// construction.
std::vector<EncodedExample> separable_dataset(int count, int classes, Rng& rng) {
  std::vector<EncodedExample> out;
  for (int i = 0; i < count; ++i) {
    int c = static_cast<int>(rng.next_below(classes));
    EncodedExample ex;
    ex.ids1 = {static_cast<int64_t>(c)};
    ex.label = c;
    out.push_back(ex);
  }
  return out;
}

tasks::Vocab tiny_vocab(int content_tokens) {
  std::vector<std::vector<std::string>> corpus(1);
  for (int i = 0; i < content_tokens; ++i)
    corpus[0].push_back("t" + std::to_string(100 + i));  // lexicographic = index order
  return tasks::Vocab::build(corpus, 1);
}

Dims tiny_om_dims() {
  Dims d;
  d.om_slots = 2;
  d.om_dim = 8;
  d.om_att_hidden = 8;
  d.om_cell_hidden = 16;
  d.emb_dim = 8;
  return d;
}

}  // namespace

TEST(TrainClassifier, LearnsSeparableToySet) {
  tasks::Vocab vocab = tiny_vocab(4);
  Bundle b = Bundle::create(ModelKind::kOm, TaskKind::kListops, vocab, tiny_om_dims(), 4, 7);
  Rng rng(21);
  auto data = separable_dataset(200, 4, rng);
  TrainOptions opt;
  opt.epochs = 50;
  opt.batch = 16;
  opt.lr = 3e-3;
  opt.seed = 7;
  opt.quiet = true;
  Trainer tr(b, opt);
  TrainOutcome out = tr.train_classifier(data, data);
  ASSERT_FALSE(out.diverged);
  double final_acc = out.rows.back().metrics.at("accuracy");
  EXPECT_GE(final_acc, 0.99);
}

TEST(TrainClassifier, DeterministicAcrossRuns) {
  auto run = [] {
    tasks::Vocab vocab = tiny_vocab(4);
    Bundle b = Bundle::create(ModelKind::kOm, TaskKind::kListops, vocab, tiny_om_dims(), 4, 11);
    Rng rng(3);
    auto data = separable_dataset(60, 4, rng);
    TrainOptions opt;
    opt.epochs = 3;
    opt.batch = 8;
    opt.seed = 11;
    opt.quiet = true;
    Trainer tr(b, opt);
    return tr.train_classifier(data, {}).rows.back().train_loss;
  };
  double a = run();
  double c = run();
  EXPECT_EQ(a, c);  // bit-identical
}

TEST(TrainClassifier, LabelShuffledDataSitsAtChance) {
  tasks::Vocab vocab = tiny_vocab(4);
  Bundle b = Bundle::create(ModelKind::kOm, TaskKind::kListops, vocab, tiny_om_dims(), 4, 5);
  Rng rng(9);
  auto train_data = separable_dataset(120, 4, rng);
  Trainer tr(b, [] {
    TrainOptions o;
    o.epochs = 10;
    o.batch = 16;
    o.seed = 5;
    o.quiet = true;
    return o;
  }());
  tr.train_classifier(train_data, {});
  // shuffle labels independently of inputs
  auto shuffled = train_data;
  Rng sr(1);
  for (auto& ex : shuffled) ex.label = static_cast<int>(sr.next_below(4));
  auto metrics = eval_classifier(b, shuffled);
  EXPECT_NEAR(metrics["accuracy"], 0.25, 0.12);
}

TEST(TrainClassifier, BucketMetricsAppearForOpsTaggedData) {
  tasks::Vocab vocab = tiny_vocab(4);
  Bundle b = Bundle::create(ModelKind::kOm, TaskKind::kListops, vocab, tiny_om_dims(), 4, 2);
  Rng rng(2);
  auto data = separable_dataset(40, 4, rng);
  for (size_t i = 0; i < data.size(); ++i) data[i].ops = 7 + static_cast<int>(i % 3);
  auto metrics = eval_classifier(b, data);
  EXPECT_TRUE(metrics.count("accuracy_ops7"));
  EXPECT_TRUE(metrics.count("accuracy_ops8"));
  EXPECT_TRUE(metrics.count("accuracy_ops9"));
}

TEST(TrainMlm, MemorizesSingleSentence) {
  std::vector<std::vector<std::string>> corpus(48, {"the", "cat", "meows", "very", "quietly"});
  tasks::Vocab vocab = tasks::Vocab::build(corpus, 1);
  Dims d;
  d.ud_hidden = 24;
  d.ud_channels = 2;
  d.ud_layers = 1;
  d.ud_lstm_hidden = 8;
  d.emb_dim = 8;
  d.ud_proj = 8;
  d.ud_tags = 4;
  Bundle b = Bundle::create(ModelKind::kUdgn, TaskKind::kMlm, vocab, d, 0, 13);
  std::vector<std::vector<int64_t>> ids;
  for (const auto& s : corpus) ids.push_back(vocab.encode(s));
  TrainOptions opt;
  opt.epochs = 80;
  opt.batch = 8;
  opt.lr = 5e-3;
  opt.mask_rate = 0.2;
  opt.seed = 13;
  opt.quiet = true;
  Trainer tr(b, opt);
  TrainOutcome out = tr.train_mlm(ids, ids);
  ASSERT_FALSE(out.diverged);
  // masks are redrawn every epoch so per-epoch losses wobble; the trend and
  // the final perplexity are what memorization pins down
  EXPECT_LT(out.rows.back().train_loss, out.rows.front().train_loss);
  EXPECT_LT(out.rows.back().metrics.at("masked_ppl"), 1.1);
  EXPECT_GE(out.rows.back().metrics.at("masked_ppl"), 1.0);
}

TEST(TrainMlm, UntrainedPplIsNearVocabSize) {
  // ten content tokens; fresh model predictions are near-uniform
  std::vector<std::vector<std::string>> corpus;
  Rng cr(4);
  for (int i = 0; i < 40; ++i) {
    std::vector<std::string> s;
    for (int j = 0; j < 8; ++j) s.push_back("t" + std::to_string(cr.next_below(10)));
    corpus.push_back(s);
  }
  tasks::Vocab vocab = tasks::Vocab::build(corpus, 1);
  ASSERT_EQ(vocab.size(), 13);  // 10 content + 3 specials
  Dims d;
  d.ud_hidden = 16;
  d.ud_channels = 2;
  d.ud_layers = 1;
  d.ud_lstm_hidden = 8;
  d.emb_dim = 8;
  d.ud_proj = 8;
  d.ud_tags = 4;
  Bundle b = Bundle::create(ModelKind::kUdgn, TaskKind::kMlm, vocab, d, 0, 17);
  std::vector<std::vector<int64_t>> ids;
  for (const auto& s : corpus) ids.push_back(vocab.encode(s));
  double ppl = eval_mlm_ppl(b, ids, 0.3, 17);
  EXPECT_GT(ppl, 8.0);
  EXPECT_LT(ppl, 16.0);
  EXPECT_GE(ppl, 1.0);
}

TEST(TrainLm, OnLstmLearnsRepeatedSentence) {
  std::vector<std::vector<std::string>> corpus(32, {"a", "b", "c", "d", "e"});
  tasks::Vocab vocab = tasks::Vocab::build(corpus, 1);
  Dims d;
  d.on_hidden = 16;
  d.on_chunk = 4;
  d.on_layers = 2;
  d.emb_dim = 8;
  Bundle b = Bundle::create(ModelKind::kOnlstm, TaskKind::kLm, vocab, d, 0, 19);
  std::vector<std::vector<int64_t>> ids;
  for (const auto& s : corpus) ids.push_back(vocab.encode(s));
  TrainOptions opt;
  opt.epochs = 60;
  opt.batch = 8;
  opt.lr = 5e-3;
  opt.seed = 19;
  opt.quiet = true;
  Trainer tr(b, opt);
  TrainOutcome out = tr.train_lm(ids, ids);
  ASSERT_FALSE(out.diverged);
  // deterministic data: loss never increases from the first epoch on
  for (size_t e = 1; e < out.rows.size(); ++e)
    EXPECT_LE(out.rows[e].train_loss, out.rows[e - 1].train_loss + 1e-9);
  EXPECT_LT(out.rows.back().metrics.at("ppl"), 1.3);
}

TEST(Checkpoint, BundleRoundTripAndResume) {
  std::string dir = ::testing::TempDir();
  std::string ckpt = dir + "/resume.sbl";
  tasks::Vocab vocab = tiny_vocab(4);
  Rng rng(23);
  auto data = separable_dataset(80, 4, rng);

  Bundle b = Bundle::create(ModelKind::kOm, TaskKind::kListops, vocab, tiny_om_dims(), 4, 23);
  TrainOptions opt;
  opt.epochs = 4;
  opt.batch = 8;
  opt.seed = 23;
  opt.checkpoint_path = ckpt;
  opt.quiet = true;
  Trainer tr(b, opt);
  TrainOutcome first = tr.train_classifier(data, {});
  double logged = first.rows.back().train_loss;

  // round trip: parameters restore bit-exactly
  Bundle loaded = load_bundle(ckpt);
  ASSERT_EQ(loaded.params().size(), b.params().size());
  for (size_t i = 0; i < b.params().size(); ++i)
    EXPECT_EQ(loaded.params().at(i).value, b.params().at(i).value);
  EXPECT_TRUE(loaded.vocab == b.vocab);

  // resume: the next epoch's loss continues from the logged value
  TrainOptions more = opt;
  more.checkpoint_path.clear();
  more.epochs = 1;
  Trainer tr2(loaded, more);
  load_adam_state(ckpt, loaded.params(), tr2.adam());
  EXPECT_GT(tr2.adam().steps(), 0);
  TrainOutcome cont = tr2.train_classifier(data, {});
  EXPECT_LT(cont.rows.back().train_loss, logged * 1.5 + 0.05);
}

TEST(Trainer, DivergenceKeepsLastGoodCheckpoint) {
  std::string ckpt = ::testing::TempDir() + "/diverge.sbl";
  tasks::Vocab vocab = tiny_vocab(4);
  Bundle b = Bundle::create(ModelKind::kOm, TaskKind::kListops, vocab, tiny_om_dims(), 4, 29);
  Rng rng(29);
  auto data = separable_dataset(40, 4, rng);
  TrainOptions opt;
  opt.epochs = 2;
  opt.batch = 8;
  opt.seed = 29;
  opt.checkpoint_path = ckpt;
  opt.quiet = true;
  {
    Trainer tr(b, opt);
    ASSERT_FALSE(tr.train_classifier(data, {}).diverged);
  }
  std::vector<double> good = b.params().at(0).value;

  // poison a parameter so the next forward detects the blow-up; the aborted
  // run must not overwrite the checkpoint
  b.params().at(0).value.assign(b.params().at(0).value.size(),
                                std::numeric_limits<double>::quiet_NaN());
  Trainer tr2(b, opt);
  TrainOutcome out = tr2.train_classifier(data, {});
  EXPECT_TRUE(out.diverged);
  EXPECT_TRUE(out.rows.empty());  // the bad epoch never completed
  Bundle from_disk = load_bundle(ckpt);
  EXPECT_EQ(from_disk.params().at(0).value, good);
}

TEST(Trainer, CsvLogWritten) {
  std::string csv = ::testing::TempDir() + "/log.csv";
  tasks::Vocab vocab = tiny_vocab(4);
  Bundle b = Bundle::create(ModelKind::kOm, TaskKind::kListops, vocab, tiny_om_dims(), 4, 31);
  Rng rng(31);
  auto data = separable_dataset(30, 4, rng);
  TrainOptions opt;
  opt.epochs = 2;
  opt.batch = 8;
  opt.seed = 31;
  opt.csv_path = csv;
  opt.quiet = true;
  Trainer tr(b, opt);
  tr.train_classifier(data, data);
  std::ifstream is(csv);
  ASSERT_TRUE(is.good());
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header.substr(0, 10), "epoch,loss");
  EXPECT_NE(header.find("accuracy"), std::string::npos);
  int lines = 0;
  std::string line;
  while (std::getline(is, line)) ++lines;
  EXPECT_EQ(lines, 2);
}

TEST(UnigramBaseline, MatchesHandComputation) {
  // corpus of a single repeated token: smoothed p = (n+1)/(n+V) for it
  tasks::Vocab vocab = tiny_vocab(2);  // 2 content + 3 specials = 5
  std::vector<std::vector<int64_t>> train(1, std::vector<int64_t>(20, vocab.encode("t100")));
  std::vector<std::vector<int64_t>> eval_c(1, std::vector<int64_t>(50, vocab.encode("t100")));
  double ppl = unigram_baseline_ppl(train, eval_c, 0.5, 3, vocab);
  double expect = 1.0 / ((20.0 + 1.0) / (20.0 + 5.0));
  EXPECT_NEAR(ppl, expect, 1e-9);
}
