#include "sbl/ordered_memory.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "sbl/gradcheck.hpp"
#include "sbl/om_parse.hpp"

using namespace sbl;

namespace {

om::Config tiny_config(int64_t slots = 3, int64_t dim = 8) {
  om::Config c;
  c.slots = slots;
  c.slot_dim = dim;
  c.input_dim = dim;
  c.att_hidden = dim;
  c.cell_hidden = 2 * dim;
  c.vocab = 12;
  return c;
}

}  // namespace

TEST(ProjectInput, ConstantVectorNormalizesToBias) {
  // W = I, b = 0, constant x: pre-affine LN output is zero, so the result is
  // exactly the affine shift.
  om::Config cfg = tiny_config();
  Rng rng(1);
  om::Model m(cfg, rng);
  std::fill(m.w_in->value.begin(), m.w_in->value.end(), 0.0);
  for (int64_t i = 0; i < cfg.slot_dim; ++i) m.w_in->value[i * cfg.slot_dim + i] = 1.0;
  std::fill(m.b_in->value.begin(), m.b_in->value.end(), 0.0);
  Tape t;
  om::Bound bd(t, m);
  Tensor x = t.leaf({1, cfg.input_dim}, std::vector<double>(cfg.input_dim, 3.5));
  Tensor out = om::project_input(t, bd, x);
  for (int64_t i = 0; i < cfg.slot_dim; ++i)
    EXPECT_DOUBLE_EQ(out.val()[i], m.ln_bias->value[i]);
}

TEST(ProjectInput, GradCheck) {
  om::Config cfg = tiny_config();
  Rng rng(2);
  om::Model m(cfg, rng);
  std::vector<double> xs(cfg.input_dim);
  for (double& v : xs) v = rng.uniform(-1, 1);
  auto eval = [&](bool with_grad) {
    Tape t;
    om::Bound bd(t, m);
    Tensor out = om::project_input(t, bd, t.leaf({1, cfg.input_dim}, xs));
    Tensor loss = t.sum(t.mul(out, out));
    if (with_grad) t.backward(loss);
    return loss.scalar();
  };
  GradCheckResult res = grad_check(eval, m.params);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param;
}

TEST(ProjectInput, Deterministic) {
  om::Config cfg = tiny_config();
  Rng rng(3);
  om::Model m(cfg, rng);
  auto run = [&] {
    Tape t;
    om::Bound bd(t, m);
    return om::project_input(t, bd, t.leaf({1, cfg.input_dim},
                                           std::vector<double>(cfg.input_dim, 0.25)))
        .to_vector();
  };
  EXPECT_EQ(run(), run());
}

TEST(MaskedAttention, FirstStepIsOneHotOnLastSlot) {
  om::Config cfg = tiny_config(4);
  Rng rng(4);
  om::Model m(cfg, rng);
  Tape t;
  om::Bound bd(t, m);
  Tensor x = om::project_input(t, bd, t.leaf({1, cfg.input_dim},
                                             std::vector<double>(cfg.input_dim, 0.5)));
  Tensor cands = t.param(*m.init_candidate);
  Tensor cp0 = t.zeros({cfg.slots});
  Tensor p = om::masked_attention(t, bd, x, cands, cp0);
  auto v = p.val();
  for (int64_t i = 0; i + 1 < cfg.slots; ++i) EXPECT_DOUBLE_EQ(v[i], 0.0);
  EXPECT_DOUBLE_EQ(v[cfg.slots - 1], 1.0);
}

TEST(MaskedAttention, HandWorkedMaskedDistribution) {
  // beta = [1, 2, 1] with mask cp^{i+1} = [0.5, 1, 1] gives p = [1/7, 4/7, 2/7]
  Tape t;
  Tensor scores = t.leaf({3}, {0.0, std::log(2.0), 0.0});
  Tensor mask = t.leaf({3}, {0.5, 1.0, 1.0});
  Tensor p = t.masked_softmax(scores, mask);
  EXPECT_NEAR(p.val()[0], 1.0 / 7.0, 1e-12);
  EXPECT_NEAR(p.val()[1], 4.0 / 7.0, 1e-12);
  EXPECT_NEAR(p.val()[2], 2.0 / 7.0, 1e-12);
}

TEST(MaskedAttention, UniformScoresFullMask) {
  Tape t;
  Tensor p = t.masked_softmax(t.leaf({4}, std::vector<double>(4, 1.3)),
                              t.leaf({4}, std::vector<double>(4, 1.0)));
  for (double v : p.val()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(MaskedAttention, AllMassMaskedIsGuarded) {
  Tape t;
  EXPECT_THROW(
      t.masked_softmax(t.leaf({3}, {0.0, 0.0, 0.0}), t.leaf({3}, {0.0, 0.0, 0.0})),
      NumericError);
}

TEST(GatedCell, GradCheck) {
  om::Config cfg = tiny_config();
  Rng rng(5);
  om::Model m(cfg, rng);
  std::vector<double> a(cfg.slot_dim), b(cfg.slot_dim);
  for (double& v : a) v = rng.uniform(-1, 1);
  for (double& v : b) v = rng.uniform(-1, 1);
  auto eval = [&](bool with_grad) {
    Tape t;
    om::Bound bd(t, m);
    Tensor out = om::gated_recursive_cell(t, bd, t.leaf({1, cfg.slot_dim}, a),
                                          t.leaf({1, cfg.slot_dim}, b));
    Tensor loss = t.sum(t.mul(out, out));
    if (with_grad) t.backward(loss);
    return loss.scalar();
  };
  GradCheckResult res = grad_check(eval, m.params);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param;
}

TEST(GatedCell, ZeroSecondLayerMakesHalfGates) {
  // W2 = 0, b2 = 0: all gates sigmoid(0) = 0.5 and u = 0, so the cell output
  // is LN(0.5 * (candidate + memory)) through the shared affine.
  om::Config cfg = tiny_config();
  Rng rng(6);
  om::Model m(cfg, rng);
  std::fill(m.cell_w2->value.begin(), m.cell_w2->value.end(), 0.0);
  std::fill(m.cell_b2->value.begin(), m.cell_b2->value.end(), 0.0);
  std::vector<double> a(cfg.slot_dim), b(cfg.slot_dim);
  Rng vr(7);
  for (double& v : a) v = vr.uniform(-1, 1);
  for (double& v : b) v = vr.uniform(-1, 1);
  Tape t;
  om::Bound bd(t, m);
  Tensor mem = t.leaf({1, cfg.slot_dim}, a);
  Tensor below = t.leaf({1, cfg.slot_dim}, b);
  Tensor got = om::gated_recursive_cell(t, bd, mem, below);
  Tensor expect = om::affine_ln(t, bd, t.scale(t.add(below, mem), 0.5));
  for (int64_t i = 0; i < cfg.slot_dim; ++i)
    EXPECT_NEAR(got.val()[i], expect.val()[i], 1e-12);
}

TEST(OmStep, OneHotAttentionSelectsExactly) {
  om::Config cfg = tiny_config(4);
  Rng rng(8);
  om::Model m(cfg, rng);
  for (int slot = 0; slot < 4; ++slot) {
    Tape t;
    om::Bound bd(t, m);
    om::State st;
    for (int64_t i = 0; i < cfg.slots; ++i) {
      st.memory.push_back(t.slice(t.param(*m.init_mem), 0, i, 1));
      st.candidate.push_back(t.slice(t.param(*m.init_candidate), 0, i, 1));
    }
    st.cp = t.zeros({cfg.slots});
    Tensor x = om::project_input(
        t, bd, t.leaf({1, cfg.input_dim}, std::vector<double>(cfg.input_dim, 0.3)));
    std::vector<double> onehot(cfg.slots, 0.0);
    onehot[slot] = 1.0;
    om::StepResult sr = om::step(t, bd, x, st, t.constant({cfg.slots}, onehot));
    // memory: candidates copied on slots <= slot, old memory above
    for (int64_t i = 0; i < cfg.slots; ++i) {
      auto got = sr.state.memory[i].to_vector();
      auto want = (i <= slot ? st.candidate[i] : st.memory[i]).to_vector();
      EXPECT_EQ(got, want) << "slot " << i;
    }
    // candidates: raw input strictly below the attended slot
    for (int64_t i = 0; i < slot; ++i)
      EXPECT_EQ(sr.state.candidate[i].to_vector(), x.to_vector());
  }
}

TEST(OmForward, LengthOneIsOneHotOnTopSlot) {
  om::Config cfg = tiny_config(5);
  Rng rng(9);
  om::Model m(cfg, rng);
  Tape t;
  om::Trace tr = om::forward(t, m, {3});
  ASSERT_EQ(tr.attention.size(), 1u);
  for (int64_t i = 0; i + 1 < cfg.slots; ++i) EXPECT_DOUBLE_EQ(tr.attention[0][i], 0.0);
  EXPECT_DOUBLE_EQ(tr.attention[0][cfg.slots - 1], 1.0);
}

TEST(OmForward, Deterministic) {
  om::Config cfg = tiny_config();
  Rng rng(10);
  om::Model m(cfg, rng);
  auto run = [&] {
    Tape t;
    return om::forward(t, m, {1, 2, 3, 4}).output;
  };
  EXPECT_EQ(run(), run());
}

TEST(OmForward, AttentionRowsAreDistributions) {
  om::Config cfg = tiny_config(4);
  Rng rng(11);
  om::Model m(cfg, rng);
  Rng ids_rng(12);
  for (int it = 0; it < 50; ++it) {
    int len = 1 + static_cast<int>(ids_rng.next_below(9));
    std::vector<int64_t> ids(len);
    for (auto& id : ids) id = static_cast<int64_t>(ids_rng.next_below(12));
    Tape t;
    om::Trace tr = om::forward(t, m, ids);
    EXPECT_TRUE(tr.diagnostics.empty());
    for (const auto& p : tr.attention) {
      double s = 0;
      for (double v : p) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(OmForward, CpRcpComplementarity) {
  // cp_i + rcp_{i+1} = 1 for the same step's distribution
  om::Config cfg = tiny_config(6);
  Rng rng(13);
  om::Model m(cfg, rng);
  Tape t;
  om::Trace tr = om::forward(t, m, {1, 2, 3, 4, 5});
  for (const auto& p : tr.attention) {
    int n = static_cast<int>(p.size());
    std::vector<double> cp(n), rcp(n);
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      acc += p[i];
      cp[i] = acc;
    }
    for (int i = 0; i < n; ++i) {
      double s = 0;
      for (int j = i; j < n; ++j) s += p[j];
      rcp[i] = s;
    }
    for (int i = 0; i + 1 < n; ++i) EXPECT_NEAR(cp[i] + rcp[i + 1], 1.0, 1e-9);
  }
}

TEST(OmForward, EndToEndGradCheck) {
  om::Config cfg = tiny_config(3, 8);
  Rng rng(14);
  om::Model m(cfg, rng);
  std::vector<int64_t> ids = {2, 5, 7, 1};
  auto eval = [&](bool with_grad) {
    Tape t;
    om::Trace tr = om::forward(t, m, ids);
    Tensor loss = t.sum(t.mul(tr.output_tensor, tr.output_tensor));
    if (with_grad) t.backward(loss);
    return loss.scalar();
  };
  GradCheckResult res = grad_check(eval, m.params);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param << "[" << res.worst_index << "]";
}

TEST(OmForward, UnknownTokenIsVocabError) {
  om::Config cfg = tiny_config();
  Rng rng(15);
  om::Model m(cfg, rng);
  Tape t;
  EXPECT_THROW(om::forward(t, m, {0, 12}), VocabError);
}

// ---- shift-reduce extraction -------------------------------------------------

namespace {
std::vector<std::vector<double>> onehot_trace(const std::vector<int>& slots, int n) {
  std::vector<std::vector<double>> tr;
  for (int s : slots) {
    std::vector<double> p(n, 0.0);
    p[s] = 1.0;
    tr.push_back(p);
  }
  return tr;
}
}  // namespace

TEST(OmParse, TwoTokensAlwaysMerge) {
  Rng rng(16);
  for (int it = 0; it < 20; ++it) {
    std::vector<std::vector<double>> tr(2, std::vector<double>(4));
    for (auto& p : tr) {
      double s = 0;
      for (double& v : p) {
        v = rng.next_double();
        s += v;
      }
      for (double& v : p) v /= s;
    }
    TreePtr t = om::parse_trace(tr);
    EXPECT_EQ(render_tree(*t), "( w0 w1 )");
  }
}

TEST(OmParse, HandTracedThreeTokenSequences) {
  int n = 4;  // slots, 0-indexed top slot is 3
  // attend the top slot three times: the (w0 w1) candidate is confirmed at
  // step 3, then w2 shifts -> ((w0 w1) w2)
  TreePtr a = om::parse_trace(onehot_trace({3, 3, 3}, n));
  EXPECT_EQ(render_tree(*a), "( ( w0 w1 ) w2 )");
  // attending one slot higher on the last step leaves w1 unconfirmed:
  // stack [w0 w1 w2] drains right-branching -> (w0 (w1 w2))
  TreePtr b = om::parse_trace(onehot_trace({3, 3, 2}, n));
  EXPECT_EQ(render_tree(*b), "( w0 ( w1 w2 ) )");
}

TEST(OmParse, GuardedPopsWhenStackShort) {
  // a reduce demanded before two subtrees exist must be skipped, not crash
  int n = 4;
  TreePtr t = om::parse_trace(onehot_trace({3, 3, 3, 3}, n));
  EXPECT_EQ(render_tree(*t), "( ( ( w0 w1 ) w2 ) w3 )");
}

TEST(OmParse, AlwaysWellFormedOverRandomTraces) {
  Rng rng(17);
  for (int it = 0; it < 1000; ++it) {
    int T = 1 + static_cast<int>(rng.next_below(12));
    int n = 2 + static_cast<int>(rng.next_below(5));
    std::vector<std::vector<double>> tr;
    for (int t = 0; t < T; ++t) {
      std::vector<double> p(n, 0.0);
      double s = 0;
      for (double& v : p) {
        v = rng.next_double();
        s += v;
      }
      for (double& v : p) v /= s;
      tr.push_back(p);
    }
    TreePtr t = om::parse_trace(tr);
    ASSERT_EQ(leaf_count(*t), T);
    // leaves in order
    struct Check {
      int next = 0;
      void walk(const BinaryTree& node) {
        if (node.is_leaf()) {
          ASSERT_EQ(node.leaf, next++);
          return;
        }
        walk(*node.left);
        walk(*node.right);
      }
    } chk;
    chk.walk(*t);
  }
}

// ---- pair head ------------------------------------------------------------------

TEST(PairFeatures, AbsBlockZeroForEqualInputs) {
  Tape t;
  Tensor h = t.leaf({1, 4}, {0.5, -0.25, 1.0, 2.0});
  Tensor feat = om::pair_features(t, h, h);
  ASSERT_EQ(feat.shape(), (Shape{1, 16}));
  for (int i = 12; i < 16; ++i) EXPECT_DOUBLE_EQ(feat.val()[i], 0.0);
}

TEST(PairFeatures, SwapChangesOnlyAsymmetricBlocks) {
  Tape t;
  Tensor h1 = t.leaf({1, 3}, {0.5, -0.25, 1.0});
  Tensor h2 = t.leaf({1, 3}, {-1.0, 0.75, 0.25});
  auto a = om::pair_features(t, h1, h2).to_vector();
  auto b = om::pair_features(t, h2, h1).to_vector();
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(a[i], b[3 + i]);      // h1 block swapped
    EXPECT_DOUBLE_EQ(a[3 + i], b[i]);      // h2 block swapped
    EXPECT_DOUBLE_EQ(a[6 + i], b[6 + i]);  // product block symmetric
    EXPECT_DOUBLE_EQ(a[9 + i], b[9 + i]);  // abs-difference block symmetric
  }
}

TEST(PairHead, GradCheck) {
  Rng rng(18);
  ParamStore ps;
  MlpHead head(ps, "head", 16, 8, 7, rng);
  std::vector<double> h1(4), h2(4);
  for (double& v : h1) v = rng.uniform(-1, 1);
  for (double& v : h2) v = rng.uniform(-1, 1);
  auto eval = [&](bool with_grad) {
    Tape t;
    Tensor feat = om::pair_features(t, t.leaf({1, 4}, h1), t.leaf({1, 4}, h2));
    Tensor logits = head.forward(t, feat);
    Tensor loss = t.mean(t.nll(logits, {3}));
    if (with_grad) t.backward(loss);
    return loss.scalar();
  };
  GradCheckResult res = grad_check(eval, ps);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param;
}
