#include "sbl/onlstm.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "sbl/gradcheck.hpp"

using namespace sbl;

TEST(Cummax, UniformPair) {
  Tape t;
  Tensor y = onlstm::cummax(t, t.leaf({2}, {0.0, 0.0}));
  EXPECT_DOUBLE_EQ(y.val()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.val()[1], 1.0);
}

TEST(Cummax, KnownSoftmax) {
  Tape t;
  Tensor y = onlstm::cummax(t, t.leaf({3}, {std::log(2.0), 0.0, 0.0}));
  EXPECT_NEAR(y.val()[0], 0.5, 1e-15);
  EXPECT_NEAR(y.val()[1], 0.75, 1e-15);
  EXPECT_NEAR(y.val()[2], 1.0, 1e-15);
}

TEST(Cummax, SaturatedLogits) {
  Tape t;
  Tensor y = onlstm::cummax(t, t.leaf({3}, {1000.0, 0.0, 0.0}));
  for (double v : y.val()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(Cummax, EmptyIsContractError) {
  Tape t;
  EXPECT_THROW(onlstm::cummax(t, Tensor{}), std::exception);
}

TEST(Cummax, MonotoneBoundedTerminalOne) {
  Rng rng(404);
  for (int it = 0; it < 1000; ++it) {
    int n = 1 + static_cast<int>(rng.next_below(12));
    std::vector<double> xs(n);
    for (double& v : xs) v = rng.uniform(-30, 30);
    Tape t;
    Tensor y = onlstm::cummax(t, t.leaf({static_cast<int64_t>(n)}, xs));
    auto v = y.val();
    for (int i = 0; i < n; ++i) {
      EXPECT_GE(v[i], 0.0);
      EXPECT_LE(v[i], 1.0 + 1e-12);
      if (i > 0) EXPECT_GE(v[i], v[i - 1]);
    }
    EXPECT_NEAR(v[n - 1], 1.0, 1e-12);
  }
}

TEST(MasterGates, BinaryCase) {
  Tape t;
  Tensor mf = t.leaf({4}, {0, 0, 1, 1});
  Tensor mi = t.leaf({4}, {1, 1, 1, 0});
  Tensor f = t.leaf({4}, {.3, .3, .3, .3});
  Tensor i = t.leaf({4}, {.7, .7, .7, .7});
  auto cg = onlstm::combine_master_gates(t, mf, mi, f, i);
  std::vector<double> omega = cg.omega.to_vector();
  std::vector<double> fh = cg.f_hat.to_vector();
  EXPECT_EQ(omega, (std::vector<double>{0, 0, 1, 0}));
  EXPECT_EQ(fh, (std::vector<double>{0, 0, .3, 1}));
}

TEST(MasterGates, FullOverlapReducesToVanillaGates) {
  Rng rng(7);
  for (int it = 0; it < 20; ++it) {
    std::vector<double> f(6), i(6);
    for (double& v : f) v = rng.next_double();
    for (double& v : i) v = rng.next_double();
    Tape t;
    Tensor ones = t.leaf({6}, std::vector<double>(6, 1.0));
    auto cg = onlstm::combine_master_gates(t, ones, ones, t.leaf({6}, f), t.leaf({6}, i));
    EXPECT_EQ(cg.f_hat.to_vector(), f);
    EXPECT_EQ(cg.i_hat.to_vector(), i);
  }
}

TEST(MasterGates, ZeroForgetErasesRegardlessOfF) {
  Tape t;
  Tensor zeros = t.leaf({4}, std::vector<double>(4, 0.0));
  Tensor mi = t.leaf({4}, {1, 1, 0.5, 0});
  Tensor f = t.leaf({4}, {.9, .9, .9, .9});
  Tensor i = t.leaf({4}, {.2, .2, .2, .2});
  auto cg = onlstm::combine_master_gates(t, zeros, mi, f, i);
  for (double v : cg.f_hat.val()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(MasterGates, OutputsStayInUnitInterval) {
  Rng rng(99);
  for (int it = 0; it < 200; ++it) {
    Tape t;
    // genuine cummax-shaped master gates
    std::vector<double> lf(5), li(5), fv(5), iv(5);
    for (double& v : lf) v = rng.uniform(-3, 3);
    for (double& v : li) v = rng.uniform(-3, 3);
    for (double& v : fv) v = rng.next_double();
    for (double& v : iv) v = rng.next_double();
    Tensor mf = onlstm::cummax(t, t.leaf({5}, lf));
    Tensor mi = t.scale(onlstm::cummax(t, t.leaf({5}, li)), -1.0, 1.0);
    auto cg = onlstm::combine_master_gates(t, mf, mi, t.leaf({5}, fv), t.leaf({5}, iv));
    for (double v : cg.f_hat.val()) {
      EXPECT_GE(v, -1e-12);
      EXPECT_LE(v, 1.0 + 1e-12);
    }
    for (double v : cg.i_hat.val()) {
      EXPECT_GE(v, -1e-12);
      EXPECT_LE(v, 1.0 + 1e-12);
    }
  }
}

namespace {
onlstm::Config tiny_config(int64_t layers = 1) {
  onlstm::Config c;
  c.vocab = 11;
  c.input_dim = 8;
  c.hidden_dim = 8;
  c.chunk = 2;
  c.layers = layers;
  return c;
}
}  // namespace

TEST(OnLstmStep, ChunkExpansionRepeatsEachValueCTimes) {
  Tape t;
  Tensor e = onlstm::detail::chunk_expander(t, 3, 2);
  Tensor mf = t.leaf({1, 3}, {0.1, 0.5, 0.9});
  Tensor x = t.matmul(mf, e);
  EXPECT_EQ(x.to_vector(), (std::vector<double>{0.1, 0.1, 0.5, 0.5, 0.9, 0.9}));
}

TEST(OnLstmStep, DistanceEstimateFormula) {
  // master forget [0.5, 1.0] with two chunks: estimate = 2 - 1.5 = 0.5
  Tape t;
  Tensor mf = t.leaf({1, 2}, {0.5, 1.0});
  Tensor dist = t.scale(t.sum(mf), -1.0, 2.0);
  EXPECT_DOUBLE_EQ(dist.scalar(), 0.5);
}

TEST(OnLstmStep, GradCheckSingleStep) {
  Rng rng(2025);
  onlstm::Config cfg = tiny_config();
  ParamStore ps;
  Param& w = ps.add_uniform("w", {16, 4 * 8 + 2 * 4}, 16, rng);
  Param& b = ps.add_uniform("b", {4 * 8 + 2 * 4}, 40, rng);
  std::vector<double> x(8), h(8), c(8);
  for (double& v : x) v = rng.uniform(-1, 1);
  for (double& v : h) v = rng.uniform(-1, 1);
  for (double& v : c) v = rng.uniform(-1, 1);
  auto eval = [&](bool with_grad) {
    Tape t;
    Tensor expander = onlstm::detail::chunk_expander(t, 4, 2);
    onlstm::StepOutput so =
        onlstm::step(t, cfg, t.param(w), t.param(b), expander, t.leaf({1, 8}, x),
                     t.leaf({1, 8}, h), t.leaf({1, 8}, c));
    Tensor loss = t.add(t.sum(t.mul(so.h, so.h)), t.sum(so.dist));
    if (with_grad) t.backward(loss);
    return loss.scalar();
  };
  GradCheckResult res = grad_check(eval, ps);
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(OnLstmStep, MasterGateShapesAndBounds) {
  Rng rng(31337);
  onlstm::Model m(tiny_config(), rng);
  Tape t;
  onlstm::Encoded enc = onlstm::run(t, m, {1, 2, 3, 4, 5});
  ASSERT_EQ(enc.dist.size(), 1u);
  ASSERT_EQ(enc.dist[0].size(), 4u);
  for (const Tensor& d : enc.dist[0]) {
    EXPECT_GE(d.scalar(), 0.0);
    EXPECT_LE(d.scalar(), 4.0);  // D_m = 8 / 2
  }
}

TEST(Encode, SingleTokenHasNoDistances) {
  Rng rng(1);
  onlstm::Model m(tiny_config(3), rng);
  onlstm::DistanceProfile prof = onlstm::distances(m, {5});
  ASSERT_EQ(prof.per_layer.size(), 3u);
  for (const auto& layer : prof.per_layer) EXPECT_TRUE(layer.empty());
}

TEST(Encode, Deterministic) {
  Rng rng(17);
  onlstm::Model m(tiny_config(2), rng);
  auto a = onlstm::distances(m, {1, 2, 3, 4}).per_layer;
  auto b = onlstm::distances(m, {1, 2, 3, 4}).per_layer;
  EXPECT_EQ(a, b);
}

TEST(Encode, UnknownTokenIsVocabError) {
  Rng rng(17);
  onlstm::Model m(tiny_config(), rng);
  EXPECT_THROW(onlstm::distances(m, {0, 11}), VocabError);
  EXPECT_THROW(onlstm::distances(m, {-1}), VocabError);
}

TEST(Encode, EmptySequenceIsContractError) {
  Rng rng(17);
  onlstm::Model m(tiny_config(), rng);
  EXPECT_THROW(onlstm::distances(m, {}), ContractError);
}

TEST(OnLstmLm, FullStepGradCheck) {
  Rng rng(90210);
  onlstm::Config cfg = tiny_config(2);
  onlstm::Model m(cfg, rng);
  std::vector<int64_t> ids = {3, 7, 1};
  auto eval = [&](bool with_grad) {
    Tape t;
    Tensor loss = onlstm::lm_nll(t, m, ids);
    if (with_grad) t.backward(loss);
    return loss.scalar();
  };
  GradCheckResult res = grad_check(eval, m.params);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param;
}

TEST(OnLstmParse, LayerSelectionAndShape) {
  Rng rng(5150);
  onlstm::Model m(tiny_config(3), rng);
  std::vector<int64_t> ids = {1, 2, 3, 4, 5, 6};
  TreePtr t2 = onlstm::parse(m, ids, 2);
  EXPECT_EQ(leaf_count(*t2), 6);
  EXPECT_THROW(onlstm::parse(m, ids, 0), ConfigError);
  EXPECT_THROW(onlstm::parse(m, ids, 4), ConfigError);
}
