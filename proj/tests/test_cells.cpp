#include <gtest/gtest.h>

#include <cmath>

#include "oplm/cells.hpp"
#include "test_util.hpp"

using namespace oplm;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Straight-line single-cell evaluation, written without any library helper.
LstmState hand_step(const LstmParams& p, const Tensor& x, const LstmState& prev) {
  const std::size_t H = p.hidden();
  const std::size_t I = x.size();
  std::vector<double> z(H + I);
  for (std::size_t k = 0; k < H; ++k) z[k] = prev.h[k];
  for (std::size_t k = 0; k < I; ++k) z[H + k] = x[k];
  auto affine = [&](const Tensor& w, const Tensor& b, std::size_t r) {
    double s = b[r];
    for (std::size_t k = 0; k < H + I; ++k) s += w(r, k) * z[k];
    return s;
  };
  LstmState out{Tensor({H}), Tensor({H})};
  for (std::size_t r = 0; r < H; ++r) {
    const double f = sig(affine(p.w_forget, p.b_forget, r));
    const double i = sig(affine(p.w_input, p.b_input, r));
    const double o = sig(affine(p.w_output, p.b_output, r));
    const double cbar = std::tanh(affine(p.w_cell, p.b_cell, r));
    out.c[r] = f * prev.c[r] + i * cbar;
    out.h[r] = o * std::tanh(out.c[r]);
  }
  return out;
}

LstmState random_state(std::size_t hidden, std::mt19937_64& rng) {
  return LstmState{testkit::random_tensor({hidden}, rng), testkit::random_tensor({hidden}, rng)};
}

}  // namespace

TEST(LstmCell, ZeroParamsGiveHalfGatesAndZeroState) {
  const LstmParams p = LstmParams::zeros(3, 2);
  const auto [s, g] = lstm_cell_step(p, Tensor::vector({0.4, -1, 7}), LstmState{Tensor({2}), Tensor({2})});
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(g.forget[r], 0.5);
    EXPECT_EQ(g.input[r], 0.5);
    EXPECT_EQ(g.output[r], 0.5);
    EXPECT_EQ(g.candidate[r], 0.0);
    EXPECT_EQ(s.c[r], 0.0);
    EXPECT_EQ(s.h[r], 0.0);
  }
}

TEST(LstmCell, SaturatedGatesKeepMemory) {
  std::mt19937_64 rng(3);
  LstmParams p = LstmParams::random(2, 3, rng);
  for (auto& v : p.b_forget.data()) v = 50;
  for (auto& v : p.b_input.data()) v = -50;
  const LstmState prev{Tensor::vector({0.1, 0.2, 0.3}), Tensor::vector({-0.7, 0.4, 1.3})};
  const auto [s, g] = lstm_cell_step(p, Tensor::vector({0.5, -0.5}), prev);
  EXPECT_LT(max_abs_diff(s.c, prev.c), 1e-15);
}

TEST(LstmCell, MatchesHandRolledEvaluation) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const LstmParams p = LstmParams::random(3, 2, rng);
    const Tensor x = testkit::random_tensor({3}, rng);
    const LstmState prev = random_state(2, rng);
    const auto [s, g] = lstm_cell_step(p, x, prev);
    const LstmState want = hand_step(p, x, prev);
    EXPECT_LT(max_abs_diff(s.h, want.h), 1e-14);
    EXPECT_LT(max_abs_diff(s.c, want.c), 1e-14);
  }
}

TEST(LstmCell, DimensionMismatchThrows) {
  const LstmParams p = LstmParams::zeros(3, 2);
  EXPECT_THROW(lstm_cell_step(p, Tensor::vector({1, 2}), LstmState{Tensor({2}), Tensor({2})}),
               ShapeError);
  EXPECT_THROW(lstm_cell_step(p, Tensor::vector({1, 2, 3}), LstmState{Tensor({3}), Tensor({3})}),
               ShapeError);
}

TEST(LstmCell, GateRangesHoldForLargeInputs) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const LstmParams p = LstmParams::random(4, 3, rng);
    const Tensor x = testkit::random_tensor({4}, rng, -30, 30);
    const auto [s, g] = lstm_cell_step(p, x, random_state(3, rng));
    for (std::size_t r = 0; r < 3; ++r) {
      for (double v : {g.forget[r], g.input[r], g.output[r]}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
      EXPECT_GE(g.candidate[r], -1.0);
      EXPECT_LE(g.candidate[r], 1.0);
    }
  }
}

TEST(LstmCell, RandomInitRespectsBoundsAndForgetBias) {
  std::mt19937_64 rng(1);
  const LstmParams p = LstmParams::random(6, 10, rng);
  const double bound = 1.0 / std::sqrt(16.0);
  for (const Tensor* t : {&p.w_forget, &p.w_input, &p.w_output, &p.w_cell, &p.b_input}) {
    for (double v : t->data()) EXPECT_LE(std::abs(v), bound);
  }
  for (double v : p.b_forget.data()) EXPECT_EQ(v, 1.0);
}

TEST(LstmCell, GradientsOfAllEightBlocksMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 3; ++trial) {
    const LstmParams p = LstmParams::random(3, 2, rng);
    const Tensor x = testkit::random_tensor({4, 3}, rng);
    const Tensor h0 = testkit::random_tensor({4, 2}, rng);
    const Tensor c0 = testkit::random_tensor({4, 2}, rng);
    const std::vector<Tensor> params{p.w_forget, p.w_input, p.w_output, p.w_cell,
                                     p.b_forget, p.b_input, p.b_output, p.b_cell};
    const testkit::LossBuilder build = [&](Tape& t, const std::vector<Var>& v) {
      const LstmVars lv{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
      const auto step = lstm_cell_step(lv, t.constant(x), {t.constant(h0), t.constant(c0)});
      // Both outputs feed the loss so every gate is exercised.
      return add(sum(square(step.state.h)), sum(mul(step.state.c, t.constant(h0))));
    };
    EXPECT_LT(testkit::gradient_relative_error(build, params), 1e-7);
  }
}

TEST(LstmStack, OneLayerEqualsCellStep) {
  std::mt19937_64 rng(2);
  const LstmParams p = LstmParams::random(2, 3, rng);
  const Tensor x = testkit::random_tensor({2}, rng);
  const LstmState prev = random_state(3, rng);
  const auto [out, states] = stacked_lstm_step({p}, x, {prev});
  const auto [s, g] = lstm_cell_step(p, x, prev);
  EXPECT_EQ(out, s.h);
  EXPECT_EQ(states[0].c, s.c);
}

TEST(LstmStack, ZeroLayersGiveZeroOutput) {
  const auto [out, states] =
      stacked_lstm_step({LstmParams::zeros(2, 4), LstmParams::zeros(4, 3)}, Tensor::vector({3, -2}),
                        {LstmState{Tensor({4}), Tensor({4})}, LstmState{Tensor({3}), Tensor({3})}});
  EXPECT_EQ(out, Tensor({3}));
}

TEST(LstmStack, TwoLayersEqualManualComposition) {
  std::mt19937_64 rng(4);
  const LstmParams p1 = LstmParams::random(2, 5, rng);
  const LstmParams p2 = LstmParams::random(5, 3, rng);
  const Tensor x = testkit::random_tensor({2}, rng);
  const LstmState s1 = random_state(5, rng), s2 = random_state(3, rng);
  const auto [out, states] = stacked_lstm_step({p1, p2}, x, {s1, s2});
  const LstmState m1 = hand_step(p1, x, s1);
  const LstmState m2 = hand_step(p2, m1.h, s2);
  EXPECT_LT(max_abs_diff(out, m2.h), 1e-14);
  EXPECT_LT(max_abs_diff(states[0].c, m1.c), 1e-14);
  EXPECT_LT(max_abs_diff(states[1].c, m2.c), 1e-14);
}

TEST(LstmStack, MismatchedLayerWidthsThrow) {
  EXPECT_THROW(stacked_lstm_step({LstmParams::zeros(2, 4), LstmParams::zeros(3, 3)},
                                 Tensor::vector({1, 1}),
                                 {LstmState{Tensor({4}), Tensor({4})}, LstmState{Tensor({3}), Tensor({3})}}),
               ShapeError);
}

TEST(Coordwise, SingleNodeEqualsCellStep) {
  std::mt19937_64 rng(6);
  const LstmParams p = LstmParams::random(2, 1, rng);
  const Tensor z = testkit::random_tensor({2}, rng);
  const LstmState s = random_state(1, rng);
  const auto out = coordwise_step(p, {z}, {s});
  const auto [want, g] = lstm_cell_step(p, z, s);
  EXPECT_EQ(out[0].h, want.h);
  EXPECT_EQ(out[0].c, want.c);
}

TEST(Coordwise, IdenticalNodesShareOutputs) {
  std::mt19937_64 rng(7);
  const LstmParams p = LstmParams::random(2, 1, rng);
  const Tensor z = testkit::random_tensor({2}, rng);
  const LstmState s = random_state(1, rng);
  const auto out = coordwise_step(p, {z, z}, {s, s});
  EXPECT_EQ(out[0].h, out[1].h);
  EXPECT_EQ(out[0].c, out[1].c);
}

TEST(Coordwise, EqualsIndependentPerNodeSteps) {
  std::mt19937_64 rng(9);
  const LstmParams p = LstmParams::random(2, 1, rng);
  std::vector<Tensor> z;
  std::vector<LstmState> s;
  for (int j = 0; j < 3; ++j) {
    z.push_back(testkit::random_tensor({2}, rng));
    s.push_back(random_state(1, rng));
  }
  const auto out = coordwise_step(p, z, s);
  for (int j = 0; j < 3; ++j) {
    const LstmState want = hand_step(p, z[j], s[j]);
    EXPECT_LT(max_abs_diff(out[j].h, want.h), 1e-14);
    EXPECT_LT(max_abs_diff(out[j].c, want.c), 1e-14);
  }
}

TEST(Coordwise, CommutesWithNodePermutation) {
  std::mt19937_64 rng(10);
  const LstmParams p = LstmParams::random(2, 1, rng);
  std::vector<Tensor> z;
  std::vector<LstmState> s;
  for (int j = 0; j < 5; ++j) {
    z.push_back(testkit::random_tensor({2}, rng));
    s.push_back(random_state(1, rng));
  }
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<Tensor> zp;
  std::vector<LstmState> sp;
  for (auto k : perm) {
    zp.push_back(z[k]);
    sp.push_back(s[k]);
  }
  const auto out = coordwise_step(p, z, s);
  const auto outp = coordwise_step(p, zp, sp);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    EXPECT_EQ(outp[i].h, out[perm[i]].h);
    EXPECT_EQ(outp[i].c, out[perm[i]].c);
  }
}

TEST(Coordwise, RaggedRowsThrow) {
  const LstmParams p = LstmParams::zeros(2, 1);
  const LstmState s{Tensor({1}), Tensor({1})};
  EXPECT_THROW(coordwise_step(p, {Tensor::vector({1, 2}), Tensor::vector({1})}, {s, s}), ShapeError);
}
