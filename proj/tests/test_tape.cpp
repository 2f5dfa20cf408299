#include <gtest/gtest.h>

#include <cmath>

#include "oplm/ops.hpp"
#include "test_util.hpp"

using namespace oplm;

TEST(Tape, SquareGradient) {
  Tape t;
  const Var x = t.parameter(Tensor::scalar(3.0));
  const auto g = t.backward(square(x));
  EXPECT_DOUBLE_EQ(g[0].item(), 6.0);
}

TEST(Tape, LinearMapGradientRows) {
  Tape t;
  const Var W = t.parameter(Tensor::matrix({{0.3, -1}, {2, 5}, {0, 0}}));
  const Var a = t.constant(Tensor::matrix({{1}, {2}}));
  const auto g = t.backward(sum(matmul(W, a)));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_DOUBLE_EQ(g[0](r, 0), 1.0);
    EXPECT_DOUBLE_EQ(g[0](r, 1), 2.0);
  }
}

TEST(Tape, UnreachedParametersGetZeros) {
  Tape t;
  const Var x = t.parameter(Tensor::scalar(2.0));
  t.parameter(Tensor::matrix({{1, 2}, {3, 4}}));
  const auto g = t.backward(square(x));
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[1], Tensor({2, 2}));
}

TEST(Tape, NonScalarLossIsRejected) {
  Tape t;
  const Var x = t.parameter(Tensor::vector({1, 2}));
  EXPECT_THROW(t.backward(square(x)), ContractError);
}

TEST(Tape, NonFiniteValuesRaise) {
  Tape t;
  EXPECT_THROW(t.constant(Tensor::vector({1.0, std::nan("")})), NumericError);
  const Var x = t.parameter(Tensor::scalar(1e200));
  EXPECT_THROW(square(x), NumericError);
}

TEST(Tape, OperandsFromAnotherTapeAreRejected) {
  Tape a, b;
  const Var x = a.parameter(Tensor::scalar(1));
  const Var y = b.parameter(Tensor::scalar(2));
  EXPECT_THROW(add(x, y), ContractError);
}

TEST(Tape, DuplicatedSubexpressionsMatchSimplifiedForm) {
  std::mt19937_64 rng(5);
  const Tensor w = testkit::random_tensor({3, 3}, rng);
  // (w*w) + (w*w) built twice vs 2 * square(w)
  Tape t1;
  const Var a = t1.parameter(w);
  const auto g1 = t1.backward(sum(add(mul(a, a), mul(a, a))));
  Tape t2;
  const Var b = t2.parameter(w);
  const auto g2 = t2.backward(sum(scale(square(b), 2.0)));
  EXPECT_LT(max_abs_diff(g1[0], g2[0]), 1e-14);
}

TEST(Tape, ReusedNodeAccumulates) {
  Tape t;
  const Var x = t.parameter(Tensor::scalar(1.5));
  const Var y = mul(x, x);
  const auto g = t.backward(add(y, y));
  EXPECT_DOUBLE_EQ(g[0].item(), 6.0);
}

TEST(Tape, ConstantsCarryNoGradientBookkeeping) {
  Tape t;
  const Var c = t.constant(Tensor::scalar(2));
  const Var d = square(c);
  EXPECT_FALSE(d.requires_grad());
  const Var p = t.parameter(Tensor::scalar(1));
  EXPECT_TRUE(mul(p, d).requires_grad());
}
