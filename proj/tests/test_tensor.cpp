#include <gtest/gtest.h>

#include <cmath>

#include "oplm/parameters.hpp"

using namespace oplm;

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), ShapeError);
}

TEST(Tensor, RowMajorIndexing) {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m[5], 6.0);
  EXPECT_EQ(m.reshaped({3, 2})(2, 1), 6.0);
  EXPECT_THROW(m.reshaped({4, 2}), ShapeError);
}

TEST(Tensor, ArithmeticAndNorms) {
  const Tensor a = Tensor::vector({3, 4});
  const Tensor b = Tensor::vector({1, 1});
  EXPECT_EQ(a + b, Tensor::vector({4, 5}));
  EXPECT_EQ(a - b, Tensor::vector({2, 3}));
  EXPECT_EQ(a * 2.0, Tensor::vector({6, 8}));
  EXPECT_DOUBLE_EQ(l2_norm(a), 5.0);
  EXPECT_DOUBLE_EQ(dot(a, b), 7.0);
  EXPECT_THROW(a + Tensor::vector({1, 2, 3}), ShapeError);
}

TEST(Tensor, CosineSimilarity) {
  EXPECT_NEAR(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({0, 2})), 0.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(Tensor::vector({1, 2}), Tensor::vector({2, 4})), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(Tensor::vector({1, 2}), Tensor::vector({-1, -2})), -1.0, 1e-12);
  EXPECT_EQ(cosine_similarity(Tensor::vector({0, 0}), Tensor::vector({1, 2})), 0.0);
}

TEST(Tensor, FinitenessCheck) {
  Tensor t = Tensor::vector({1, 2});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

// ------------------------------------------------------------------ Adam

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  std::vector<Tensor> p{Tensor::vector({1.0, -2.0})};
  AdamState s = AdamState::for_parameters(p);
  s.first_moment[0] = Tensor::vector({0.5, 0.5});
  s.second_moment[0] = Tensor::vector({0.25, 0.25});
  s.step = 3;
  // With nonzero moments the update is nonzero; check the pure fixpoint from scratch instead.
  std::vector<Tensor> q{Tensor::vector({1.0, -2.0})};
  AdamState fresh = AdamState::for_parameters(q);
  adam_step(q, {Tensor::vector({0.0, 0.0})}, fresh, {});
  EXPECT_EQ(q[0], Tensor::vector({1.0, -2.0}));
  EXPECT_EQ(fresh.step, 1u);

  adam_step(p, {Tensor::vector({0.0, 0.0})}, s, {});
  EXPECT_DOUBLE_EQ(s.first_moment[0][0], 0.45);
  EXPECT_DOUBLE_EQ(s.second_moment[0][0], 0.25 * 0.999);
}

TEST(Adam, SingleStepHandValue) {
  std::vector<Tensor> p{Tensor::scalar(1.0)};
  AdamState s = AdamState::for_parameters(p);
  AdamOptions o;
  o.lr = 0.1;
  adam_step(p, {Tensor::scalar(1.0)}, s, o);
  // m_hat = v_hat = 1
  EXPECT_NEAR(p[0].item(), 1.0 - 0.1 * 1.0 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, TwoStepsClosedForm) {
  std::vector<Tensor> p{Tensor::scalar(0.0)};
  AdamState s = AdamState::for_parameters(p);
  AdamOptions o;
  const double g = 0.3;
  adam_step(p, {Tensor::scalar(g)}, s, o);
  adam_step(p, {Tensor::scalar(g)}, s, o);
  EXPECT_EQ(s.step, 2u);
  const double v2 = (1 - o.beta2) * g * g * (1 + o.beta2);
  EXPECT_NEAR(s.second_moment[0].item(), v2, 1e-18);
  const double m2 = (1 - o.beta1) * g * (1 + o.beta1);
  EXPECT_NEAR(s.first_moment[0].item(), m2, 1e-18);
  // Constant gradient: both bias-corrected steps are lr * g / (|g| + eps).
  EXPECT_NEAR(p[0].item(), -2 * o.lr * g / (g + o.eps), 1e-12);
}

TEST(Adam, ShapeMismatchThrows) {
  std::vector<Tensor> p{Tensor::vector({1, 2})};
  AdamState s = AdamState::for_parameters(p);
  EXPECT_THROW(adam_step(p, {Tensor::vector({1, 2, 3})}, s, {}), ShapeError);
}

TEST(Parameters, NamesAreUniqueAndOrdered) {
  Parameters ps;
  EXPECT_EQ(ps.add("a", Tensor::scalar(1)), 0u);
  EXPECT_EQ(ps.add("b", Tensor::vector({1, 2})), 1u);
  EXPECT_THROW(ps.add("a", Tensor::scalar(2)), ContractError);
  EXPECT_EQ(ps.index_of("b"), 1u);
  EXPECT_THROW(ps.index_of("zzz"), ContractError);
  EXPECT_EQ(ps.scalar_count(), 3u);
}
