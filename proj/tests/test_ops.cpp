#include <gtest/gtest.h>

#include <cmath>

#include "oplm/ops.hpp"
#include "test_util.hpp"

using namespace oplm;
using testkit::gradient_relative_error;
using testkit::LossBuilder;
using testkit::random_tensor;

namespace {

// Weighted sum so every output coordinate gets a distinct upstream gradient.
Var probe(Var y) {
  Tape& t = y.tape();
  Tensor w(y.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i % 7) - 0.05 * (i % 3);
  return sum(mul(y, t.constant(std::move(w))));
}

struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  LossBuilder build;
  double lo = -1.0, hi = 1.0;
};

std::vector<OpCase> cases() {
  return {
      {"add", {{2, 3}, {2, 3}}, [](Tape&, const std::vector<Var>& v) { return probe(add(v[0], v[1])); }},
      {"sub", {{2, 3}, {2, 3}}, [](Tape&, const std::vector<Var>& v) { return probe(sub(v[0], v[1])); }},
      {"mul", {{2, 3}, {2, 3}}, [](Tape&, const std::vector<Var>& v) { return probe(mul(v[0], v[1])); }},
      {"scale", {{3, 2}}, [](Tape&, const std::vector<Var>& v) { return probe(scale(v[0], -1.7)); }},
      {"scale_by_var", {{3, 2}, {}}, [](Tape&, const std::vector<Var>& v) { return probe(scale(v[0], v[1])); }},
      {"add_scalar", {{3}}, [](Tape&, const std::vector<Var>& v) { return probe(add_scalar(v[0], 2.0)); }},
      {"square", {{2, 2}}, [](Tape&, const std::vector<Var>& v) { return probe(square(v[0])); }},
      {"reciprocal", {{2, 2}}, [](Tape&, const std::vector<Var>& v) { return probe(reciprocal(v[0])); }, 0.5, 2.0},
      {"log", {{2, 2}}, [](Tape&, const std::vector<Var>& v) { return probe(log(v[0])); }, 0.5, 2.0},
      {"sigmoid", {{2, 3}}, [](Tape&, const std::vector<Var>& v) { return probe(sigmoid(v[0])); }, -3, 3},
      {"tanh", {{2, 3}}, [](Tape&, const std::vector<Var>& v) { return probe(tanh(v[0])); }, -3, 3},
      {"relu", {{3, 3}}, [](Tape&, const std::vector<Var>& v) { return probe(relu(v[0])); }},
      {"identity", {{3}}, [](Tape&, const std::vector<Var>& v) { return probe(identity(v[0])); }},
      {"softmax", {{2, 4}}, [](Tape&, const std::vector<Var>& v) { return probe(softmax(v[0])); }, -2, 2},
      {"matmul", {{2, 3}, {3, 4}}, [](Tape&, const std::vector<Var>& v) { return probe(matmul(v[0], v[1])); }},
      {"matmul_bt", {{2, 3}, {4, 3}}, [](Tape&, const std::vector<Var>& v) { return probe(matmul_bt(v[0], v[1])); }},
      {"matmul_at", {{3, 2}, {3, 4}}, [](Tape&, const std::vector<Var>& v) { return probe(matmul_at(v[0], v[1])); }},
      {"transpose", {{2, 3}}, [](Tape&, const std::vector<Var>& v) { return probe(transpose(v[0])); }},
      {"add_row", {{3, 2}, {2}}, [](Tape&, const std::vector<Var>& v) { return probe(add_row(v[0], v[1])); }},
      {"add_col", {{3, 2}, {3}}, [](Tape&, const std::vector<Var>& v) { return probe(add_col(v[0], v[1])); }},
      {"scale_rows", {{3, 2}, {3}}, [](Tape&, const std::vector<Var>& v) { return probe(scale_rows(v[0], v[1])); }},
      {"outer", {{3}, {2}}, [](Tape&, const std::vector<Var>& v) { return probe(outer(v[0], v[1])); }},
      {"frobenius_norm", {{2, 3}}, [](Tape&, const std::vector<Var>& v) { return frobenius_norm(v[0]); }},
      {"sum", {{2, 3}}, [](Tape&, const std::vector<Var>& v) { return sum(square(v[0])); }},
      {"mean", {{2, 3}}, [](Tape&, const std::vector<Var>& v) { return mean(square(v[0])); }},
      {"row_sums", {{3, 2}}, [](Tape&, const std::vector<Var>& v) { return probe(row_sums(v[0])); }},
      {"row_norms", {{3, 2}}, [](Tape&, const std::vector<Var>& v) { return probe(row_norms(v[0])); }},
      {"reshape", {{2, 3}}, [](Tape&, const std::vector<Var>& v) { return probe(reshape(v[0], {3, 2})); }},
      {"concat_cols", {{2, 1}, {2, 3}},
       [](Tape&, const std::vector<Var>& v) { return probe(concat_cols({v[0], v[1], v[0]})); }},
      {"concat_rows", {{1, 2}, {3, 2}}, [](Tape&, const std::vector<Var>& v) { return probe(concat_rows({v[0], v[1]})); }},
      {"slice_cols", {{2, 4}}, [](Tape&, const std::vector<Var>& v) { return probe(slice_cols(v[0], 1, 2)); }},
      {"slice_rows", {{4, 2}}, [](Tape&, const std::vector<Var>& v) { return probe(slice_rows(v[0], 1, 2)); }},
      {"repeat_rows", {{2, 3}}, [](Tape&, const std::vector<Var>& v) { return probe(repeat_rows(v[0], 3)); }},
      {"mean_groups", {{6, 2}}, [](Tape&, const std::vector<Var>& v) { return probe(mean_groups(v[0], 3)); }},
      {"mse", {{3, 2}, {3, 2}}, [](Tape&, const std::vector<Var>& v) { return mse(v[0], v[1]); }},
      {"cross_entropy", {{2, 3}},
       [](Tape& t, const std::vector<Var>& v) {
         return cross_entropy(softmax(v[0]), t.constant(Tensor::matrix({{0, 1, 0}, {1, 0, 0}})));
       }},
      {"softmax_cross_entropy", {{2, 3}},
       [](Tape& t, const std::vector<Var>& v) {
         return softmax_cross_entropy(v[0], t.constant(Tensor::matrix({{0, 0, 1}, {0, 1, 0}})));
       }},
  };
}

}  // namespace

TEST(OpsGradients, EveryPrimitiveMatchesFiniteDifferences) {
  for (const auto& c : cases()) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed * 31 + 7);
      std::vector<Tensor> params;
      for (const auto& s : c.shapes) params.push_back(random_tensor(s, rng, c.lo, c.hi));
      EXPECT_LT(gradient_relative_error(c.build, params), 1e-4) << c.name << " seed " << seed;
    }
  }
}

TEST(Ops, OuterExamples) {
  Tape t;
  EXPECT_EQ(outer(t.constant(Tensor::vector({1, 0})), t.constant(Tensor::vector({3, 4}))).value(),
            Tensor::matrix({{3, 4}, {0, 0}}));
  EXPECT_EQ(outer(t.constant(Tensor::vector({0, 0})), t.constant(Tensor::vector({1, 2}))).value(),
            Tensor::matrix({{0, 0}, {0, 0}}));
  EXPECT_EQ(outer(t.constant(Tensor::vector({2, -1, 3})), t.constant(Tensor::vector({1, 5}))).value(),
            Tensor::matrix({{2, 10}, {-1, -5}, {3, 15}}));
  EXPECT_THROW(outer(t.constant(Tensor({0})), t.constant(Tensor::vector({1}))), ShapeError);
}

TEST(Ops, FrobeniusExamples) {
  Tape t;
  EXPECT_DOUBLE_EQ(frobenius_norm(t.constant(Tensor::matrix({{3, 4}, {0, 0}}))).value().item(), 5.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(t.constant(Tensor::matrix({{0, 0}, {0, 0}}))).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(t.constant(Tensor::matrix({{1, 1}, {1, 1}}))).value().item(), 2.0);
}

TEST(Ops, FrobeniusGradientAtZeroIsZero) {
  Tape t;
  const Var m = t.parameter(Tensor({2, 2}));
  EXPECT_EQ(t.backward(frobenius_norm(m))[0], Tensor({2, 2}));
}

TEST(Ops, ReluGradientAtZeroIsZero) {
  Tape t;
  const Var x = t.parameter(Tensor::vector({0.0, 1.0}));
  EXPECT_EQ(t.backward(sum(relu(x)))[0], Tensor::vector({0.0, 1.0}));
}

TEST(Ops, OuterNormIsProductOfNorms) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 50; ++k) {
    Tape t;
    const Tensor u = random_tensor({4}, rng), v = random_tensor({6}, rng);
    const double f = frobenius_norm(outer(t.constant(u), t.constant(v))).value().item();
    EXPECT_NEAR(f, l2_norm(u) * l2_norm(v), 1e-12);
  }
}

TEST(Ops, ActivationFixedPoints) {
  Tape t;
  EXPECT_EQ(softmax(t.constant(Tensor::vector({0, 0}))).value(), Tensor::vector({0.5, 0.5}));
  EXPECT_DOUBLE_EQ(sigmoid(t.constant(Tensor::scalar(0))).value().item(), 0.5);
  EXPECT_DOUBLE_EQ(tanh(t.constant(Tensor::scalar(0))).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(relu(t.constant(Tensor::scalar(-2))).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(mse(t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({1, 2}))).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(
      cross_entropy(t.constant(Tensor::vector({1, 0})), t.constant(Tensor::vector({1, 0}))).value().item(), 0.0);
}

TEST(Ops, SoftmaxRowsAreDistributions) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 50; ++k) {
    const Tensor p = softmax_rows(random_tensor({3, 5}, rng, -20, 20));
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) {
        EXPECT_GT(p(r, c), 0.0);
        EXPECT_LT(p(r, c), 1.0);
        s += p(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Ops, UniformCrossEntropyIsLogN) {
  Tape t;
  Tensor y({1, 5});
  y[2] = 1.0;
  EXPECT_NEAR(softmax_cross_entropy(t.constant(Tensor({1, 5})), t.constant(y)).value().item(), std::log(5.0),
              1e-12);
}

TEST(Ops, CrossEntropyRejectsNonOneHotTargets) {
  Tape t;
  EXPECT_ANY_THROW(
      cross_entropy(t.constant(Tensor::vector({0.5, 0.5})), t.constant(Tensor::vector({0.5, 0.5}))));
}

TEST(Ops, ShapeErrors) {
  Tape t;
  const Var a = t.constant(Tensor({2, 3}));
  EXPECT_THROW(add(a, t.constant(Tensor({3, 2}))), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(mean_groups(a, 4), ShapeError);
}

TEST(Ops, RepeatAndMeanGroupsLayout) {
  Tape t;
  const Var x = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const Tensor r = repeat_rows(x, 2).value();
  EXPECT_EQ(r, Tensor::matrix({{1, 2}, {3, 4}, {1, 2}, {3, 4}}));
  const Tensor m = mean_groups(t.constant(Tensor::matrix({{1, 2}, {3, 4}, {3, 6}, {5, 8}})), 2).value();
  EXPECT_EQ(m, Tensor::matrix({{2, 4}, {4, 6}}));
}
