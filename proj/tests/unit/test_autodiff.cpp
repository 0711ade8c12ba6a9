#include <gtest/gtest.h>

#include <cmath>

#include "../support/op_cases.hpp"
#include "mtl/error.hpp"
#include "mtl/gradcheck.hpp"
#include "mtl/graph.hpp"

using namespace mtl;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }
std::vector<double> grads(const Tensor& t) { return {t.grad().begin(), t.grad().end()}; }

// Brute-force valid convolution, [C,H,W] input and [O,C,k,k] kernel, no bias.
std::vector<double> naive_conv(const std::vector<double>& x, std::size_t c, std::size_t h, std::size_t w,
                               const std::vector<double>& k, std::size_t o, std::size_t ks) {
  const std::size_t oh = h - ks + 1, ow = w - ks + 1;
  std::vector<double> out(o * oh * ow, 0.0);
  for (std::size_t oc = 0; oc < o; ++oc)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t ic = 0; ic < c; ++ic)
          for (std::size_t a = 0; a < ks; ++a)
            for (std::size_t b = 0; b < ks; ++b)
              acc += x[(ic * h + i + a) * w + j + b] * k[((oc * c + ic) * ks + a) * ks + b];
        out[(oc * oh + i) * ow + j] = acc;
      }
  return out;
}

}  // namespace

TEST(Forward, AddIsComponentwise) {
  Graph g;
  auto y = ops::add(g, Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4}));
  EXPECT_EQ(values(y), (std::vector<double>{4, 6}));
}

TEST(Forward, IdentityMatmulReturnsRhs) {
  Rng rng(3);
  const auto a = oracle::random_tensor(rng, {3, 4});
  Graph g;
  auto y = ops::matmul(g, Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), a);
  EXPECT_EQ(values(y), values(a));
}

TEST(Forward, ConvOfOnesIsNine) {
  Graph g;
  auto y = ops::conv2d(g, Tensor::from({1, 1, 5, 5}, std::vector<double>(25, 1.0)),
                       Tensor::from({1, 1, 3, 3}, std::vector<double>(9, 1.0)));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (double v : y.data()) EXPECT_EQ(v, 9.0);
}

TEST(Forward, ConvMatchesNestedLoops) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = 1 + rng.below(3), o = 1 + rng.below(3), k = 1 + rng.below(4);
    const std::size_t h = k + rng.below(5), w = k + rng.below(5);
    const auto x = oracle::random_tensor(rng, {1, c, h, w});
    const auto kw = oracle::random_tensor(rng, {o, c, k, k});
    Graph g;
    auto y = ops::conv2d(g, x, kw);
    const auto expect = naive_conv(values(x), c, h, w, values(kw), o, k);
    ASSERT_EQ(y.size(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(y.data()[i], expect[i], 1e-12);
  }
}

TEST(Forward, MaxPoolDropsOddEdge) {
  Graph g;
  auto y = ops::maxpool2d(g, Tensor::from({1, 1, 3, 3}, {1, 5, 2, 4, 3, 9, 7, 8, 6}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 5.0);
}

TEST(Forward, ReluClampsNegatives) {
  Graph g;
  EXPECT_EQ(values(ops::relu(g, Tensor::from({2}, {-1, 2}))), (std::vector<double>{0, 2}));
}

TEST(Forward, SoftmaxCrossEntropyOfUniformLogits) {
  Graph g;
  std::vector<std::int64_t> labels{0, 3, 9};
  auto loss = ops::softmax_cross_entropy(g, Tensor::zeros({3, 10}), labels);
  EXPECT_NEAR(loss.item(), std::log(10.0), 1e-15);
}

TEST(Forward, SoftmaxCrossEntropyStableForLargeLogits) {
  Graph g;
  std::vector<std::int64_t> labels{1};
  auto loss = ops::softmax_cross_entropy(g, Tensor::from({1, 2}, {-500.0, 500.0}), labels);
  EXPECT_EQ(loss.item(), 0.0);
}

TEST(Forward, ShapeErrorsNameShapes) {
  Graph g;
  try {
    ops::add(g, Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2, 3]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("[3, 2]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ops::matmul(g, Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  EXPECT_THROW(ops::conv2d(g, Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3})), ShapeError);
  std::vector<std::int64_t> bad{10};
  EXPECT_THROW(ops::softmax_cross_entropy(g, Tensor::zeros({1, 10}), bad), Error);
}

TEST(Forward, NonFiniteInputRejected) {
  Graph g;
  EXPECT_THROW(ops::add(g, Tensor::from({1}, {NAN}), Tensor::from({1}, {1.0})), NonFiniteError);
  EXPECT_THROW(ops::scale(g, Tensor::from({1}, {INFINITY}), 2.0), NonFiniteError);
}

TEST(Forward, OverflowingOutputRejected) {
  Graph g;
  EXPECT_THROW(ops::mul(g, Tensor::from({1}, {1e200}), Tensor::from({1}, {1e200})), NonFiniteError);
}

TEST(Backward, SumOfSquares) {
  auto w = Tensor::from({3}, {1, 2, 3}, true);
  Graph g;
  g.backward(ops::sum(g, ops::mul(g, w, w)));
  EXPECT_EQ(grads(w), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, LeafUsedTwiceAccumulates) {
  auto w1 = Tensor::from({3}, {1, -2, 0.5}, true);
  auto w2 = w1.detached(true);
  const auto c = Tensor::from({3}, {0.3, 0.7, -1.1});
  {
    Graph g;
    g.backward(ops::sum(g, ops::mul(g, w1, c)));
  }
  {
    Graph g;
    g.backward(ops::sum(g, ops::mul(g, ops::add(g, w2, w2), c)));
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(w2.grad()[i], 2.0 * w1.grad()[i]);
}

TEST(Backward, LinearGraphScalesWithUseCount) {
  const auto c = Tensor::from({2}, {1.5, -0.25});
  for (int k = 1; k <= 4; ++k) {
    auto w = Tensor::from({2}, {0.1, 0.2}, true);
    Graph g;
    Tensor acc = w;
    for (int i = 1; i < k; ++i) acc = ops::add(g, acc, w);
    g.backward(ops::sum(g, ops::mul(g, acc, c)));
    EXPECT_EQ(w.grad()[0], 1.5 * k);
    EXPECT_EQ(w.grad()[1], -0.25 * k);
  }
}

TEST(Backward, GradsAccumulateAcrossGraphsUntilZeroed) {
  auto w = Tensor::from({1}, {3.0}, true);
  for (int i = 0; i < 2; ++i) {
    Graph g;
    g.backward(ops::sum(g, ops::mul(g, w, w)));
  }
  EXPECT_EQ(w.grad()[0], 12.0);
  std::vector<Tensor> ps{w};
  zero_grads(ps);
  EXPECT_EQ(w.grad()[0], 0.0);
  zero_grads(ps);
  EXPECT_EQ(w.grad()[0], 0.0);
  zero_grads({});
}

TEST(Backward, UnreachableLeafKeepsZeroGrad) {
  auto a = Tensor::from({2}, {1, 2}, true);
  auto b = Tensor::from({2}, {3, 4}, true);
  Graph g;
  ops::mul(g, b, b);
  g.backward(ops::sum(g, a));
  EXPECT_EQ(grads(b), (std::vector<double>{0, 0}));
  EXPECT_EQ(grads(a), (std::vector<double>{1, 1}));
}

TEST(Backward, RejectsNonScalarRoot) {
  auto a = Tensor::from({2}, {1, 2}, true);
  Graph g;
  auto y = ops::scale(g, a, 2.0);
  EXPECT_THROW(g.backward(y), ShapeError);
}

TEST(Backward, RejectsConsumedGraph) {
  auto a = Tensor::from({2}, {1, 2}, true);
  Graph g;
  auto y = ops::sum(g, a);
  g.backward(y);
  EXPECT_TRUE(g.consumed());
  EXPECT_THROW(g.backward(y), GraphError);
  EXPECT_THROW(ops::sum(g, a), GraphError);
}

TEST(Backward, RejectsDataMutatedAfterForward) {
  auto a = Tensor::from({2}, {1, 2}, true);
  Graph g;
  auto y = ops::sum(g, ops::mul(g, a, a));
  a.mutable_data()[0] = 5.0;
  EXPECT_THROW(g.backward(y), GraphError);
}

TEST(Backward, RejectsTensorFromAnotherGraph) {
  auto a = Tensor::from({2}, {1, 2}, true);
  Graph g1, g2;
  auto y = ops::scale(g1, a, 2.0);
  EXPECT_THROW(ops::sum(g2, y), GraphError);
}

TEST(Backward, GradOfIntermediate) {
  auto a = Tensor::from({2}, {1, 2}, true);
  Graph g;
  auto y = ops::scale(g, a, 3.0);
  g.backward(ops::sum(g, ops::mul(g, y, y)));
  const auto gy = g.grad_of(y);
  EXPECT_EQ(gy[0], 6.0);
  EXPECT_EQ(gy[1], 12.0);
}

TEST(Backward, Deterministic) {
  Rng r1(5), r2(5);
  auto c1 = oracle::make_op_cases(r1);
  auto c2 = oracle::make_op_cases(r2);
  ASSERT_EQ(c1.size(), c2.size());
  for (std::size_t i = 0; i < c1.size(); ++i) {
    auto p1 = c1[i].point.detached(true), p2 = c2[i].point.detached(true);
    Graph g1, g2;
    auto y1 = c1[i].f(g1, p1), y2 = c2[i].f(g2, p2);
    EXPECT_EQ(y1.item(), y2.item()) << c1[i].name;
    g1.backward(y1);
    g2.backward(y2);
    EXPECT_EQ(grads(p1), grads(p2)) << c1[i].name;
  }
}

TEST(GradCheck, SumOfSquaresAtOneTwo) {
  auto r = finite_difference_check(
      [](Graph& g, const Tensor& x) { return ops::sum(g, ops::mul(g, x, x)); }, Tensor::from({2}, {1, 2}),
      {}, "sum_sq");
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.max_relative_error, 1e-6);
}

TEST(GradCheck, ConstantFunctionPasses) {
  const auto c = Tensor::scalar(4.0);
  auto r = finite_difference_check([c](Graph&, const Tensor&) { return c; }, Tensor::from({3}, {1, 2, 3}));
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.max_absolute_error, 0.0);
}

TEST(GradCheck, SoftmaxCrossEntropyRandomLogits) {
  Rng rng(21);
  std::vector<std::int64_t> labels{2, 0, 4, 1};
  auto r = finite_difference_check(
      [&](Graph& g, const Tensor& x) { return ops::softmax_cross_entropy(g, x, labels); },
      oracle::random_tensor(rng, {4, 5}, -2, 2));
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.max_relative_error, 1e-4);
}

TEST(GradCheck, DetectsWrongGradient) {
  // The detached copy hides one path from reverse mode.
  auto r = finite_difference_check(
      [](Graph& g, const Tensor& x) { return ops::sum(g, ops::mul(g, x, x.detached())); },
      Tensor::from({2}, {1.0, -2.0}));
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.max_relative_error, 0.5, 1e-6);
}

TEST(GradCheck, NonFiniteProbeNamesCoordinate) {
  auto r = finite_difference_check(
      [](Graph& g, const Tensor& x) {
        if (x.data()[1] > 1.0) return Tensor::scalar(NAN);
        return ops::sum(g, x);
      },
      Tensor::from({3}, {0.0, 1.0, 0.0}));
  EXPECT_FALSE(r.pass);
  ASSERT_TRUE(r.failed_coordinate.has_value());
  EXPECT_EQ(*r.failed_coordinate, 1u);
}

TEST(GradCheck, EveryOpFiftyRandomDraws) {
  for (const auto& s : oracle::sweep_all_ops(20261015, 50)) {
    EXPECT_EQ(s.failures, 0u) << s.op << ": " << s.first_failure;
    EXPECT_EQ(s.instances, 50u) << s.op;
  }
}
