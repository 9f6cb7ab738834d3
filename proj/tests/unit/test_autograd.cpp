#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "inhibitor/attention.hpp"
#include "inhibitor/autograd.hpp"
#include "inhibitor/errors.hpp"

using namespace inhibitor;

namespace {

// Sum of all entries as a 1x1 node.
ag::Var total(ag::Var x) {
  ag::Graph& g = *x.graph;
  const ag::Var ones_col = g.leaf(Tensor2D(x.cols(), 1, 1.0));
  const ag::Var ones_row = g.leaf(Tensor2D(1, x.rows(), 1.0));
  return ag::matmul(ones_row, ag::matmul(x, ones_col));
}

}  // namespace

TEST(Autograd, ReluDerivative) {
  ag::Graph g;
  const ag::Var x = g.leaf(Tensor2D{{2.0, -2.0, 0.0}});
  g.backward(total(ag::relu(x)));
  EXPECT_EQ(x.grad(), (Tensor2D{{1.0, 0.0, 0.0}}));
  EXPECT_EQ(g.kink_margin(), 0.0);
}

TEST(Autograd, AbsDerivativeUsesZeroAtKink) {
  ag::Graph g;
  const ag::Var x = g.leaf(Tensor2D{{3.0, -0.5, 0.0}});
  g.backward(total(ag::abs(x)));
  EXPECT_EQ(x.grad(), (Tensor2D{{1.0, -1.0, 0.0}}));
}

TEST(Autograd, InhibitScoreGradientCountsActiveValues) {
  std::mt19937_64 rng(1);
  const Tensor2D v = gradcheck::normal(5, 4, rng);
  const Tensor2D z = abs(gradcheck::normal(3, 5, rng));
  ag::Graph g;
  const ag::Var vv = g.leaf(v), zz = g.leaf(z);
  g.backward(total(ag::inhibit_fused(vv, zz)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double active = 0;
      for (std::size_t k = 0; k < 4; ++k) active += v(j, k) > z(i, j);
      EXPECT_EQ(zz.grad()(i, j), -active);
    }
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t k = 0; k < 4; ++k) {
      double active = 0;
      for (std::size_t i = 0; i < 3; ++i) active += v(j, k) > z(i, j);
      EXPECT_EQ(vv.grad()(j, k), active);
    }
}

TEST(Autograd, GradientsMatchValuesInShape) {
  ag::Graph g;
  const ag::Var a = g.leaf(Tensor2D(3, 4, 0.5));
  const ag::Var b = g.leaf(Tensor2D(4, 2, -0.25));
  g.backward(total(ag::matmul(a, b)));
  EXPECT_EQ(a.grad().rows(), 3u);
  EXPECT_EQ(a.grad().cols(), 4u);
  EXPECT_EQ(b.grad().rows(), 4u);
  EXPECT_EQ(b.grad().cols(), 2u);
}

TEST(Autograd, FanOutAccumulates) {
  ag::Graph g;
  const ag::Var x = g.leaf(Tensor2D{{1.5}});
  g.backward(ag::add(x, ag::scale(x, 3.0)));
  EXPECT_EQ(x.grad()(0, 0), 4.0);
}

TEST(Autograd, ForwardValuesMatchReferenceOps) {
  std::mt19937_64 rng(2);
  const Tensor2D q = gradcheck::normal(4, 3, rng), k = gradcheck::normal(4, 3, rng);
  const Tensor2D v = gradcheck::normal(4, 3, rng);
  ag::Graph g;
  const ag::Var z = ag::shift_scores(ag::manhattan_scores(g.leaf(q), g.leaf(k), 2.0), 0.5);
  EXPECT_LE(max_abs_diff(ag::inhibit_fused(g.leaf(v), z).value(),
                         inhibit_naive(v, shift_scores(manhattan_scores(q, k, 2.0), 0.5))),
            1e-12);
  EXPECT_LE(max_abs_diff(ag::signed_inhibit_fused(g.leaf(v), z).value(),
                         signed_inhibit_naive(v, shift_scores(manhattan_scores(q, k, 2.0), 0.5))),
            1e-12);
  EXPECT_LE(max_abs_diff(ag::softmax_rows(g.leaf(q)).value(), softmax_rows(q)), 1e-15);
  EXPECT_LE(max_abs_diff(ag::layer_norm(g.leaf(q)).value(), layer_norm(q)), 1e-15);
}

TEST(Autograd, BackwardRejectsNonScalarLoss) {
  ag::Graph g;
  const ag::Var x = g.leaf(Tensor2D(2, 2));
  EXPECT_THROW(g.backward(x), DimensionError);
  ag::Graph other;
  EXPECT_THROW(ag::add(x, other.leaf(Tensor2D(2, 2))), DimensionError);
  EXPECT_THROW(ag::mean_pool(x, 3), DimensionError);
}

TEST(Autograd, MseLossValueAndGradient) {
  ag::Graph g;
  const ag::Var p = g.leaf(Tensor2D{{1.0}, {3.0}});
  const ag::Var loss = ag::mse_loss(p, Tensor2D{{0.0}, {1.0}});
  EXPECT_DOUBLE_EQ(loss.value()(0, 0), (1.0 + 4.0) / 2.0);
  g.backward(loss);
  EXPECT_EQ(p.grad(), (Tensor2D{{1.0}, {2.0}}));
}

class GradCheck : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradCheck, AgreesWithCentralDifferences) {
  const auto cases = gradcheck::all_cases();
  const auto& c = cases[GetParam()];
  const gradcheck::Outcome r = gradcheck::check(c, 20, 100 + GetParam());
  EXPECT_EQ(r.checked, 20) << c.name << " rejected " << r.rejected;
  EXPECT_LT(r.worst, 1e-4) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllRules, GradCheck,
                         ::testing::Range<std::size_t>(0, gradcheck::all_cases().size()),
                         [](const auto& info) { return gradcheck::all_cases()[info.param].name; });
