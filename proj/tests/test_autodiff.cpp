#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <numeric>

#include "moca/autodiff/grad_check.hpp"
#include "moca/autodiff/ops.hpp"
#include "support/grad_cases.hpp"
#include "support/random_tensor.hpp"

using namespace moca;
using namespace moca::ad;
using moca::testing::random_tensor;

namespace {

void expect_values(const Tensor& t, std::initializer_list<double> want, double tol = 0.0) {
  ASSERT_EQ(t.size(), want.size());
  std::size_t i = 0;
  for (double w : want) {
    if (tol == 0.0) {
      EXPECT_EQ(t.values()[i], w) << "index " << i;
    } else {
      EXPECT_NEAR(t.values()[i], w, tol) << "index " << i;
    }
    ++i;
  }
}

}  // namespace

TEST(Tensor, RejectsNonFiniteLeaves) {
  EXPECT_THROW(Tensor::from(1, 2, {1.0, std::nan("")}), ValidationError);
  EXPECT_THROW(Tensor::from(1, 1, {INFINITY}), ValidationError);
  EXPECT_THROW(Tensor::from(2, 2, {1.0, 2.0, 3.0}), DimensionError);
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Tensor a = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
  expect_values(matmul(Tensor::identity(2), a), {1, 2, 3, 4, 5, 6});
}

TEST(Matmul, HandEvaluatedProduct) {
  Tensor a = Tensor::from(2, 2, {1, 2, 3, 4});
  Tensor b = Tensor::from(2, 1, {1, 1});
  Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  expect_values(c, {3, 7});
}

TEST(Matmul, ZeroAnnihilates) {
  Rng rng(3);
  Tensor a = random_tensor(rng, 3, 4);
  Tensor c = matmul(Tensor::zeros(2, 3), a);
  for (double v : c.values()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros(2, 3), Tensor::zeros(2, 3)), DimensionError);
  EXPECT_THROW(matmul_nt(Tensor::zeros(2, 3), Tensor::zeros(2, 4)), DimensionError);
}

TEST(Softmax, ZeroRowIsUniform) { expect_values(softmax_rows(Tensor::zeros(1, 4)), {0.25, 0.25, 0.25, 0.25}); }

TEST(Softmax, LogInputsGiveProportions) {
  Tensor x = Tensor::row({std::log(1.0), std::log(2.0), std::log(3.0)});
  expect_values(softmax_rows(x, 1.0), {1.0 / 6, 2.0 / 6, 3.0 / 6}, 1e-15);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor(rng, 5, 7, -10, 10);
    const double c = rng.uniform(-50, 50);
    Tensor y = softmax_rows(x, 0.8);
    Tensor ys = softmax_rows(add_scalar(x, c), 0.8);
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        s += y.at(i, j);
        EXPECT_NEAR(y.at(i, j), ys.at(i, j), 1e-12);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, EmptyRowDimensionThrows) { EXPECT_THROW(softmax_rows(Tensor::zeros(2, 0)), DimensionError); }

TEST(Softmax, MaskedColumnIsExactlyZeroAndOthersMatchUnmasked) {
  Rng rng(5);
  Tensor x = random_tensor(rng, 3, 4, -2, 2);
  const std::vector<char> mask{0, 0, 0, 1};
  Tensor masked = softmax_rows(x, 0.5, mask);
  Tensor plain = softmax_rows(slice_cols(x, 0, 3), 0.5);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(masked.at(i, 3), 0.0);
    for (std::size_t j = 0; j < 3; ++j)
      EXPECT_EQ(std::bit_cast<std::uint64_t>(masked.at(i, j)), std::bit_cast<std::uint64_t>(plain.at(i, j)));
  }
}

TEST(Elementwise, CosineSelfAndAntipodal) {
  Rng rng(2);
  Tensor v = random_tensor(rng, 1, 5);
  EXPECT_NEAR(cosine_sim(v, v).item(), 1.0, 1e-15);
  EXPECT_NEAR(cosine_sim(v, neg(v)).item(), -1.0, 1e-15);
  EXPECT_THROW(cosine_sim(v, Tensor::zeros(1, 5)), DegenerateInputError);
}

TEST(Elementwise, LayerNormOfConstantRowIsZero) {
  Tensor y = layernorm_rows(Tensor::filled(2, 6, 3.25));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Elementwise, LogRejectsNonPositive) { EXPECT_THROW(ad::log(Tensor::row({1.0, 0.0})), DegenerateInputError); }

TEST(Elementwise, FocalMatchesDirectFormula) {
  // p = 0.9 for a positive: 0.25 * 0.01 * -ln 0.9
  const double logit = std::log(0.9 / 0.1);
  const std::vector<double> t{1.0};
  EXPECT_NEAR(sigmoid_focal_loss(Tensor::scalar(logit), t, 0.25, 2.0).item(), 0.25 * 0.01 * -std::log(0.9), 1e-15);
}

TEST(Backward, LinearMapGradientIsInputPerRow) {
  Tensor w = Tensor::from(2, 3, {0.1, -0.2, 0.3, 0.5, 0.7, -1.1}, true);
  Tensor x = Tensor::from(3, 1, {2.0, -1.0, 4.0});
  backward(sum(matmul(w, x)));
  expect_values(w, {0.1, -0.2, 0.3, 0.5, 0.7, -1.1});
  const auto& g = w.grad();
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(g[r * 3 + 0], 2.0);
    EXPECT_EQ(g[r * 3 + 1], -1.0);
    EXPECT_EQ(g[r * 3 + 2], 4.0);
  }
}

TEST(Backward, SquaredNormGradientIsTwiceInput) {
  Tensor v = Tensor::row({1.5, -2.0, 0.25}, true);
  backward(sum(square(v)));
  EXPECT_EQ(v.grad()[0], 3.0);
  EXPECT_EQ(v.grad()[1], -4.0);
  EXPECT_EQ(v.grad()[2], 0.5);
}

TEST(Backward, RejectsNonScalarAndSecondPass) {
  Tensor v = Tensor::row({1.0, 2.0}, true);
  EXPECT_THROW(backward(square(v)), ContractError);
  Tensor loss = sum(square(v));
  backward(loss);
  EXPECT_THROW(backward(loss), ContractError);
}

TEST(Backward, RejectsGraphSharingConsumedNodes) {
  Tensor v = Tensor::row({1.0, 2.0}, true);
  Tensor shared = square(v);
  backward(sum(shared));
  EXPECT_THROW(backward(sum(scale(shared, 2.0))), ContractError);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor v = Tensor::row({1.0, 2.0}, true);
  NoGradGuard ng;
  Tensor y = sum(square(v));
  EXPECT_FALSE(y.requires_grad());
}

TEST(Backward, DeterministicBitwise) {
  auto run = [] {
    Rng rng(17);
    Tensor a = random_tensor(rng, 4, 6, -1, 1, true);
    Tensor b = random_tensor(rng, 6, 3, -1, 1, true);
    Tensor y = softmax_rows(matmul(layernorm_rows(a), b), 1.0);
    backward(sum(mul(y, y)));
    std::vector<double> g = a.grad();
    g.insert(g.end(), b.grad().begin(), b.grad().end());
    return g;
  };
  const auto g1 = run();
  const auto g2 = run();
  ASSERT_EQ(g1.size(), g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(g1[i]), std::bit_cast<std::uint64_t>(g2[i]));
}

TEST(Backward, TapeIsTopologicallyOrdered) {
  Tensor a = Tensor::row({1.0, 2.0}, true);
  Tensor b = square(a);
  Tensor c = add(b, a);
  Tensor d = sum(mul(c, b));
  Tape tape(d);
  const auto& order = tape.order();
  for (std::size_t i = 0; i < order.size(); ++i)
    for (const auto& p : order[i]->parents) {
      auto it = std::find(order.begin(), order.end(), p);
      ASSERT_NE(it, order.end());
      EXPECT_LT(static_cast<std::size_t>(it - order.begin()), i);
    }
}

TEST(GradCheck, SigmoidOfScaledInputAgainstClosedForm) {
  Tensor w = Tensor::scalar(0.3, true);
  const double x = 1.0;
  std::vector<Tensor> params{w};
  auto f = [&] { return sigmoid(scale(w, x)); };
  auto rep = grad_check(f, params, {.h = 1e-5, .tol = 1e-6});
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
  backward(f());
  const double s = 1.0 / (1.0 + std::exp(-0.3));
  EXPECT_NEAR(w.grad()[0], s * (1 - s) * x, 1e-15);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  Tensor w = Tensor::row({0.3, 0.4}, true);
  std::vector<Tensor> params{w};
  auto rep = grad_check([] { return Tensor::scalar(2.0); }, params);
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.max_rel_error, 0.0);
}

TEST(GradCheck, DetectsNondeterminism) {
  Tensor w = Tensor::row({0.3}, true);
  std::vector<Tensor> params{w};
  double drift = 0.0;
  auto f = [&] {
    drift += 1.0;
    return add_scalar(sum(w), drift);
  };
  EXPECT_THROW(grad_check(f, params), ContractError);
}

TEST(GradCheck, RejectsStepOutsideRange) {
  Tensor w = Tensor::row({0.3}, true);
  std::vector<Tensor> params{w};
  EXPECT_THROW(grad_check([&] { return sum(w); }, params, {.h = 1e-2}), ValidationError);
}

class PrimitiveGradients : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradients, PassAtTolerance) {
  const auto cases = moca::testing::primitive_grad_cases();
  const auto& spec = cases.at(GetParam());
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto gc = spec.make(seed);
    auto rep = grad_check(gc.objective, gc.params, {.h = 1e-5, .tol = 1e-4});
    EXPECT_TRUE(rep.passed) << spec.name << " seed " << seed << " err " << rep.max_rel_error;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, PrimitiveGradients,
                         ::testing::Range<std::size_t>(0, moca::testing::primitive_grad_cases().size()),
                         [](const auto& info) { return moca::testing::primitive_grad_cases()[info.param].name; });
