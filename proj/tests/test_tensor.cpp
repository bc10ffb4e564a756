#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "prime/tensor.hpp"

using namespace prime;

namespace {

constexpr double kTol = 1e-4;

TEST(TensorGrad, ElementwiseOps) {
  std::mt19937_64 rng(1);
  for (int c = 0; c < 5; ++c) {
    Tensor a = oracle::random_tensor({2, 3}, rng), b = oracle::random_tensor({2, 3}, rng);
    EXPECT_LT(oracle::gradient_check({a, b}, [](auto& v) { return oracle::weighted_sum(add(v[0], v[1]), 1); }), kTol);
    EXPECT_LT(oracle::gradient_check({a, b}, [](auto& v) { return oracle::weighted_sum(sub(v[0], v[1]), 2); }), kTol);
    EXPECT_LT(oracle::gradient_check({a, b}, [](auto& v) { return oracle::weighted_sum(mul(v[0], v[1]), 3); }), kTol);
    EXPECT_LT(oracle::gradient_check({a}, [](auto& v) { return oracle::weighted_sum(scale(v[0], -2.5), 4); }), kTol);
    EXPECT_LT(oracle::gradient_check({a}, [](auto& v) { return oracle::weighted_sum(tanh(v[0]), 5); }), kTol);
    Tensor nz = oracle::random_nonzero({2, 3}, rng);
    EXPECT_LT(oracle::gradient_check({nz}, [](auto& v) { return oracle::weighted_sum(relu(v[0]), 6); }), kTol);
  }
}

TEST(TensorGrad, ScalarBroadcast) {
  std::mt19937_64 rng(2);
  Tensor a = oracle::random_tensor({3, 2}, rng), s = oracle::random_tensor({}, rng);
  EXPECT_LT(oracle::gradient_check({a, s}, [](auto& v) { return oracle::weighted_sum(mul(v[0], v[1]), 7); }), kTol);
  EXPECT_LT(oracle::gradient_check({s, a}, [](auto& v) { return oracle::weighted_sum(add(v[0], v[1]), 8); }), kTol);
}

TEST(TensorGrad, ReductionsMatmulConvPoolUpsample) {
  std::mt19937_64 rng(3);
  Tensor a = oracle::random_tensor({3, 4}, rng), b = oracle::random_tensor({4, 2}, rng);
  EXPECT_LT(oracle::gradient_check({a, b}, [](auto& v) { return oracle::weighted_sum(matmul(v[0], v[1]), 9); }), kTol);
  EXPECT_LT(oracle::gradient_check({a}, [](auto& v) { return sum(v[0]); }), kTol);

  Tensor d = oracle::random_nonzero({3, 4}, rng, 0.1);
  Tensor zero = Tensor::zeros({3, 4});
  EXPECT_LT(oracle::gradient_check({d}, [&](auto& v) { return l1_sum(v[0], zero); }), kTol);

  Tensor x = oracle::random_tensor({1, 2, 6, 6}, rng), w = oracle::random_tensor({3, 2, 3, 3}, rng);
  Tensor bias = oracle::random_tensor({3}, rng);
  EXPECT_LT(oracle::gradient_check({x, w, bias},
                                   [](auto& v) { return oracle::weighted_sum(conv2d(v[0], v[1], v[2], {2, 1}), 10); }),
            kTol);
  EXPECT_LT(oracle::gradient_check({x}, [](auto& v) { return oracle::weighted_sum(avg_pool(v[0], 2), 11); }), kTol);
  EXPECT_LT(oracle::gradient_check({x}, [](auto& v) { return oracle::weighted_sum(upsample(v[0], 2), 12); }), kTol);
}

TEST(Tensor, ConvMatchesDirectLoop) {
  std::mt19937_64 rng(4);
  Tensor x = oracle::random_tensor({1, 2, 5, 7}, rng, -1, 1, false);
  Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng, -1, 1, false);
  Tensor y = conv2d(x, w, {}, {1, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 3, 5, 7}));
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 7; ++j) {
        double s = 0;
        for (int c = 0; c < 2; ++c)
          for (int ki = 0; ki < 3; ++ki)
            for (int kj = 0; kj < 3; ++kj) {
              const int yi = i + ki - 1, xj = j + kj - 1;
              if (yi < 0 || yi >= 5 || xj < 0 || xj >= 7) continue;
              s += w[((o * 2 + c) * 3 + ki) * 3 + kj] * x[(c * 5 + yi) * 7 + xj];
            }
        EXPECT_NEAR(y[(o * 5 + i) * 7 + j], s, 1e-12);
      }
}

TEST(Tensor, L1OfEqualTensorsIsZeroWithZeroSubgradient) {
  Tensor a = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  Tensor b = Tensor::from({3}, {1.0, -2.0, 0.5});
  Tensor loss = l1_sum(a, b);
  EXPECT_EQ(loss.item(), 0.0);
  backward(loss);
  for (double g : a.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Tensor, L1Example) {
  Tensor a = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor b = Tensor::from({2}, {0.0, 4.0});
  Tensor loss = l1_sum(a, b);
  EXPECT_DOUBLE_EQ(loss.item(), 3.0);
  backward(loss);
  EXPECT_EQ(a.grad()[0], 1.0);
  EXPECT_EQ(a.grad()[1], -1.0);
}

TEST(Tensor, LeafGradientsAccumulateAcrossBackwardCalls) {
  Tensor a = Tensor::from({2}, {1.0, 3.0}, true);
  backward(sum(scale(a, 2.0)));
  backward(sum(scale(a, 2.0)));
  EXPECT_EQ(a.grad()[0], 4.0);
  a.zero_grad();
  EXPECT_FALSE(a.has_grad());
}

TEST(Tensor, BackwardIsLinearInTheLoss) {
  std::mt19937_64 rng(5);
  Tensor x = oracle::random_tensor({4}, rng);
  auto f = [&](const Tensor& t) { return sum(tanh(mul(t, t))); };
  auto g = [&](const Tensor& t) { return oracle::weighted_sum(tanh(t), 3); };
  backward(f(x));
  std::vector<double> gf(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(g(x));
  std::vector<double> gg(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(add(scale(f(x), 2.0), scale(g(x), -0.5)));
  for (std::size_t i = 0; i < gf.size(); ++i) EXPECT_NEAR(x.grad()[i], 2.0 * gf[i] - 0.5 * gg[i], 1e-12);
}

TEST(Tensor, SharedSubgraphGradientsSum) {
  Tensor a = Tensor::from({1}, {3.0}, true);
  Tensor b = mul(a, a);
  backward(sum(add(b, b)));  // d(2a^2)/da = 4a
  EXPECT_DOUBLE_EQ(a.grad()[0], 12.0);
}

TEST(Tensor, Errors) {
  Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({3, 2});
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(backward(a), ContractError);
  EXPECT_THROW(a.reshape({5}), ShapeError);
  EXPECT_THROW(avg_pool(Tensor::zeros({1, 1, 3, 3}), 2), ShapeError);
}

TEST(Tensor, NoGradWithoutRequiresGrad) {
  Tensor a = Tensor::from({2}, {1.0, 2.0});
  backward(sum(a));
  EXPECT_FALSE(a.has_grad());
  EXPECT_TRUE(a.grad().empty());
}

}  // namespace
