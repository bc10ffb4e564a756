#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "prime/embedder.hpp"

using namespace prime;

namespace {

TEST(Sim, Examples) {
  const std::vector<double> a{1, 0}, b{0, 1}, c{2, 0}, d{-1, 0};
  EXPECT_DOUBLE_EQ(sim(a, b), 0.0);
  EXPECT_DOUBLE_EQ(sim(a, c), 1.0);
  EXPECT_DOUBLE_EQ(sim(a, d), -1.0);
  EXPECT_THROW(sim(a, std::vector<double>{0, 0}), UndefinedSimilarityError);
  EXPECT_THROW(sim(a, std::vector<double>{1, 0, 0}), ShapeError);
}

TEST(Sim, SymmetricScaleInvariantAndBounded) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> k(0.01, 100);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(16), b(16);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    const double s = sim(a, b);
    EXPECT_DOUBLE_EQ(s, sim(b, a));
    EXPECT_LE(std::abs(s), 1.0);
    std::vector<double> scaled = a;
    const double factor = k(rng);
    for (auto& v : scaled) v *= factor;
    EXPECT_NEAR(sim(scaled, b), s, 1e-12);
    EXPECT_NEAR(s, oracle::cosine(a, b), 1e-12);
  }
}

TEST(Embedder, UnitNormAndDeterministic) {
  std::mt19937_64 rng(2);
  const Embedder e1, e2;
  for (int i = 0; i < 5; ++i) {
    const Frame f = oracle::random_frame(rng, 64, 64);
    const auto a = e1.embed(f), b = e2.embed(f);
    double norm = 0;
    for (double v : a.values) norm += v * v;
    EXPECT_NEAR(norm, 1.0, 1e-12);
    EXPECT_TRUE(a.unit_norm);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.values.size(), 64u);
  }
}

TEST(Embedder, SelfSimilarityIsOne) {
  std::mt19937_64 rng(3);
  const Embedder e;
  const Frame f = oracle::random_frame(rng, 32, 32);
  EXPECT_NEAR(sim(e.embed(f), e.embed(f)), 1.0, 1e-12);
}

TEST(Embedder, DifferentSeedsGiveDifferentEmbeddings) {
  std::mt19937_64 rng(4);
  const Frame f = oracle::random_frame(rng, 32, 32);
  EmbedderConfig c;
  c.seed = 7;
  EXPECT_NE(Embedder().embed(f).values, Embedder(c).embed(f).values);
}

TEST(Embedder, RejectsOffGridFrames) { EXPECT_THROW(Embedder().embed(Frame(12, 16)), ShapeError); }

}  // namespace
