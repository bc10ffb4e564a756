#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "prime/target_selector.hpp"

using namespace prime;

namespace {

TargetQueue raw_queue(const std::vector<std::vector<double>>& vecs) {
  TargetQueue q;
  for (const auto& v : vecs) {
    q.images.emplace_back(8, 8);
    q.embeddings.push_back({v, false});
  }
  return q;
}

TEST(TargetSelector, FirstFramePicksLeastSimilar) {
  const auto q = raw_queue({{1, 0}, {0, 1}, {-1, 0}});
  const auto c = select_embedded({{1, 0}, false}, std::nullopt, q);
  EXPECT_EQ(c.index, 2u);
  EXPECT_DOUBLE_EQ(c.score, -1.0);
  EXPECT_EQ(c.frame_index, 0u);
}

TEST(TargetSelector, PreviousTargetTermIncluded) {
  // Frame alone prefers index 1; the previous-target term pushes toward 2.
  const auto q = raw_queue({{1, 0}, {0, -1}, {-1, 0.1}});
  const TargetChoice prev{2, 0.0, 4};
  const auto c = select_embedded({{0, 1}, false}, prev, q);
  const double s1 = oracle::cosine({0, 1}, {0, -1}) + oracle::cosine({-1, 0.1}, {0, -1});
  const double s0 = oracle::cosine({0, 1}, {1, 0}) + oracle::cosine({-1, 0.1}, {1, 0});
  EXPECT_EQ(c.index, s1 < s0 ? 1u : 0u);
  EXPECT_EQ(c.frame_index, 5u);
}

TEST(TargetSelector, TiesGoToLowestIndex) {
  const auto q = raw_queue({{0, 1}, {0, -1}, {0, -1}, {0, 2}});
  EXPECT_EQ(select_embedded({{0, 1}, false}, std::nullopt, q).index, 1u);
}

TEST(TargetSelector, SingleImageQueueAlwaysChosen) {
  const auto q = raw_queue({{3, 4}});
  EXPECT_EQ(select_embedded({{3, 4}, false}, std::nullopt, q).index, 0u);
  EXPECT_EQ(select_embedded({{-3, 4}, false}, TargetChoice{0, 0, 0}, q).index, 0u);
}

TEST(TargetSelector, EmptyQueueRejected) {
  TargetQueue q;
  EXPECT_THROW(select_embedded({{1, 0}, false}, std::nullopt, q), ConfigError);
  EXPECT_THROW(TargetQueue::build({}, Embedder()), ConfigError);
}

TEST(TargetSelector, MatchesBruteForceOnRandomQueues) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t size = 1 + rng() % 50;
    std::vector<std::vector<double>> vecs(size, std::vector<double>(8));
    for (auto& v : vecs)
      for (auto& x : v) x = n(rng);
    if (size > 3) vecs[size - 1] = vecs[1];  // duplicates exercise the tie rule
    std::vector<double> frame(8);
    for (auto& x : frame) x = n(rng);
    const auto q = raw_queue(vecs);
    std::optional<TargetChoice> prev;
    std::optional<std::size_t> prev_idx;
    if (trial % 2) {
      prev = TargetChoice{rng() % size, 0.0, 0};
      prev_idx = prev->index;
    }
    EXPECT_EQ(select_embedded({frame, false}, prev, q).index, oracle::brute_force_target(frame, vecs, prev_idx));
  }
}

TEST(TargetSelector, SelectEmbedsFrameWithEmbedder) {
  std::mt19937_64 rng(12);
  const Embedder e;
  std::vector<Frame> imgs;
  for (int i = 0; i < 6; ++i) imgs.push_back(oracle::random_frame(rng, 16, 16));
  const auto q = TargetQueue::build(imgs, e);
  const Frame f = oracle::random_frame(rng, 16, 16);
  EXPECT_EQ(select(f, std::nullopt, q, e).index, select_embedded(e.embed(f), std::nullopt, q).index);
}

}  // namespace
