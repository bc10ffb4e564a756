#pragma once

// Per-frame target choice: the queue image least similar to the frame and,
// after the first frame, to the previous frame's target as well.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "prime/embedder.hpp"
#include "prime/video.hpp"

namespace prime {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TargetQueue {
  std::vector<Frame> images;
  std::vector<EmbeddingVector> embeddings;  // embeddings[j] == embed(images[j])

  static TargetQueue build(std::vector<Frame> images, const Embedder& embedder) {
    if (images.empty()) throw ConfigError("target queue: no images");
    TargetQueue q;
    q.embeddings.reserve(images.size());
    for (const auto& img : images) q.embeddings.push_back(embedder.embed(img));
    q.images = std::move(images);
    return q;
  }

  std::size_t size() const { return images.size(); }
};

struct TargetChoice {
  std::size_t index = 0;
  double score = 0.0;
  std::size_t frame_index = 0;
};

inline double score(const EmbeddingVector& frame_emb, std::size_t candidate, const std::optional<TargetChoice>& prev,
                    const TargetQueue& q) {
  if (candidate >= q.size()) {
    throw std::out_of_range("score: candidate " + std::to_string(candidate) + " outside queue of " +
                            std::to_string(q.size()));
  }
  double s = sim(frame_emb, q.embeddings[candidate]);
  if (prev) s += sim(q.embeddings.at(prev->index), q.embeddings[candidate]);
  return s;
}

// Argmin over the whole queue; ties go to the lowest index.
inline TargetChoice select_embedded(const EmbeddingVector& frame_emb, const std::optional<TargetChoice>& prev,
                                    const TargetQueue& q) {
  if (q.size() == 0) throw ConfigError("select: target queue is empty");
  TargetChoice best{0, score(frame_emb, 0, prev, q), prev ? prev->frame_index + 1 : 0};
  for (std::size_t j = 1; j < q.size(); ++j) {
    const double s = score(frame_emb, j, prev, q);
    if (s < best.score) {
      best.index = j;
      best.score = s;
    }
  }
  return best;
}

inline TargetChoice select(const Frame& frame, const std::optional<TargetChoice>& prev, const TargetQueue& q,
                           const Embedder& embedder) {
  if (q.size() == 0) throw ConfigError("select: target queue is empty");
  return select_embedded(embedder.embed(frame), prev, q);
}

}  // namespace prime
