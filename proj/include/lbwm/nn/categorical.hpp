#pragma once

#include <vector>

#include "lbwm/nn/tape.hpp"
#include "lbwm/rng.hpp"

namespace lbwm::nn {

// p = (1 - mix) * softmax(logits) + mix / K, per row.
Var unimix_probs(Var logits, double mix);
Matrix unimix_probs(const Matrix& logits, double mix);

// One sampled category per row, by inverse CDF.
Matrix sample_onehot(Rng& rng, const Matrix& probs);
// Row-wise argmax as one-hot (lowest index on ties).
Matrix argmax_onehot(const Matrix& probs);
std::vector<int> onehot_indices(const Matrix& onehot);
Matrix indices_onehot(const std::vector<int>& indices, Index classes);

// Draws one-hot samples, optionally recording them so that a later pass can
// replay the identical samples (finite-difference checks).
class OneHotSampler {
 public:
  explicit OneHotSampler(Rng& rng) : rng_(&rng) {}
  static OneHotSampler replaying(const std::vector<Matrix>& recorded);
  // Returns the probabilities themselves, so a straight-through path becomes
  // an exact derivative (gradient checks).
  static OneHotSampler passthrough();

  Matrix draw(const Matrix& probs);
  void record_into(std::vector<Matrix>* sink) { sink_ = sink; }

 private:
  OneHotSampler() = default;
  Rng* rng_ = nullptr;
  std::vector<Matrix>* sink_ = nullptr;
  const std::vector<Matrix>* replay_ = nullptr;
  std::size_t cursor_ = 0;
  bool passthrough_ = false;
};

// Row-wise -sum p log p and sum p (log p - log q): RxC -> Rx1.
Var entropy_rows(Var probs);
Var kl_rows(Var p, Var q);

}  // namespace lbwm::nn
