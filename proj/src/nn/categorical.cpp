#include "lbwm/nn/categorical.hpp"

#include <cmath>
#include <stdexcept>

namespace lbwm::nn {

Var unimix_probs(Var logits, double mix) {
  const double k = static_cast<double>(logits.cols());
  return add_scalar(scale(softmax_rows(logits), 1.0 - mix), mix / k);
}

Matrix unimix_probs(const Matrix& logits, double mix) {
  Tape t(false);
  return unimix_probs(t.constant(logits), mix).value();
}

Matrix sample_onehot(Rng& rng, const Matrix& probs) {
  Matrix out = Matrix::Zero(probs.rows(), probs.cols());
  for (Index r = 0; r < probs.rows(); ++r) {
    const double u = rng.uniform() * probs.row(r).sum();
    double acc = 0.0;
    Index pick = probs.cols() - 1;
    for (Index c = 0; c < probs.cols(); ++c) {
      acc += probs(r, c);
      if (u < acc) {
        pick = c;
        break;
      }
    }
    // Never land on a zero-probability trailing class through rounding.
    while (pick > 0 && probs(r, pick) <= 0.0) --pick;
    out(r, pick) = 1.0;
  }
  return out;
}

Matrix argmax_onehot(const Matrix& probs) {
  Matrix out = Matrix::Zero(probs.rows(), probs.cols());
  for (Index r = 0; r < probs.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < probs.cols(); ++c)
      if (probs(r, c) > probs(r, best)) best = c;
    out(r, best) = 1.0;
  }
  return out;
}

std::vector<int> onehot_indices(const Matrix& onehot) {
  std::vector<int> idx(static_cast<std::size_t>(onehot.rows()));
  for (Index r = 0; r < onehot.rows(); ++r) {
    Index best = 0;
    onehot.row(r).maxCoeff(&best);
    idx[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return idx;
}

Matrix indices_onehot(const std::vector<int>& indices, Index classes) {
  Matrix out = Matrix::Zero(static_cast<Index>(indices.size()), classes);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int i = indices[r];
    if (i >= 0 && i < classes) out(static_cast<Index>(r), i) = 1.0;
  }
  return out;
}

OneHotSampler OneHotSampler::replaying(const std::vector<Matrix>& recorded) {
  OneHotSampler s;
  s.replay_ = &recorded;
  return s;
}

OneHotSampler OneHotSampler::passthrough() {
  OneHotSampler s;
  s.passthrough_ = true;
  return s;
}

Matrix OneHotSampler::draw(const Matrix& probs) {
  Matrix out;
  if (passthrough_) {
    out = probs;
  } else if (replay_ != nullptr) {
    if (cursor_ >= replay_->size()) throw std::logic_error("OneHotSampler: replay exhausted");
    out = (*replay_)[cursor_++];
    if (out.rows() != probs.rows() || out.cols() != probs.cols())
      throw std::logic_error("OneHotSampler: replayed sample shape " + shape_str(out) + " differs from " +
                             shape_str(probs));
  } else {
    out = sample_onehot(*rng_, probs);
  }
  if (sink_ != nullptr) sink_->push_back(out);
  return out;
}

Var entropy_rows(Var probs) { return neg(sum_cols(mul(probs, log(probs)))); }

Var kl_rows(Var p, Var q) { return sum_cols(mul(p, sub(log(p), log(q)))); }

}  // namespace lbwm::nn
