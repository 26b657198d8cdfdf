#include "lbwm/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace lbwm::nn {

Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::None: return x;
    case Activation::Relu: return relu(x);
    case Activation::Silu: return silu(x);
    case Activation::Tanh: return tanh(x);
  }
  return x;
}

Matrix glorot(Rng& rng, Index in, Index out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(in, out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  return w;
}

Linear::Linear(ParamStore& store, const std::string& prefix, Index in, Index out, Rng& rng, bool zero_init)
    : w_(prefix + "/w"), b_(prefix + "/b"), in_(in), out_(out) {
  store.add(w_, zero_init ? Matrix::Zero(in, out) : glorot(rng, in, out));
  store.add(b_, Matrix::Zero(1, out));
}

Var Linear::operator()(Tape& t, Var x) const {
  if (x.cols() != in_)
    throw std::invalid_argument("Linear " + w_ + ": expected " + std::to_string(in_) + " input columns, got " +
                                shape_str(x.value()));
  return affine(x, t.param(w_), t.param(b_));
}

Mlp::Mlp(ParamStore& store, const std::string& prefix, Index in, const std::vector<Index>& hidden, Index out,
         Activation act, Rng& rng, bool zero_output)
    : act_(act) {
  Index prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers_.emplace_back(store, prefix + "/h" + std::to_string(i), prev, hidden[i], rng);
    prev = hidden[i];
  }
  layers_.emplace_back(store, prefix + "/out", prev, out, rng, zero_output);
}

Var Mlp::operator()(Tape& t, Var x) const {
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) x = activate(layers_[i](t, x), act_);
  return layers_.back()(t, x);
}

GruCell::GruCell(ParamStore& store, const std::string& prefix, Index input_size, Index hidden_size, Rng& rng,
                 Activation candidate)
    : reset_(store, prefix + "/reset", input_size + hidden_size, hidden_size, rng),
      update_(store, prefix + "/update", input_size + hidden_size, hidden_size, rng),
      cand_(store, prefix + "/cand", input_size + hidden_size, hidden_size, rng),
      input_(input_size),
      hidden_(hidden_size),
      candidate_(candidate) {}

Var GruCell::operator()(Tape& t, Var h_prev, Var x) const {
  if (h_prev.cols() != hidden_ || x.cols() != input_ || h_prev.rows() != x.rows())
    throw std::invalid_argument("GruCell: expected h " + std::to_string(hidden_) + " cols and x " +
                                std::to_string(input_) + " cols, got h " + shape_str(h_prev.value()) + ", x " +
                                shape_str(x.value()));
  Var xh = concat_cols({x, h_prev});
  Var r = sigmoid(reset_(t, xh));
  Var u = sigmoid(update_(t, xh));
  Var c = activate(cand_(t, concat_cols({x, mul(r, h_prev)})), candidate_);
  return add(h_prev, mul(u, sub(c, h_prev)));
}

}  // namespace lbwm::nn
