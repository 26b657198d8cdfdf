#pragma once

#include <string>
#include <vector>

#include "lbwm/nn/param_store.hpp"
#include "lbwm/nn/tape.hpp"
#include "lbwm/rng.hpp"

namespace lbwm::nn {

enum class Activation { None, Relu, Silu, Tanh };

Var activate(Var x, Activation act);

// Uniform Glorot init, or all zeros.
Matrix glorot(Rng& rng, Index in, Index out);

// y = x W + b with W: in x out, b: 1 x out. Holds only parameter names, so a
// copied ParamStore can be driven by the same layer description.
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& prefix, Index in, Index out, Rng& rng, bool zero_init = false);

  Var operator()(Tape& t, Var x) const;
  Index in() const { return in_; }
  Index out() const { return out_; }
  const std::string& weight_name() const { return w_; }
  const std::string& bias_name() const { return b_; }

 private:
  std::string w_, b_;
  Index in_ = 0, out_ = 0;
};

// Hidden layers with `act`, linear output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& prefix, Index in, const std::vector<Index>& hidden, Index out,
      Activation act, Rng& rng, bool zero_output = false);

  Var operator()(Tape& t, Var x) const;
  Index out() const { return layers_.empty() ? 0 : layers_.back().out(); }

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::Silu;
};

// r = s(W_r[x,h]+b_r); u = s(W_u[x,h]+b_u); c = act(W_h[x, r*h]+b_h), act = tanh by default;
// h' = (1-u)*h + u*c
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParamStore& store, const std::string& prefix, Index input_size, Index hidden_size, Rng& rng,
          Activation candidate = Activation::Tanh);

  Var operator()(Tape& t, Var h_prev, Var x) const;
  Index input_size() const { return input_; }
  Index hidden_size() const { return hidden_; }

 private:
  Linear reset_, update_, cand_;
  Index input_ = 0, hidden_ = 0;
  Activation candidate_ = Activation::Tanh;
};

}  // namespace lbwm::nn
