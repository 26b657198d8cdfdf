#pragma once

#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

#include "lbwm/nn/param_store.hpp"
#include "lbwm/nn/tensor.hpp"

namespace lbwm::nn {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records one forward pass for a single reverse sweep. With record=false the
// tape only evaluates values (no closures, no gradients).
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  explicit Tape(bool record = true) : record_(record) {}
  explicit Tape(ParamStore& store, bool record = true) : store_(&store), record_(record) {}
  // Evaluation-only tape over a read-only store.
  explicit Tape(const ParamStore& store) : store_(const_cast<ParamStore*>(&store)), record_(false) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Differentiable input whose gradient can be read back with grad().
  Var leaf(Matrix value);
  // Parameter from the bound store; repeated lookups reuse one node.
  Var param(const std::string& name);

  // Reverse sweep from a 1x1 loss; parameter gradients are added to the
  // store's gradient slots. A tape supports exactly one sweep.
  void backward(Var loss);

  const Matrix& grad(Var v) const;
  const Matrix& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.param != nullptr ? n.param->value : n.value;
  }
  // Finite-difference support: stop_gradient outputs can be recorded on one
  // pass and replayed on later passes, so that they stay constant while
  // parameters are perturbed.
  void record_stop_gradients(std::vector<Matrix>* sink) { sg_sink_ = sink; }
  void replay_stop_gradients(const std::vector<Matrix>* values) {
    sg_replay_ = values;
    sg_cursor_ = 0;
  }
  Var frozen(const Matrix& live);

  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }
  ParamStore* store() const { return store_; }

  // Op construction. `parents` decides whether the result needs a gradient.
  Var push(Matrix value, std::initializer_list<Var> parents, Backward back);
  Var push(Matrix value, const std::vector<Var>& parents, Backward back);

  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  const Matrix& node_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward back;
    ParamStore::Entry* param = nullptr;  // value lives in the store
  };

  Var add_node(Node node);

  ParamStore* store_ = nullptr;
  bool record_ = true;
  bool swept_ = false;
  std::deque<Node> nodes_;
  std::unordered_map<const ParamStore::Entry*, int> param_nodes_;
  std::vector<Matrix>* sg_sink_ = nullptr;
  const std::vector<Matrix>* sg_replay_ = nullptr;
  std::size_t sg_cursor_ = 0;
};

// ---- Ops ----------------------------------------------------------------
// Binary elementwise ops broadcast the second operand when it is 1x1, 1xC,
// or Rx1 against an RxC first operand.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var affine(Var x, Var w, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
Var one_minus(Var a);

Var relu(Var a);
Var silu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var softplus(Var a);
Var symlog(Var a);
Var symexp(Var a);
// max(a, lo); gradient is zero where the floor is active.
Var clamp_min(Var a, double lo);

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

Var sum(Var a);
Var mean(Var a);
// Per-row sum: RxC -> Rx1.
Var sum_cols(Var a);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, Index start, Index count);
// Row-major reinterpretation; rows*cols must be preserved.
Var reshape(Var a, Index rows, Index cols);

Var stop_gradient(Var a);
// Forward value is `sample`; the backward pass routes the gradient to `probs`.
Var straight_through(const Matrix& sample, Var probs);

// Plain-value versions used outside tapes.
double symlog(double x);
double symexp(double x);
Matrix symlog(const Matrix& m);
Matrix symexp(const Matrix& m);

}  // namespace lbwm::nn
