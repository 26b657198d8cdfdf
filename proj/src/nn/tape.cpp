#include "lbwm/nn/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace lbwm::nn {

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("Var: null handle");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::invalid_argument("Var::scalar on non-scalar " + shape_str(v));
  return v(0, 0);
}

Var Tape::add_node(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return add_node(std::move(n));
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_;
  return add_node(std::move(n));
}

Var Tape::param(const std::string& name) {
  if (store_ == nullptr) throw std::logic_error("Tape::param: tape is not bound to a ParamStore");
  ParamStore::Entry& e = store_->at(name);
  auto it = param_nodes_.find(&e);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.requires_grad = record_;
  n.param = &e;
  Var v = add_node(std::move(n));
  param_nodes_.emplace(&e, v.id());
  return v;
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, Backward back) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& p : parents) {
      if (p.tape() != this) throw std::invalid_argument("Tape: operand recorded on a different tape");
      if (nodes_[static_cast<std::size_t>(p.id())].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.back = std::move(back);
  }
  return add_node(std::move(n));
}

Var Tape::push(Matrix value, const std::vector<Var>& parents, Backward back) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& p : parents) {
      if (p.tape() != this) throw std::invalid_argument("Tape: operand recorded on a different tape");
      if (nodes_[static_cast<std::size_t>(p.id())].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.back = std::move(back);
  }
  return add_node(std::move(n));
}

void Tape::backward(Var loss) {
  if (!record_) throw std::logic_error("Tape::backward: tape was created with record=false");
  if (swept_) throw std::logic_error("Tape::backward: tape already consumed by a previous backward pass");
  if (loss.tape() != this) throw std::invalid_argument("Tape::backward: loss belongs to another tape");
  const Matrix& lv = loss.value();
  if (lv.size() != 1) throw std::invalid_argument("Tape::backward: loss must be 1x1, got " + shape_str(lv));
  swept_ = true;
  accumulate(loss.id(), Matrix::Ones(1, 1));
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) continue;
    if (n.back) n.back(*this, id);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

const Matrix& Tape::grad(Var v) const {
  static const Matrix empty;
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  return n.grad.size() == 0 ? empty : n.grad;
}

// ---------------------------------------------------------------------------

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("op on a null Var");
  return *a.tape();
}

enum class Bcast { Same, Scalar, Row, Col };

Bcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::Col;
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

Matrix expand(const Matrix& b, Bcast kind, Index rows, Index cols) {
  switch (kind) {
    case Bcast::Same: return b;
    case Bcast::Scalar: return Matrix::Constant(rows, cols, b(0, 0));
    case Bcast::Row: return b.replicate(rows, 1);
    case Bcast::Col: return b.replicate(1, cols);
  }
  return b;
}

Matrix reduce(const Matrix& g, Bcast kind) {
  switch (kind) {
    case Bcast::Same: return g;
    case Bcast::Scalar: return Matrix::Constant(1, 1, g.sum());
    case Bcast::Row: return g.colwise().sum();
    case Bcast::Col: return g.rowwise().sum();
  }
  return g;
}

// Elementwise unary op; `deriv(x, y)` gives dy/dx from input and output.
template <typename F, typename D>
Var unary(Var a, F f, D deriv) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix y = x.unaryExpr(f);
  const int ia = a.id();
  return t.push(std::move(y), {a}, [ia, deriv](Tape& tp, int self) {
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.node_grad(self);
    Matrix d(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) d.data()[i] = g.data()[i] * deriv(x.data()[i], y.data()[i]);
    tp.accumulate(ia, d);
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows())
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(av) + " x " + shape_str(bv));
  Matrix out = av * bv;
  const int ia = a.id(), ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.node_grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Bcast kind = broadcast_kind(av, bv, "add");
  Matrix out = av + expand(bv, kind, av.rows(), av.cols());
  const int ia = a.id(), ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib, kind](Tape& tp, int self) {
    const Matrix& g = tp.node_grad(self);
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, reduce(g, kind));
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Bcast kind = broadcast_kind(av, bv, "sub");
  Matrix out = av - expand(bv, kind, av.rows(), av.cols());
  const int ia = a.id(), ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib, kind](Tape& tp, int self) {
    const Matrix& g = tp.node_grad(self);
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, -reduce(g, kind));
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Bcast kind = broadcast_kind(av, bv, "mul");
  Matrix out = av.cwiseProduct(expand(bv, kind, av.rows(), av.cols()));
  const int ia = a.id(), ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib, kind](Tape& tp, int self) {
    const Matrix& g = tp.node_grad(self);
    const Matrix& av = tp.value(ia);
    const Matrix& bv = tp.value(ib);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(expand(bv, kind, av.rows(), av.cols())));
    if (tp.requires_grad(ib)) tp.accumulate(ib, reduce(g.cwiseProduct(av), kind));
  });
}

Var affine(Var x, Var w, Var b) { return add(matmul(x, w), b); }

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(a.value() * s, {a}, [ia, s](Tape& tp, int self) { tp.accumulate(ia, tp.node_grad(self) * s); });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push((a.value().array() + s).matrix(), {a},
                [ia](Tape& tp, int self) { tp.accumulate(ia, tp.node_grad(self)); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var one_minus(Var a) { return add_scalar(neg(a), 1.0); }

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var silu(Var a) {
  return unary(
      a, [](double x) { return x * sigmoid_scalar(x); },
      [](double x, double) {
        const double s = sigmoid_scalar(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return sigmoid_scalar(x); }, [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return sigmoid_scalar(x); });
}

double symlog(double x) { return std::copysign(std::log1p(std::abs(x)), x); }
double symexp(double x) { return std::copysign(std::expm1(std::abs(x)), x); }
Matrix symlog(const Matrix& m) { return m.unaryExpr([](double x) { return symlog(x); }); }
Matrix symexp(const Matrix& m) { return m.unaryExpr([](double x) { return symexp(x); }); }

Var symlog(Var a) {
  return unary(a, [](double x) { return symlog(x); }, [](double x, double) { return 1.0 / (1.0 + std::abs(x)); });
}

Var symexp(Var a) {
  return unary(a, [](double x) { return symexp(x); }, [](double x, double) { return std::exp(std::abs(x)); });
}

Var clamp_min(Var a, double lo) {
  return unary(a, [lo](double x) { return x > lo ? x : lo; }, [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  const int ia = a.id();
  return t.push(std::move(y), {a}, [ia](Tape& tp, int self) {
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.node_grad(self);
    // dx = y * (g - <g, y>)
    Matrix dot = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct(g - dot.replicate(1, y.cols()));
    tp.accumulate(ia, dx);
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    y.row(r) = (x.row(r).array() - lse).matrix();
  }
  const int ia = a.id();
  return t.push(std::move(y), {a}, [ia](Tape& tp, int self) {
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.node_grad(self);
    // dx = g - softmax * sum(g)
    Matrix gsum = g.rowwise().sum();
    Matrix dx = g - y.array().exp().matrix().cwiseProduct(gsum.replicate(1, y.cols()));
    tp.accumulate(ia, dx);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return t.push(Matrix::Constant(1, 1, a.value().sum()), {a}, [ia, r, c](Tape& tp, int self) {
    tp.accumulate(ia, Matrix::Constant(r, c, tp.node_grad(self)(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean: empty operand");
  return scale(sum(a), 1.0 / n);
}

Var sum_cols(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const Index c = a.cols();
  Matrix out = a.value().rowwise().sum();
  return t.push(std::move(out), {a},
                [ia, c](Tape& tp, int self) { tp.accumulate(ia, tp.node_grad(self).replicate(1, c)); });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Tape& t = tape_of(parts.front());
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows)
      throw std::invalid_argument("concat_cols: row mismatch " + shape_str(parts.front().value()) + " vs " +
                                  shape_str(p.value()));
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return t.push(std::move(out), parts, [ids, offsets](Tape& tp, int self) {
    const Matrix& g = tp.node_grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tp.requires_grad(ids[i])) continue;
      tp.accumulate(ids[i], g.middleCols(offsets[i], tp.value(ids[i]).cols()));
    }
  });
}

Var slice_cols(Var a, Index start, Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols())
    throw std::invalid_argument("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                                ") outside " + shape_str(a.value()));
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  Matrix out = a.value().middleCols(start, count);
  return t.push(std::move(out), {a}, [ia, r, c, start, count](Tape& tp, int self) {
    Matrix g = Matrix::Zero(r, c);
    g.middleCols(start, count) = tp.node_grad(self);
    tp.accumulate(ia, g);
  });
}

Var reshape(Var a, Index rows, Index cols) {
  Tape& t = tape_of(a);
  if (rows * cols != a.value().size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.value()) + " as (" + std::to_string(rows) + "x" +
                                std::to_string(cols) + ")");
  const int ia = a.id();
  const Index r0 = a.rows(), c0 = a.cols();
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return t.push(std::move(out), {a}, [ia, r0, c0](Tape& tp, int self) {
    const Matrix& g = tp.node_grad(self);
    tp.accumulate(ia, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

Var Tape::frozen(const Matrix& live) {
  if (sg_replay_ != nullptr) {
    if (sg_cursor_ >= sg_replay_->size()) throw std::logic_error("stop_gradient replay exhausted");
    const Matrix& v = (*sg_replay_)[sg_cursor_++];
    if (v.rows() != live.rows() || v.cols() != live.cols())
      throw std::logic_error("stop_gradient replay shape " + shape_str(v) + " differs from " + shape_str(live));
    return constant(v);
  }
  if (sg_sink_ != nullptr) sg_sink_->push_back(live);
  return constant(live);
}

Var stop_gradient(Var a) { return tape_of(a).frozen(a.value()); }

Var straight_through(const Matrix& sample, Var probs) {
  Tape& t = tape_of(probs);
  if (sample.rows() != probs.rows() || sample.cols() != probs.cols())
    throw std::invalid_argument("straight_through: shape mismatch " + shape_str(sample) + " vs " +
                                shape_str(probs.value()));
  const int ip = probs.id();
  return t.push(sample, {probs}, [ip](Tape& tp, int self) { tp.accumulate(ip, tp.node_grad(self)); });
}

}  // namespace lbwm::nn
