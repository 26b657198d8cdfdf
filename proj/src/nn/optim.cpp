#include "lbwm/nn/optim.hpp"

#include <cmath>

namespace lbwm::nn {

namespace {

Matrix& moment(TensorMap& map, const std::string& name, const Matrix& like) {
  auto it = map.find(name);
  if (it == map.end()) it = map.emplace(name, Matrix::Zero(like.rows(), like.cols())).first;
  return it->second;
}

}  // namespace

void OptimizerState::save(BinaryWriter& w) const {
  w.write_i64(step);
  write_tensor_container(w, first);
  write_tensor_container(w, second);
}

OptimizerState OptimizerState::load(BinaryReader& r) {
  OptimizerState s;
  s.step = r.read_i64();
  s.first = read_tensor_container(r);
  s.second = read_tensor_container(r);
  return s;
}

bool OptimizerState::operator==(const OptimizerState& o) const {
  if (step != o.step || first.size() != o.first.size() || second.size() != o.second.size()) return false;
  for (const auto& [k, v] : first) {
    auto it = o.first.find(k);
    if (it == o.first.end() || it->second != v) return false;
  }
  for (const auto& [k, v] : second) {
    auto it = o.second.find(k);
    if (it == o.second.end() || it->second != v) return false;
  }
  return true;
}

void Adam::step(ParamStore& store) {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (auto& [name, e] : store) {
    if (!has_prefix(name, prefix_)) continue;
    Matrix& m = moment(state_.first, name, e.value);
    Matrix& v = moment(state_.second, name, e.value);
    m = config_.beta1 * m + (1.0 - config_.beta1) * e.grad;
    v = config_.beta2 * v + (1.0 - config_.beta2) * e.grad.cwiseProduct(e.grad);
    e.value.array() -= config_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config_.eps);
  }
}

void LaProp::step(ParamStore& store) {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (auto& [name, e] : store) {
    if (!has_prefix(name, prefix_)) continue;
    Matrix& m = moment(state_.first, name, e.value);
    Matrix& v = moment(state_.second, name, e.value);
    v = config_.beta2 * v + (1.0 - config_.beta2) * e.grad.cwiseProduct(e.grad);
    const Matrix normalized = (e.grad.array() / ((v.array() / c2).sqrt() + config_.eps)).matrix();
    m = config_.beta1 * m + (1.0 - config_.beta1) * normalized;
    e.value -= (config_.lr / c1) * m;
  }
}

double global_grad_norm(const ParamStore& store, const std::string& prefix) {
  double sq = 0.0;
  for (const auto& [name, e] : store)
    if (has_prefix(name, prefix)) sq += e.grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(ParamStore& store, const std::string& prefix, double max_norm) {
  const double norm = global_grad_norm(store, prefix);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, e] : store)
      if (has_prefix(name, prefix)) e.grad *= s;
  }
  return norm;
}

Matrix agc_clip(const Matrix& param, const Matrix& grad, double threshold, double eps) {
  const double limit = threshold * std::max(param.norm(), eps);
  const double gnorm = grad.norm();
  if (gnorm > limit) return grad * (limit / gnorm);
  return grad;
}

void agc_clip(ParamStore& store, const std::string& prefix, double threshold, double eps) {
  for (auto& [name, e] : store)
    if (has_prefix(name, prefix)) e.grad = agc_clip(e.value, e.grad, threshold, eps);
}

}  // namespace lbwm::nn
