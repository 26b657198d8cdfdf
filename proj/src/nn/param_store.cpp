#include "lbwm/nn/param_store.hpp"

#include <cstring>
#include <stdexcept>

#include "lbwm/nn/serialize.hpp"

namespace lbwm::nn {

bool has_prefix(const std::string& name, const std::string& prefix) {
  return name.compare(0, prefix.size(), prefix) == 0;
}

ParamStore::Entry& ParamStore::add(const std::string& name, Matrix init) {
  if (contains(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  Entry e;
  e.grad = Matrix::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  return entries_.emplace(name, std::move(e)).first->second;
}

ParamStore::Entry& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return it->second;
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) e.grad.setZero();
}

std::vector<std::string> ParamStore::names(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_)
    if (has_prefix(name, prefix)) out.push_back(name);
  return out;
}

std::size_t ParamStore::num_scalars(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_)
    if (has_prefix(name, prefix)) n += static_cast<std::size_t>(e.value.size());
  return n;
}

TensorMap ParamStore::values() const {
  TensorMap out;
  for (const auto& [name, e] : entries_) out.emplace(name, e.value);
  return out;
}

void ParamStore::load_values(const TensorMap& values) {
  if (values.size() != entries_.size())
    throw std::invalid_argument("ParamStore::load_values: expected " + std::to_string(entries_.size()) +
                                " arrays, got " + std::to_string(values.size()));
  for (auto& [name, e] : entries_) {
    auto it = values.find(name);
    if (it == values.end()) throw std::invalid_argument("ParamStore::load_values: missing '" + name + "'");
    if (it->second.rows() != e.value.rows() || it->second.cols() != e.value.cols())
      throw std::invalid_argument("ParamStore::load_values: shape mismatch for '" + name + "': " +
                                  shape_str(e.value) + " vs " + shape_str(it->second));
    e.value = it->second;
  }
}

std::uint64_t ParamStore::checksum() const {
  BinaryWriter w;
  for (const auto& [name, e] : entries_) {
    w.write_string(name);
    w.write_matrix(e.value);
  }
  return fnv1a64(w.bytes());
}

}  // namespace lbwm::nn
