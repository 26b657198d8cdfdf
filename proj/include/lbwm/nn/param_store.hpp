#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lbwm/nn/tensor.hpp"

namespace lbwm::nn {

// Named parameter arrays, each paired with a gradient slot of the same shape.
class ParamStore {
 public:
  struct Entry {
    Matrix value;
    Matrix grad;
  };

  Entry& add(const std::string& name, Matrix init);
  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  void zero_grad();
  // Names under `prefix` (all names when empty), in sorted order.
  std::vector<std::string> names(const std::string& prefix = "") const;
  std::size_t num_scalars(const std::string& prefix = "") const;

  TensorMap values() const;
  // Replaces values; the name set and every shape must match exactly.
  void load_values(const TensorMap& values);

  // FNV-1a over names, shapes and raw value bytes.
  std::uint64_t checksum() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::string, Entry> entries_;
};

bool has_prefix(const std::string& name, const std::string& prefix);

}  // namespace lbwm::nn
