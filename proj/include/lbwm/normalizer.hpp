#pragma once

#include <vector>

#include "lbwm/nn/serialize.hpp"

namespace lbwm {

// Per-dimension running mean/variance (Welford), clipped output.
class RunningNormalizer {
 public:
  explicit RunningNormalizer(std::size_t dim = 0, double clip = 10.0) : mean_(dim, 0.0), m2_(dim, 0.0), clip_(clip) {}

  void update(const std::vector<double>& x);
  std::vector<double> normalize(const std::vector<double>& x) const;

  double count() const { return count_; }
  const std::vector<double>& mean() const { return mean_; }
  std::vector<double> stddev() const;

  void save(nn::BinaryWriter& w) const;
  void load(nn::BinaryReader& r);

 private:
  double count_ = 0.0;
  std::vector<double> mean_;
  std::vector<double> m2_;
  double clip_;
};

}  // namespace lbwm
