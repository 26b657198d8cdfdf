#include "lbwm/normalizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lbwm {

void RunningNormalizer::update(const std::vector<double>& x) {
  if (x.size() != mean_.size())
    throw std::invalid_argument("RunningNormalizer: dimension " + std::to_string(x.size()) + " != " +
                                std::to_string(mean_.size()));
  count_ += 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean_[i];
    mean_[i] += d / count_;
    m2_[i] += d * (x[i] - mean_[i]);
  }
}

std::vector<double> RunningNormalizer::stddev() const {
  std::vector<double> s(mean_.size(), 1.0);
  if (count_ < 2.0) return s;
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sqrt(m2_[i] / count_ + 1e-8);
  return s;
}

std::vector<double> RunningNormalizer::normalize(const std::vector<double>& x) const {
  if (x.size() != mean_.size())
    throw std::invalid_argument("RunningNormalizer: dimension " + std::to_string(x.size()) + " != " +
                                std::to_string(mean_.size()));
  const std::vector<double> sd = stddev();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double centered = count_ < 2.0 ? x[i] : (x[i] - mean_[i]) / sd[i];
    out[i] = std::clamp(centered, -clip_, clip_);
  }
  return out;
}

void RunningNormalizer::save(nn::BinaryWriter& w) const {
  w.write_f64(count_);
  w.write_f64(clip_);
  w.write_u64(mean_.size());
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    w.write_f64(mean_[i]);
    w.write_f64(m2_[i]);
  }
}

void RunningNormalizer::load(nn::BinaryReader& r) {
  count_ = r.read_f64();
  clip_ = r.read_f64();
  const std::uint64_t n = r.read_u64();
  if (n != mean_.size() && !mean_.empty())
    throw nn::CorruptData("RunningNormalizer: stored dimension " + std::to_string(n) + " != " +
                          std::to_string(mean_.size()));
  mean_.assign(n, 0.0);
  m2_.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    mean_[i] = r.read_f64();
    m2_[i] = r.read_f64();
  }
}

}  // namespace lbwm
