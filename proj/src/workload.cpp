#include "lbwm/workload.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lbwm::workload {

void WorkloadParams::validate() const {
  if (!(arrival_interval > 0.0) || !(pareto_shape > 0.0) || !(pareto_scale > 0.0)) {
    throw std::invalid_argument("WorkloadParams: arrival_interval, pareto_shape and pareto_scale must be > 0 (got " +
                                std::to_string(arrival_interval) + ", " + std::to_string(pareto_shape) + ", " +
                                std::to_string(pareto_scale) + ")");
  }
}

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Medium: return "medium";
    case Difficulty::Hard: return "hard";
  }
  return "unknown";
}

std::optional<Difficulty> parse_difficulty(std::string_view name) {
  if (name == "easy") return Difficulty::Easy;
  if (name == "medium") return Difficulty::Medium;
  if (name == "hard") return Difficulty::Hard;
  return std::nullopt;
}

void ParamRanges::validate() const {
  auto check = [](const Interval& r, const char* what) {
    if (!(r.lo <= r.hi)) throw std::invalid_argument(std::string("ParamRanges: ") + what + " has lo > hi");
  };
  check(interval, "interval_range");
  check(shape, "shape_range");
  check(scale, "scale_range");
  if (!(interval.lo > 0.0) || !(shape.lo > 0.0) || !(scale.lo > 0.0))
    throw std::invalid_argument("ParamRanges: lower bounds must be positive");
}

WorkloadParams preset(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return {100.0, 1.5, 80.0};
    case Difficulty::Medium: return {80.0, 2.0, 120.0};
    case Difficulty::Hard: return {50.0, 2.5, 150.0};
  }
  throw std::invalid_argument("preset: unknown difficulty");
}

WorkloadParams sample_params(Rng& rng, const ParamRanges& ranges) {
  WorkloadParams p;
  p.arrival_interval = rng.uniform(ranges.interval.lo, ranges.interval.hi);
  p.pareto_shape = rng.uniform(ranges.shape.lo, ranges.shape.hi);
  p.pareto_scale = rng.uniform(ranges.scale.lo, ranges.scale.hi);
  return p;
}

double exponential_from_uniform(double u, double mean_interval) {
  return -mean_interval * std::log1p(-u);
}

double pareto_from_uniform(double u, double shape, double scale) {
  return scale * std::pow(1.0 - u, -1.0 / shape);
}

double poisson_interarrival(Rng& rng, double mean_interval) {
  return exponential_from_uniform(rng.uniform(), mean_interval);
}

double pareto_size(Rng& rng, double shape, double scale) {
  return pareto_from_uniform(rng.uniform(), shape, scale);
}

}  // namespace lbwm::workload
