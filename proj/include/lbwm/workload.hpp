#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "lbwm/rng.hpp"

namespace lbwm::workload {

struct WorkloadParams {
  double arrival_interval = 100.0;  // mean inter-arrival time
  double pareto_shape = 1.5;        // tail index alpha
  double pareto_scale = 80.0;       // minimum job size

  void validate() const;
  bool operator==(const WorkloadParams&) const = default;
};

enum class Difficulty { Easy, Medium, Hard };

inline constexpr std::array<Difficulty, 3> kAllDifficulties{Difficulty::Easy, Difficulty::Medium,
                                                           Difficulty::Hard};

std::string_view to_string(Difficulty d);
std::optional<Difficulty> parse_difficulty(std::string_view name);

struct Interval {
  double lo;
  double hi;
};

struct ParamRanges {
  Interval interval{50.0, 100.0};
  Interval shape{1.5, 2.5};
  Interval scale{80.0, 150.0};

  void validate() const;
};

WorkloadParams preset(Difficulty d);

WorkloadParams sample_params(Rng& rng, const ParamRanges& ranges);

// Inverse-CDF transforms, exposed for boundary tests.
double exponential_from_uniform(double u, double mean_interval);
double pareto_from_uniform(double u, double shape, double scale);

double poisson_interarrival(Rng& rng, double mean_interval);
double pareto_size(Rng& rng, double shape, double scale);

}  // namespace lbwm::workload
