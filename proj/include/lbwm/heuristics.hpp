#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>

#include "lbwm/rng.hpp"
#include "lbwm/sim_env.hpp"

namespace lbwm::heuristics {

enum class HeuristicKind { Random, RoundRobin, JoinShortestQueue, LeastWorkLeft, ShortestExpectedDelay };

std::string_view to_string(HeuristicKind k);
// Accepts the CLI short names: random, rr, jsq, lwl, sed.
std::optional<HeuristicKind> parse_heuristic(std::string_view name);

class ModeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct HeuristicMemory {
  int last = -1;  // RoundRobin: index of the previous assignment
};

// Dispatch decision for one arrival. Ties go to the lowest index.
int decide(HeuristicKind kind, const sim::Observation& obs, std::span<const double> rates, HeuristicMemory& memory,
           Rng& rng);

}  // namespace lbwm::heuristics
