#include "lbwm/heuristics.hpp"

#include <string>

namespace lbwm::heuristics {

std::string_view to_string(HeuristicKind k) {
  switch (k) {
    case HeuristicKind::Random: return "random";
    case HeuristicKind::RoundRobin: return "rr";
    case HeuristicKind::JoinShortestQueue: return "jsq";
    case HeuristicKind::LeastWorkLeft: return "lwl";
    case HeuristicKind::ShortestExpectedDelay: return "sed";
  }
  return "unknown";
}

std::optional<HeuristicKind> parse_heuristic(std::string_view name) {
  if (name == "random") return HeuristicKind::Random;
  if (name == "rr" || name == "roundrobin") return HeuristicKind::RoundRobin;
  if (name == "jsq") return HeuristicKind::JoinShortestQueue;
  if (name == "lwl") return HeuristicKind::LeastWorkLeft;
  if (name == "sed") return HeuristicKind::ShortestExpectedDelay;
  return std::nullopt;
}

namespace {

template <typename Score>
int argmin(std::size_t k, Score score) {
  int best = 0;
  double best_value = score(0);
  for (std::size_t i = 1; i < k; ++i) {
    const double v = score(i);
    if (v < best_value) {
      best_value = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

const std::vector<double>& require(const sim::Observation& obs, sim::ObsMode mode, HeuristicKind kind) {
  const auto* loads = obs.loads_in(mode);
  if (loads == nullptr) {
    throw ModeMismatch(std::string(to_string(kind)) + " needs " + std::string(sim::to_string(mode)) +
                       "-mode loads but the observation carries only " + std::string(sim::to_string(obs.mode)));
  }
  return *loads;
}

}  // namespace

int decide(HeuristicKind kind, const sim::Observation& obs, std::span<const double> rates, HeuristicMemory& memory,
           Rng& rng) {
  const std::size_t k = obs.server_loads.size();
  if (k == 0) throw std::invalid_argument("decide: observation has no servers");
  switch (kind) {
    case HeuristicKind::Random:
      return static_cast<int>(rng.below(k));
    case HeuristicKind::RoundRobin:
      memory.last = static_cast<int>((static_cast<std::size_t>(memory.last + 1)) % k);
      return memory.last;
    case HeuristicKind::JoinShortestQueue: {
      const auto& counts = require(obs, sim::ObsMode::Count, kind);
      return argmin(k, [&](std::size_t i) { return counts[i]; });
    }
    case HeuristicKind::LeastWorkLeft: {
      const auto& work = require(obs, sim::ObsMode::Work, kind);
      return argmin(k, [&](std::size_t i) { return work[i]; });
    }
    case HeuristicKind::ShortestExpectedDelay: {
      if (rates.size() != k)
        throw std::invalid_argument("decide: SED needs " + std::to_string(k) + " rates, got " +
                                    std::to_string(rates.size()));
      // Expected completion delay of the incoming job: (queued + own work) / rate.
      if (const auto* work = obs.loads_in(sim::ObsMode::Work)) {
        return argmin(k, [&](std::size_t i) { return ((*work)[i] + obs.job_size) / rates[i]; });
      }
      const auto& counts = require(obs, sim::ObsMode::Count, kind);
      return argmin(k, [&](std::size_t i) { return (counts[i] + 1.0) / rates[i]; });
    }
  }
  throw std::invalid_argument("decide: unknown heuristic");
}

}  // namespace lbwm::heuristics
