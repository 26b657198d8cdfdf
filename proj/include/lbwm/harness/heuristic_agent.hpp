#pragma once

#include <vector>

#include "lbwm/agent.hpp"
#include "lbwm/heuristics.hpp"

namespace lbwm::harness {

// Fixed dispatch rule behind the Agent interface; has no parameters.
class HeuristicAgent final : public Agent {
 public:
  HeuristicAgent(heuristics::HeuristicKind kind, std::vector<double> rates) : kind_(kind), rates_(std::move(rates)) {}

  std::string kind() const override { return "heuristic:" + std::string(heuristics::to_string(kind_)); }
  int num_actions() const override { return static_cast<int>(rates_.size()); }
  void begin_episode(Mode) override { memory_ = {}; }
  int act(const sim::Observation& obs, Mode, Rng& rng) override {
    return heuristics::decide(kind_, obs, rates_, memory_, rng);
  }
  void observe(const sim::Observation&, int, double, const sim::Observation&, bool, Mode) override {}
  std::unique_ptr<Agent> clone() const override { return std::make_unique<HeuristicAgent>(*this); }
  std::uint64_t param_checksum() const override { return 0; }
  bool wants_both_obs_modes() const override { return true; }
  void save_state(nn::BinaryWriter&) const override {}
  void load_state(nn::BinaryReader&) override {}

  heuristics::HeuristicKind heuristic() const { return kind_; }

 private:
  heuristics::HeuristicKind kind_;
  std::vector<double> rates_;
  heuristics::HeuristicMemory memory_;
};

}  // namespace lbwm::harness
