#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbwm/a2c.hpp"
#include "lbwm/agent.hpp"
#include "lbwm/heuristics.hpp"
#include "lbwm/sim_env.hpp"
#include "lbwm/wm.hpp"
#include "lbwm/workload.hpp"

namespace lbwm::harness {

// Bad configuration (CLI exit code 1).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Fidelity { Desk, Paper };

inline constexpr std::size_t kDeskReplayCapacity = 100000;
inline constexpr std::size_t kPaperReplayCapacity = 5000000;

// How training workloads are chosen per episode.
struct Schedule {
  enum class Kind { Sampled, Alternating, Fixed };
  Kind kind = Kind::Sampled;
  // Alternating: cycle through `phases`, `phase_length` episodes each.
  // Fixed: always phases[0].
  int phase_length = 50;
  std::vector<workload::Difficulty> phases{workload::Difficulty::Easy, workload::Difficulty::Hard};

  // Workload for a given training episode, or nullopt for sampled params.
  std::optional<workload::Difficulty> difficulty_at(int episode) const;
};

struct RunConfig {
  std::string agent = "a2c";  // a2c, wm, heuristic:<random|rr|jsq|lwl|sed>
  int episodes = 1000;
  sim::EnvConfig env;
  workload::ParamRanges ranges;
  Schedule schedule;
  int eval_seeds = 5;
  std::size_t replay_capacity = kDeskReplayCapacity;
  Fidelity fidelity = Fidelity::Desk;
  std::string out_dir = "runs/run";
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: final checkpoint only
  bool log_wall_time = true;  // false writes wall_ms = 0 for byte-stable logs
  bool parallel_eval = false;
  a2c::A2cConfig a2c;
  wm::WmConfig wm;

  void validate() const;
};

// Reference hyperparameters; Paper also restores the full replay capacity.
void apply_fidelity(RunConfig& config, Fidelity fidelity);

std::string_view to_string(Fidelity f);
Fidelity parse_fidelity(std::string_view s);

nlohmann::json to_json(const RunConfig& config);
// Starts from `base` and overrides the keys present; unknown keys throw ConfigError.
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::string& path);

std::unique_ptr<Agent> make_agent(const RunConfig& config);

}  // namespace lbwm::harness
