#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "lbwm/nn/serialize.hpp"
#include "lbwm/rng.hpp"
#include "lbwm/sim_env.hpp"

namespace lbwm {

enum class Mode { Train, Eval };

using Diagnostics = std::map<std::string, double>;

// What the harness drives. Learning agents update themselves inside observe()
// when the mode is Train; Eval never changes parameters.
class Agent {
 public:
  virtual ~Agent() = default;

  virtual std::string kind() const = 0;
  virtual int num_actions() const = 0;

  virtual void begin_episode(Mode mode) = 0;
  virtual int act(const sim::Observation& obs, Mode mode, Rng& rng) = 0;
  virtual void observe(const sim::Observation& obs, int action, double reward, const sim::Observation& next_obs,
                       bool done, Mode mode) = 0;

  // Independent copy with the same parameters (evaluation snapshots).
  virtual std::unique_ptr<Agent> clone() const = 0;
  virtual std::uint64_t param_checksum() const = 0;
  virtual Diagnostics last_diagnostics() const { return {}; }
  // Heuristics need both load modes in the observation.
  virtual bool wants_both_obs_modes() const { return false; }

  virtual void save_state(nn::BinaryWriter& w) const = 0;
  virtual void load_state(nn::BinaryReader& r) = 0;
};

}  // namespace lbwm
