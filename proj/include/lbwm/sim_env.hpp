#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "lbwm/rng.hpp"
#include "lbwm/workload.hpp"

namespace lbwm::sim {

enum class ObsMode { Work, Count };

std::string_view to_string(ObsMode m);
std::optional<ObsMode> parse_obs_mode(std::string_view s);

struct EnvConfig {
  int num_servers = 10;
  double rate_min = 0.15;
  double rate_max = 1.05;
  workload::WorkloadParams workload{};
  int jobs_per_episode = 1000;
  bool drain_penalty = true;
  ObsMode obs_mode = ObsMode::Work;
  double reward_scale = 1.0;
  // Also report the loads of the other observation mode (heuristic baselines).
  bool expose_both_modes = false;

  void validate() const;
  // rate_i = rate_min + i*(rate_max-rate_min)/(k-1); k == 1 uses rate_min.
  std::vector<double> service_rates() const;
};

struct Job {
  std::int64_t id = 0;
  double size = 0.0;
  double arrival_time = 0.0;
  std::optional<int> assigned_server;
  std::optional<double> completion_time;
};

struct Observation {
  double job_size = 0.0;
  std::vector<double> server_loads;
  ObsMode mode = ObsMode::Work;
  // Loads in the other mode; empty unless the env exposes both.
  std::vector<double> alt_loads;

  // (j, s_1, ..., s_k)
  std::vector<double> flatten() const;
  // Loads measured in `m`, or nullopt when that mode is unavailable.
  const std::vector<double>* loads_in(ObsMode m) const;
  std::size_t num_servers() const { return server_loads.size(); }
};

struct Completion {
  std::int64_t job_id;
  int server;
  double time;
};

struct StepInfo {
  double t_prev = 0.0;
  double t_now = 0.0;
  std::vector<Completion> completed;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct Arrival {
  double time;
  double size;
};

struct ServerStats {
  double rate = 0.0;
  double completed_work = 0.0;
  double busy_time = 0.0;
  std::int64_t completed_jobs = 0;
};

// k heterogeneous FIFO servers, one decision per job arrival.
class Env {
 public:
  explicit Env(EnvConfig config);

  Observation reset(std::uint64_t seed);
  // Replays a fixed arrival list instead of sampling; the episode length is
  // arrivals.size(). Arrival times must be non-decreasing and sizes >= 0.
  Observation reset_scripted(std::vector<Arrival> arrivals);

  StepResult step(int action);

  Observation observe(ObsMode mode) const;

  const EnvConfig& config() const { return config_; }
  const std::vector<double>& rates() const { return rates_; }
  const std::vector<Job>& jobs() const { return jobs_; }
  const std::vector<ServerStats>& server_stats() const { return stats_; }
  double clock() const { return clock_; }
  bool done() const { return done_; }
  std::int64_t jobs_emitted() const { return jobs_emitted_; }
  std::int64_t jobs_completed() const { return jobs_completed_; }
  int episode_length() const { return episode_length_; }

  // Newline-delimited JSON event trace; nullptr disables.
  void set_trace(std::ostream* out) { trace_ = out; }

 private:
  struct Server {
    std::deque<std::int64_t> queue;  // job ids, head is in service
    double head_remaining = 0.0;
    double waiting_work = 0.0;       // sizes of queued jobs behind the head
  };

  void clear_state();
  void emit_job(double arrival_time, double size);
  // Processes all servers over (t_prev, t_end]; t_end may be +inf (drain).
  // Returns the reward contribution (unscaled time-in-system) and the time
  // the interval actually ended at.
  double advance(double t_prev, double t_end, double& t_reached, std::vector<Completion>& completed);
  Observation make_observation(double job_size) const;
  void trace_event(std::string_view event, double t, std::int64_t job_id, std::optional<int> server,
                   double size) const;

  EnvConfig config_;
  std::vector<double> rates_;
  std::vector<Server> servers_;
  std::vector<ServerStats> stats_;
  std::vector<Job> jobs_;
  Rng rng_;
  std::optional<std::vector<Arrival>> script_;
  double clock_ = 0.0;
  std::optional<std::int64_t> pending_;
  std::int64_t jobs_emitted_ = 0;
  std::int64_t jobs_completed_ = 0;
  int episode_length_ = 0;
  bool done_ = true;
  std::ostream* trace_ = nullptr;
};

// rho = (E[size] / arrival_interval) / sum(rates), E[size] = a*x_m/(a-1).
double offered_load(const EnvConfig& config);

}  // namespace lbwm::sim
