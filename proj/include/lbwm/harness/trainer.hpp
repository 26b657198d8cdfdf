#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lbwm/agent.hpp"
#include "lbwm/harness/run_config.hpp"

namespace lbwm::harness {

enum class Phase { Train, Eval };
std::string_view to_string(Phase p);

struct EpisodeRecord {
  int episode = 0;
  Phase phase = Phase::Train;
  std::string difficulty = "sampled";  // easy, medium, hard or sampled
  workload::WorkloadParams params;
  double cum_reward = 0.0;
  double mean_completion_time = 0.0;
  int steps = 0;
  double wall_ms = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const EpisodeRecord&) const = default;
};

struct Transition {
  sim::Observation obs;
  int action = 0;
  double reward = 0.0;
  sim::Observation next_obs;
  bool done = false;
};

struct EpisodeResult {
  std::vector<Transition> trajectory;  // filled when requested
  EpisodeRecord record;
};

// Runs one full episode. Learning agents update inside observe() in Train mode.
EpisodeResult collect_episode(const sim::EnvConfig& env, Agent& agent, const workload::WorkloadParams& params,
                              std::uint64_t seed, Mode mode, bool keep_trajectory = false);

// Seed of evaluation episode j on a difficulty after training episode `episode`.
// Depends only on (run seed, difficulty, episode, j), so every agent sees the same workloads.
std::uint64_t eval_seed(std::uint64_t run_seed, workload::Difficulty d, int episode, int j);

// One Eval-mode episode per (difficulty, seed) on a snapshot of the agent, in
// (difficulty, seed) order. `episode` labels the records.
std::vector<EpisodeRecord> evaluate(const Agent& agent, const sim::EnvConfig& env, std::uint64_t run_seed,
                                    int seeds, int episode, bool parallel = false,
                                    const std::vector<workload::Difficulty>& difficulties =
                                        {workload::kAllDifficulties.begin(), workload::kAllDifficulties.end()});

inline constexpr const char* kCsvHeader =
    "episode,phase,difficulty,arrival_interval,pareto_shape,pareto_scale,cum_reward,mean_completion_time,steps,"
    "wall_ms,seed";
std::string format_number(double v);
std::string csv_row(const EpisodeRecord& r);
// Parses a log written by csv_row; throws on a missing or reordered header.
std::vector<EpisodeRecord> read_csv(std::istream& in);
std::vector<EpisodeRecord> read_csv_file(const std::string& path);

struct ForgettingEntry {
  double peak = 0.0;
  double final = 0.0;
  double forgetting = 0.0;  // peak - final
  double auc = 0.0;         // mean eval reward over the history
  int episodes = 0;
};
using ForgettingReport = std::map<std::string, ForgettingEntry>;  // keyed by difficulty

ForgettingEntry forgetting_metric(const std::vector<double>& history);
// Mean eval reward per (difficulty, episode) from log records.
std::map<std::string, std::vector<double>> eval_history(const std::vector<EpisodeRecord>& records);
ForgettingReport forgetting_report(const std::vector<EpisodeRecord>& records);
nlohmann::json to_json(const ForgettingReport& report);

// ---- checkpoints ----------------------------------------------------------

class VersionMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  std::unique_ptr<Agent> agent;
  int next_episode = 0;
};

std::string checkpoint_bytes(const Agent& agent, const RunConfig& config, int next_episode);
Checkpoint checkpoint_from_bytes(const std::string& bytes);
void checkpoint_save(const Agent& agent, const RunConfig& config, int next_episode, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);

// ---- training ---------------------------------------------------------------

struct TrainSummary {
  std::string run_dir;
  int episodes_run = 0;
  ForgettingReport forgetting;
};

struct TrainOptions {
  std::optional<std::string> resume;  // checkpoint path
  // Called after each episode with the train record and its eval records.
  std::function<void(const EpisodeRecord&, const std::vector<EpisodeRecord>&)> on_episode;
  std::ostream* log = nullptr;  // progress lines
};

// Writes <out_dir>/config.json, episodes.csv, checkpoints and forgetting.json.
TrainSummary train(const RunConfig& config, const TrainOptions& options = {});

// Workload of a training episode under the config's schedule.
std::pair<workload::WorkloadParams, std::string> train_workload(const RunConfig& config, int episode);
std::uint64_t train_seed(std::uint64_t run_seed, int episode);

}  // namespace lbwm::harness
