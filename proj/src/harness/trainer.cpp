#include "lbwm/harness/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "lbwm/nn/serialize.hpp"

namespace lbwm::harness {

namespace fs = std::filesystem;
using workload::Difficulty;

namespace {

constexpr std::uint64_t kAgentStream = 0x61;
constexpr std::uint64_t kEvalStream = 0xe7;
constexpr std::uint64_t kTrainStream = 0x7a;
constexpr std::uint64_t kParamStream = 0x9a;

}  // namespace

std::string_view to_string(Phase p) { return p == Phase::Train ? "train" : "eval"; }

EpisodeResult collect_episode(const sim::EnvConfig& env, Agent& agent, const workload::WorkloadParams& params,
                              std::uint64_t seed, Mode mode, bool keep_trajectory) {
  sim::EnvConfig cfg = env;
  cfg.workload = params;
  if (agent.wants_both_obs_modes()) cfg.expose_both_modes = true;
  if (agent.num_actions() != cfg.num_servers)
    throw std::invalid_argument("collect_episode: agent has " + std::to_string(agent.num_actions()) +
                                " actions but the environment has " + std::to_string(cfg.num_servers) + " servers");
  const auto start = std::chrono::steady_clock::now();
  sim::Env e(cfg);
  sim::Observation obs = e.reset(seed);
  Rng rng(derive_seed(seed, 0, kAgentStream));
  agent.begin_episode(mode);
  EpisodeResult out;
  EpisodeRecord& rec = out.record;
  rec.phase = mode == Mode::Train ? Phase::Train : Phase::Eval;
  rec.params = params;
  rec.seed = seed;
  while (true) {
    const int a = agent.act(obs, mode, rng);
    sim::StepResult res = e.step(a);
    agent.observe(obs, a, res.reward, res.observation, res.done, mode);
    rec.cum_reward += res.reward;
    ++rec.steps;
    if (keep_trajectory) out.trajectory.push_back({obs, a, res.reward, res.observation, res.done});
    if (res.done) break;
    obs = std::move(res.observation);
  }
  double total = 0.0;
  int finished = 0;
  for (const auto& j : e.jobs()) {
    if (!j.completion_time) continue;
    total += *j.completion_time - j.arrival_time;
    ++finished;
  }
  rec.mean_completion_time = finished > 0 ? total / finished : 0.0;
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::uint64_t eval_seed(std::uint64_t run_seed, Difficulty d, int episode, int j) {
  const std::uint64_t per_episode = derive_seed(run_seed, static_cast<std::uint64_t>(episode), kEvalStream);
  return derive_seed(per_episode, static_cast<std::uint64_t>(d) * 1000003ULL + static_cast<std::uint64_t>(j), kEvalStream);
}

std::vector<EpisodeRecord> evaluate(const Agent& agent, const sim::EnvConfig& env, std::uint64_t run_seed, int seeds,
                                    int episode, bool parallel, const std::vector<Difficulty>& difficulties) {
  struct Task {
    Difficulty d;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (auto d : difficulties)
    for (int j = 0; j < seeds; ++j) tasks.push_back({d, eval_seed(run_seed, d, episode, j)});
  std::vector<EpisodeRecord> out(tasks.size());
  auto run = [&](std::size_t i) {
    auto snapshot = agent.clone();
    EpisodeRecord r = collect_episode(env, *snapshot, workload::preset(tasks[i].d), tasks[i].seed, Mode::Eval).record;
    r.episode = episode;
    r.difficulty = std::string(workload::to_string(tasks[i].d));
    out[i] = std::move(r);
  };
  if (!parallel || tasks.size() < 2) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run(i);
    return out;
  }
  const std::size_t workers =
      std::min<std::size_t>(tasks.size(), std::max<unsigned>(1, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < tasks.size(); i += workers) run(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------------------

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_row(const EpisodeRecord& r) {
  std::string s;
  s += std::to_string(r.episode);
  s += ',';
  s += to_string(r.phase);
  s += ',';
  s += r.difficulty;
  for (double v : {r.params.arrival_interval, r.params.pareto_shape, r.params.pareto_scale, r.cum_reward,
                   r.mean_completion_time}) {
    s += ',';
    s += format_number(v);
  }
  s += ',';
  s += std::to_string(r.steps);
  s += ',';
  s += format_number(r.wall_ms);
  s += ',';
  s += std::to_string(r.seed);
  return s;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_field(const std::string& s, int line, const char* column) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error("episode log line " + std::to_string(line) + ": bad " + column + " '" + s + "'");
  return v;
}

}  // namespace

std::vector<EpisodeRecord> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("episode log is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    const auto have = split(line), want = split(kCsvHeader);
    for (const auto& col : want)
      if (std::find(have.begin(), have.end(), col) == have.end())
        throw std::runtime_error("episode log is missing column '" + col + "'");
    throw std::runtime_error("episode log columns are out of order: " + line);
  }
  std::vector<EpisodeRecord> out;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 11) throw std::runtime_error("episode log line " + std::to_string(n) + ": expected 11 fields");
    EpisodeRecord r;
    r.episode = parse_field<int>(f[0], n, "episode");
    if (f[1] == "train") r.phase = Phase::Train;
    else if (f[1] == "eval") r.phase = Phase::Eval;
    else throw std::runtime_error("episode log line " + std::to_string(n) + ": bad phase '" + f[1] + "'");
    r.difficulty = f[2];
    r.params.arrival_interval = parse_field<double>(f[3], n, "arrival_interval");
    r.params.pareto_shape = parse_field<double>(f[4], n, "pareto_shape");
    r.params.pareto_scale = parse_field<double>(f[5], n, "pareto_scale");
    r.cum_reward = parse_field<double>(f[6], n, "cum_reward");
    r.mean_completion_time = parse_field<double>(f[7], n, "mean_completion_time");
    r.steps = parse_field<int>(f[8], n, "steps");
    r.wall_ms = parse_field<double>(f[9], n, "wall_ms");
    r.seed = parse_field<std::uint64_t>(f[10], n, "seed");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<EpisodeRecord> read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open episode log '" + path + "'");
  return read_csv(in);
}

// ---------------------------------------------------------------------------

ForgettingEntry forgetting_metric(const std::vector<double>& history) {
  if (history.empty()) throw std::invalid_argument("forgetting_metric: empty eval history");
  ForgettingEntry e;
  e.peak = *std::max_element(history.begin(), history.end());
  e.final = history.back();
  e.forgetting = e.peak - e.final;
  double sum = 0.0;
  for (double v : history) sum += v;
  e.auc = sum / static_cast<double>(history.size());
  e.episodes = static_cast<int>(history.size());
  return e;
}

std::map<std::string, std::vector<double>> eval_history(const std::vector<EpisodeRecord>& records) {
  std::map<std::string, std::map<int, std::pair<double, int>>> acc;
  for (const auto& r : records) {
    if (r.phase != Phase::Eval) continue;
    auto& slot = acc[r.difficulty][r.episode];
    slot.first += r.cum_reward;
    ++slot.second;
  }
  std::map<std::string, std::vector<double>> out;
  for (const auto& [d, per_ep] : acc)
    for (const auto& [_, s] : per_ep) out[d].push_back(s.first / s.second);
  return out;
}

ForgettingReport forgetting_report(const std::vector<EpisodeRecord>& records) {
  ForgettingReport rep;
  for (const auto& [d, h] : eval_history(records)) rep[d] = forgetting_metric(h);
  return rep;
}

nlohmann::json to_json(const ForgettingReport& report) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [d, e] : report)
    j[d] = {{"peak", e.peak}, {"final", e.final}, {"forgetting", e.forgetting}, {"auc", e.auc},
            {"episodes", e.episodes}};
  return j;
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'L', 'B', 'W', 'M'};
}

std::string checkpoint_bytes(const Agent& agent, const RunConfig& config, int next_episode) {
  nn::BinaryWriter w;
  w.write_raw(kMagic);
  w.write_u32(kCheckpointVersion);
  w.write_string(agent.kind());
  w.write_string(to_json(config).dump());
  w.write_i64(next_episode);
  nn::BinaryWriter state;
  agent.save_state(state);
  w.write_string(state.take());
  std::string bytes = w.take();
  nn::BinaryWriter tail;
  tail.write_u64(nn::fnv1a64(bytes));
  return bytes + tail.take();
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < 8 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
    throw nn::CorruptData("not a checkpoint file (bad magic or truncated header)");
  {
    nn::BinaryReader head(std::span<const char>(bytes.data() + 4, 4));
    const std::uint32_t version = head.read_u32();
    if (version != kCheckpointVersion)
      throw VersionMismatch("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 16) throw nn::CorruptData("checkpoint truncated");
  const std::size_t body = bytes.size() - 8;
  nn::BinaryReader tail(std::span<const char>(bytes.data() + body, 8));
  if (tail.read_u64() != nn::fnv1a64(std::span<const char>(bytes.data(), body)))
    throw nn::CorruptData("checkpoint checksum mismatch (file corrupt or truncated)");
  nn::BinaryReader r(std::span<const char>(bytes.data() + 8, body - 8));
  const std::string kind = r.read_string();
  Checkpoint ck;
  try {
    ck.config = from_json(nlohmann::json::parse(r.read_string()));
  } catch (const nlohmann::json::exception& e) {
    throw nn::CorruptData(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  ck.next_episode = static_cast<int>(r.read_i64());
  const std::string state = r.read_string();
  ck.agent = make_agent(ck.config);
  if (ck.agent->kind() != kind)
    throw nn::CorruptData("checkpoint agent kind '" + kind + "' does not match its config ('" + ck.agent->kind() +
                          "')");
  nn::BinaryReader sr(state);
  ck.agent->load_state(sr);
  if (sr.remaining() != 0) throw nn::CorruptData("checkpoint agent state has trailing bytes");
  return ck;
}

void checkpoint_save(const Agent& agent, const RunConfig& config, int next_episode, const std::string& path) {
  const std::string bytes = checkpoint_bytes(agent, config, next_episode);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint '" + tmp + "'");
  }
  fs::rename(tmp, path);
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

// ---------------------------------------------------------------------------

std::uint64_t train_seed(std::uint64_t run_seed, int episode) {
  return derive_seed(run_seed, static_cast<std::uint64_t>(episode), kTrainStream);
}

std::pair<workload::WorkloadParams, std::string> train_workload(const RunConfig& config, int episode) {
  if (auto d = config.schedule.difficulty_at(episode)) return {workload::preset(*d), std::string(workload::to_string(*d))};
  Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(episode), kParamStream));
  return {workload::sample_params(rng, config.ranges), "sampled"};
}

TrainSummary train(const RunConfig& input, const TrainOptions& options) {
  RunConfig config = input;
  config.validate();
  const fs::path dir(config.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create run directory '" + dir.string() + "': " + ec.message());

  std::unique_ptr<Agent> agent;
  int start = 0;
  const fs::path csv_path = dir / "episodes.csv";
  std::vector<EpisodeRecord> kept;
  if (options.resume) {
    Checkpoint ck = checkpoint_load(*options.resume);
    auto comparable = [](const RunConfig& c) {
      auto j = to_json(c);
      for (const char* k : {"out_dir", "episodes", "checkpoint_every", "log_wall_time", "parallel_eval"}) j.erase(k);
      return j;
    };
    if (comparable(ck.config) != comparable(config))
      throw ConfigError("checkpoint '" + *options.resume + "' was written under a different configuration");
    if (ck.next_episode > config.episodes)
      throw ConfigError("checkpoint is at episode " + std::to_string(ck.next_episode) + ", beyond episodes = " +
                        std::to_string(config.episodes));
    agent = std::move(ck.agent);
    start = ck.next_episode;
    if (fs::exists(csv_path))
      for (auto& r : read_csv_file(csv_path.string()))
        if (r.episode < start) kept.push_back(std::move(r));
  } else {
    agent = make_agent(config);
  }

  {
    std::ofstream cfg(dir / "config.json");
    if (!cfg) throw std::runtime_error("cannot write '" + (dir / "config.json").string() + "'");
    cfg << to_json(config).dump(2) << '\n';
  }
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write episode log '" + csv_path.string() + "'");
  csv << kCsvHeader << '\n';
  for (const auto& r : kept) csv << csv_row(r) << '\n';

  for (int e = start; e < config.episodes; ++e) {
    auto [params, label] = train_workload(config, e);
    EpisodeRecord tr;
    std::vector<EpisodeRecord> evals;
    try {
      tr = collect_episode(config.env, *agent, params, train_seed(config.seed, e), Mode::Train).record;
      evals = evaluate(*agent, config.env, config.seed, config.eval_seeds, e, config.parallel_eval);
    } catch (const std::exception& ex) {
      throw std::runtime_error("episode " + std::to_string(e) + ": " + ex.what());
    }
    tr.episode = e;
    tr.difficulty = label;
    if (!config.log_wall_time) {
      tr.wall_ms = 0.0;
      for (auto& r : evals) r.wall_ms = 0.0;
    }
    csv << csv_row(tr) << '\n';
    for (const auto& r : evals) csv << csv_row(r) << '\n';
    csv.flush();
    if (!csv) throw std::runtime_error("failed writing episode log '" + csv_path.string() + "'");
    if (options.on_episode) options.on_episode(tr, evals);
    if (options.log) {
      *options.log << "episode " << e << " [" << label << "] train " << format_number(tr.cum_reward);
      for (auto d : workload::kAllDifficulties) {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : evals)
          if (r.difficulty == workload::to_string(d)) sum += r.cum_reward, ++n;
        if (n > 0) *options.log << " " << workload::to_string(d) << " " << format_number(sum / n);
      }
      *options.log << '\n';
    }
    if (config.checkpoint_every > 0 && (e + 1) % config.checkpoint_every == 0)
      checkpoint_save(*agent, config, e + 1, (dir / ("ckpt_" + std::to_string(e + 1) + ".bin")).string());
  }
  csv.close();
  checkpoint_save(*agent, config, config.episodes, (dir / "final.bin").string());

  TrainSummary summary;
  summary.run_dir = dir.string();
  summary.episodes_run = config.episodes - start;
  const auto records = read_csv_file(csv_path.string());
  if (config.eval_seeds > 0) {
    summary.forgetting = forgetting_report(records);
    std::ofstream fj(dir / "forgetting.json");
    if (!fj) throw std::runtime_error("cannot write '" + (dir / "forgetting.json").string() + "'");
    fj << to_json(summary.forgetting).dump(2) << '\n';
  }
  return summary;
}

}  // namespace lbwm::harness
