#include "lbwm/sim_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace lbwm::sim {

std::string_view to_string(ObsMode m) { return m == ObsMode::Work ? "work" : "count"; }

std::optional<ObsMode> parse_obs_mode(std::string_view s) {
  if (s == "work") return ObsMode::Work;
  if (s == "count") return ObsMode::Count;
  return std::nullopt;
}

void EnvConfig::validate() const {
  if (num_servers < 1) throw std::invalid_argument("EnvConfig: num_servers must be >= 1, got " + std::to_string(num_servers));
  if (!(rate_min > 0.0) || !(rate_min <= rate_max))
    throw std::invalid_argument("EnvConfig: need 0 < rate_min <= rate_max, got " + std::to_string(rate_min) + ", " +
                                std::to_string(rate_max));
  if (jobs_per_episode < 1)
    throw std::invalid_argument("EnvConfig: jobs_per_episode must be >= 1, got " + std::to_string(jobs_per_episode));
  if (!std::isfinite(reward_scale)) throw std::invalid_argument("EnvConfig: reward_scale must be finite");
  workload.validate();
}

std::vector<double> EnvConfig::service_rates() const {
  std::vector<double> rates(static_cast<std::size_t>(num_servers), rate_min);
  if (num_servers > 1) {
    const double step = (rate_max - rate_min) / static_cast<double>(num_servers - 1);
    for (int i = 0; i < num_servers; ++i) rates[static_cast<std::size_t>(i)] = rate_min + i * step;
  }
  return rates;
}

std::vector<double> Observation::flatten() const {
  std::vector<double> out;
  out.reserve(server_loads.size() + 1);
  out.push_back(job_size);
  out.insert(out.end(), server_loads.begin(), server_loads.end());
  return out;
}

const std::vector<double>* Observation::loads_in(ObsMode m) const {
  if (m == mode) return &server_loads;
  if (!alt_loads.empty()) return &alt_loads;
  return nullptr;
}

Env::Env(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
  rates_ = config_.service_rates();
  clear_state();
}

void Env::clear_state() {
  servers_.assign(rates_.size(), Server{});
  stats_.assign(rates_.size(), ServerStats{});
  for (std::size_t i = 0; i < rates_.size(); ++i) stats_[i].rate = rates_[i];
  jobs_.clear();
  clock_ = 0.0;
  pending_.reset();
  jobs_emitted_ = 0;
  jobs_completed_ = 0;
  done_ = false;
}

void Env::emit_job(double arrival_time, double size) {
  Job job;
  job.id = jobs_emitted_;
  job.size = size;
  job.arrival_time = arrival_time;
  jobs_.push_back(job);
  pending_ = job.id;
  ++jobs_emitted_;
  trace_event("arrival", arrival_time, job.id, std::nullopt, size);
}

Observation Env::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  script_.reset();
  clear_state();
  episode_length_ = config_.jobs_per_episode;
  jobs_.reserve(static_cast<std::size_t>(episode_length_));
  const auto& w = config_.workload;
  emit_job(0.0, workload::pareto_size(rng_, w.pareto_shape, w.pareto_scale));
  return make_observation(jobs_.back().size);
}

Observation Env::reset_scripted(std::vector<Arrival> arrivals) {
  if (arrivals.empty()) throw std::invalid_argument("reset_scripted: empty arrival list");
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    if (!(arrivals[i].size >= 0.0)) throw std::invalid_argument("reset_scripted: job sizes must be >= 0");
    if (i > 0 && arrivals[i].time < arrivals[i - 1].time)
      throw std::invalid_argument("reset_scripted: arrival times must be non-decreasing");
  }
  script_ = std::move(arrivals);
  clear_state();
  episode_length_ = static_cast<int>(script_->size());
  clock_ = script_->front().time;
  emit_job(clock_, script_->front().size);
  return make_observation(jobs_.back().size);
}

double Env::advance(double t_prev, double t_end, double& t_reached, std::vector<Completion>& completed) {
  double presence = 0.0;
  t_reached = std::isinf(t_end) ? t_prev : t_end;
  for (std::size_t s = 0; s < servers_.size(); ++s) {
    Server& srv = servers_[s];
    ServerStats& st = stats_[s];
    const double rate = rates_[s];
    double t = t_prev;
    while (!srv.queue.empty()) {
      const double finish = t + srv.head_remaining / rate;
      if (finish <= t_end) {
        const std::int64_t id = srv.queue.front();
        srv.queue.pop_front();
        st.busy_time += finish - t;
        st.completed_work += srv.head_remaining;
        ++st.completed_jobs;
        Job& job = jobs_[static_cast<std::size_t>(id)];
        job.completion_time = finish;
        presence += finish - std::max(t_prev, job.arrival_time);
        completed.push_back({id, static_cast<int>(s), finish});
        ++jobs_completed_;
        trace_event("complete", finish, id, static_cast<int>(s), job.size);
        t = finish;
        if (!srv.queue.empty()) {
          const double next_size = jobs_[static_cast<std::size_t>(srv.queue.front())].size;
          srv.head_remaining = next_size;
          srv.waiting_work = std::max(0.0, srv.waiting_work - next_size);
        } else {
          srv.head_remaining = 0.0;
          srv.waiting_work = 0.0;
        }
        if (std::isinf(t_end)) t_reached = std::max(t_reached, finish);
      } else {
        const double dt = t_end - t;
        const double work = dt * rate;
        st.busy_time += dt;
        st.completed_work += work;
        srv.head_remaining = std::max(0.0, srv.head_remaining - work);
        for (std::int64_t id : srv.queue)
          presence += t_end - std::max(t_prev, jobs_[static_cast<std::size_t>(id)].arrival_time);
        break;
      }
    }
  }
  return presence;
}

StepResult Env::step(int action) {
  if (done_) throw std::logic_error("Env::step called after the episode finished; call reset first");
  if (action < 0 || action >= config_.num_servers)
    throw std::out_of_range("Env::step: action " + std::to_string(action) + " outside [0, " +
                            std::to_string(config_.num_servers) + ")");

  Job& job = jobs_[static_cast<std::size_t>(*pending_)];
  job.assigned_server = action;
  Server& srv = servers_[static_cast<std::size_t>(action)];
  if (srv.queue.empty()) {
    srv.head_remaining = job.size;
  } else {
    srv.waiting_work += job.size;
  }
  srv.queue.push_back(job.id);
  trace_event("assign", clock_, job.id, action, job.size);
  pending_.reset();

  StepResult result;
  result.info.t_prev = clock_;
  double next_arrival = std::numeric_limits<double>::infinity();
  double next_size = 0.0;
  const bool last = jobs_emitted_ >= episode_length_;
  if (!last) {
    if (script_) {
      const Arrival& a = (*script_)[static_cast<std::size_t>(jobs_emitted_)];
      next_arrival = a.time;
      next_size = a.size;
    } else {
      const auto& w = config_.workload;
      next_arrival = clock_ + workload::poisson_interarrival(rng_, w.arrival_interval);
      next_size = workload::pareto_size(rng_, w.pareto_shape, w.pareto_scale);
    }
  } else if (!config_.drain_penalty) {
    next_arrival = script_ ? clock_ : clock_ + workload::poisson_interarrival(rng_, config_.workload.arrival_interval);
  }

  double t_reached = clock_;
  const double presence = advance(clock_, next_arrival, t_reached, result.info.completed);
  clock_ = std::max(clock_, t_reached);
  result.info.t_now = clock_;
  result.reward = -config_.reward_scale * presence;

  if (last) {
    done_ = true;
    result.done = true;
    result.observation = make_observation(0.0);
  } else {
    emit_job(next_arrival, next_size);
    result.observation = make_observation(next_size);
  }
  return result;
}

Observation Env::observe(ObsMode mode) const {
  Observation obs;
  obs.job_size = pending_ ? jobs_[static_cast<std::size_t>(*pending_)].size : 0.0;
  obs.mode = mode;
  obs.server_loads.resize(servers_.size());
  for (std::size_t s = 0; s < servers_.size(); ++s) {
    const Server& srv = servers_[s];
    obs.server_loads[s] = mode == ObsMode::Work
                              ? (srv.queue.empty() ? 0.0 : srv.head_remaining + srv.waiting_work)
                              : static_cast<double>(srv.queue.size());
  }
  return obs;
}

Observation Env::make_observation(double job_size) const {
  Observation obs = observe(config_.obs_mode);
  obs.job_size = job_size;
  if (config_.expose_both_modes) {
    obs.alt_loads = observe(config_.obs_mode == ObsMode::Work ? ObsMode::Count : ObsMode::Work).server_loads;
  }
  return obs;
}

void Env::trace_event(std::string_view event, double t, std::int64_t job_id, std::optional<int> server,
                      double size) const {
  if (trace_ == nullptr) return;
  nlohmann::json rec;
  rec["event"] = event;
  rec["t"] = t;
  rec["job_id"] = job_id;
  rec["server"] = server ? nlohmann::json(*server) : nlohmann::json(nullptr);
  rec["size"] = size;
  *trace_ << rec.dump() << '\n';
}

double offered_load(const EnvConfig& config) {
  const auto& w = config.workload;
  if (!(w.pareto_shape > 1.0))
    throw std::domain_error("offered_load: Pareto mean is undefined for shape <= 1 (got " +
                            std::to_string(w.pareto_shape) + ")");
  const double mean_size = w.pareto_shape * w.pareto_scale / (w.pareto_shape - 1.0);
  double capacity = 0.0;
  for (double r : config.service_rates()) capacity += r;
  return (mean_size / w.arrival_interval) / capacity;
}

}  // namespace lbwm::sim
