#include "lbwm/harness/run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "lbwm/harness/heuristic_agent.hpp"

namespace lbwm::harness {

using nlohmann::json;
using workload::Difficulty;

std::optional<Difficulty> Schedule::difficulty_at(int episode) const {
  switch (kind) {
    case Kind::Sampled:
      return std::nullopt;
    case Kind::Fixed:
      return phases.front();
    case Kind::Alternating:
      return phases[static_cast<std::size_t>(episode / phase_length) % phases.size()];
  }
  return std::nullopt;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (episodes < 1) fail("episodes must be >= 1");
  if (eval_seeds < 0) fail("eval_seeds must be >= 0");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (schedule.phases.empty()) fail("schedule.phases must not be empty");
  if (schedule.phase_length < 1) fail("schedule.phase_length must be >= 1");
  try {
    env.validate();
    ranges.validate();
    a2c.validate();
    wm.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (agent == "wm" &&
      replay_capacity < static_cast<std::size_t>(wm.batch_size) * static_cast<std::size_t>(wm.batch_length))
    fail("replay_capacity " + std::to_string(replay_capacity) + " is below batch_size * batch_length");
  if (replay_capacity < 1) fail("replay_capacity must be >= 1");
  if (agent != "a2c" && agent != "wm") {
    if (agent.rfind("heuristic:", 0) != 0 || !heuristics::parse_heuristic(agent.substr(10)))
      fail("unknown agent '" + agent + "' (expected a2c, wm or heuristic:<random|rr|jsq|lwl|sed>)");
  }
}

void apply_fidelity(RunConfig& c, Fidelity f) {
  c.fidelity = f;
  if (f == Fidelity::Desk) return;
  c.replay_capacity = kPaperReplayCapacity;
  wm::WmConfig& w = c.wm;
  w.batch_size = 16;
  w.batch_length = 64;
  w.lr = 4e-5;
  w.agc = 0.3;
  w.laprop_eps = 1e-20;
  w.beta_pred = 1.0;
  w.beta_dyn = 1.0;
  w.beta_rep = 0.1;
  w.unimix = 0.01;
  w.free_nats = 1.0;
  w.horizon = 15;
  w.gamma = 1.0 - 1.0 / 333.0;
  w.lambda = 0.95;
  w.entropy_coef = 3e-4;
  w.policy_gru_units = 256;
  w.policy_gru_activation = nn::Activation::Silu;
  w.recurrent_policy = true;
}

std::string_view to_string(Fidelity f) { return f == Fidelity::Paper ? "paper" : "desk"; }

Fidelity parse_fidelity(std::string_view s) {
  if (s == "paper") return Fidelity::Paper;
  if (s == "desk") return Fidelity::Desk;
  throw ConfigError("fidelity must be 'paper' or 'desk', got '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

namespace {

std::string difficulty_name(Difficulty d) { return std::string(workload::to_string(d)); }

Difficulty difficulty_from(const std::string& s) {
  auto d = workload::parse_difficulty(s);
  if (!d) throw ConfigError("unknown difficulty '" + s + "'");
  return *d;
}

std::string_view schedule_name(Schedule::Kind k) {
  switch (k) {
    case Schedule::Kind::Sampled:
      return "sampled";
    case Schedule::Kind::Alternating:
      return "alternating";
    case Schedule::Kind::Fixed:
      return "fixed";
  }
  return "sampled";
}

// Reads keys of one JSON object and rejects any it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }
  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string path(const char* key) const { return where_ + "." + key; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json interval(const workload::Interval& i) { return json::array({i.lo, i.hi}); }

void read_interval(ObjectReader& r, const char* key, workload::Interval& out) {
  std::vector<double> v;
  r.get(key, v);
  if (v.empty()) return;
  if (v.size() != 2) throw ConfigError(r.path(key) + ": expected [lo, hi]");
  out = {v[0], v[1]};
}

}  // namespace

json to_json(const RunConfig& c) {
  json j;
  j["agent"] = c.agent;
  j["episodes"] = c.episodes;
  j["eval_seeds"] = c.eval_seeds;
  j["replay_capacity"] = c.replay_capacity;
  j["fidelity"] = to_string(c.fidelity);
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["log_wall_time"] = c.log_wall_time;
  j["parallel_eval"] = c.parallel_eval;

  json s;
  s["kind"] = schedule_name(c.schedule.kind);
  s["phase_length"] = c.schedule.phase_length;
  s["phases"] = json::array();
  for (auto d : c.schedule.phases) s["phases"].push_back(difficulty_name(d));
  j["schedule"] = s;

  const sim::EnvConfig& e = c.env;
  j["env"] = {{"num_servers", e.num_servers},
              {"rate_min", e.rate_min},
              {"rate_max", e.rate_max},
              {"jobs_per_episode", e.jobs_per_episode},
              {"drain_penalty", e.drain_penalty},
              {"obs_mode", sim::to_string(e.obs_mode)},
              {"reward_scale", e.reward_scale}};
  j["ranges"] = {{"arrival_interval", interval(c.ranges.interval)},
                 {"pareto_shape", interval(c.ranges.shape)},
                 {"pareto_scale", interval(c.ranges.scale)}};

  const a2c::A2cConfig& a = c.a2c;
  j["a2c"] = {{"hidden", a.hidden},           {"lr", a.lr},
              {"gamma", a.gamma},             {"rollout", a.rollout},
              {"value_coef", a.value_coef},   {"entropy_coef", a.entropy_coef},
              {"clip_norm", a.clip_norm},     {"reward_scale", a.reward_scale},
              {"normalize_obs", a.normalize_obs}, {"normalize_reward", a.normalize_reward}};

  const wm::WmConfig& w = c.wm;
  j["wm"] = {{"deter_size", w.deter_size},
             {"latent_groups", w.latent_groups},
             {"latent_classes", w.latent_classes},
             {"mlp_width", w.mlp_width},
             {"mlp_layers", w.mlp_layers},
             {"mlp_activation", "silu"},
             {"beta_pred", w.beta_pred},
             {"beta_dyn", w.beta_dyn},
             {"beta_rep", w.beta_rep},
             {"free_nats", w.free_nats},
             {"unimix", w.unimix},
             {"horizon", w.horizon},
             {"gamma", w.gamma},
             {"discount_horizon", w.discount_horizon()},
             {"lambda", w.lambda},
             {"entropy_coef", w.entropy_coef},
             {"lr", w.lr},
             {"agc", w.agc},
             {"optimizer", "laprop"},
             {"laprop_eps", w.laprop_eps},
             {"policy_gru_units", w.policy_gru_units},
             {"policy_gru_activation", w.policy_gru_activation == nn::Activation::Silu ? "silu" : "tanh"},
             {"feed_prev_action_reward", w.feed_prev_action_reward},
             {"batch_size", w.batch_size},
             {"batch_length", w.batch_length},
             {"train_ratio", w.train_ratio},
             {"symlog", w.symlog},
             {"persist_policy_state", w.persist_policy_state},
             {"critic_on_latent", w.critic_on_latent},
             {"recurrent_policy", w.recurrent_policy},
             {"imag_starts", w.imag_starts},
             {"return_ema_decay", w.return_ema_decay}};
  return j;
}

RunConfig from_json(const json& j, RunConfig c) {
  ObjectReader r(j, "config");
  r.get("agent", c.agent);
  r.get("episodes", c.episodes);
  r.get("eval_seeds", c.eval_seeds);
  r.get("replay_capacity", c.replay_capacity);
  std::string fidelity(to_string(c.fidelity));
  r.get("fidelity", fidelity);
  c.fidelity = parse_fidelity(fidelity);
  r.get("out_dir", c.out_dir);
  r.get("seed", c.seed);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("log_wall_time", c.log_wall_time);
  r.get("parallel_eval", c.parallel_eval);

  if (const json* s = r.child("schedule")) {
    ObjectReader sr(*s, "config.schedule");
    std::string kind(schedule_name(c.schedule.kind));
    sr.get("kind", kind);
    if (kind == "sampled") c.schedule.kind = Schedule::Kind::Sampled;
    else if (kind == "alternating") c.schedule.kind = Schedule::Kind::Alternating;
    else if (kind == "fixed") c.schedule.kind = Schedule::Kind::Fixed;
    else throw ConfigError("config.schedule.kind: expected sampled, alternating or fixed, got '" + kind + "'");
    sr.get("phase_length", c.schedule.phase_length);
    std::vector<std::string> phases;
    sr.get("phases", phases);
    if (!phases.empty()) {
      c.schedule.phases.clear();
      for (const auto& p : phases) c.schedule.phases.push_back(difficulty_from(p));
    }
    sr.finish();
  }
  if (const json* e = r.child("env")) {
    ObjectReader er(*e, "config.env");
    er.get("num_servers", c.env.num_servers);
    er.get("rate_min", c.env.rate_min);
    er.get("rate_max", c.env.rate_max);
    er.get("jobs_per_episode", c.env.jobs_per_episode);
    er.get("drain_penalty", c.env.drain_penalty);
    std::string mode(sim::to_string(c.env.obs_mode));
    er.get("obs_mode", mode);
    auto m = sim::parse_obs_mode(mode);
    if (!m) throw ConfigError("config.env.obs_mode: expected work or count, got '" + mode + "'");
    c.env.obs_mode = *m;
    er.get("reward_scale", c.env.reward_scale);
    er.finish();
  }
  if (const json* g = r.child("ranges")) {
    ObjectReader gr(*g, "config.ranges");
    read_interval(gr, "arrival_interval", c.ranges.interval);
    read_interval(gr, "pareto_shape", c.ranges.shape);
    read_interval(gr, "pareto_scale", c.ranges.scale);
    gr.finish();
  }
  if (const json* a = r.child("a2c")) {
    ObjectReader ar(*a, "config.a2c");
    ar.get("hidden", c.a2c.hidden);
    ar.get("lr", c.a2c.lr);
    ar.get("gamma", c.a2c.gamma);
    ar.get("rollout", c.a2c.rollout);
    ar.get("value_coef", c.a2c.value_coef);
    ar.get("entropy_coef", c.a2c.entropy_coef);
    ar.get("clip_norm", c.a2c.clip_norm);
    ar.get("reward_scale", c.a2c.reward_scale);
    ar.get("normalize_obs", c.a2c.normalize_obs);
    ar.get("normalize_reward", c.a2c.normalize_reward);
    ar.finish();
  }
  if (const json* w = r.child("wm")) {
    ObjectReader wr(*w, "config.wm");
    wm::WmConfig& m = c.wm;
    wr.get("deter_size", m.deter_size);
    wr.get("latent_groups", m.latent_groups);
    wr.get("latent_classes", m.latent_classes);
    wr.get("mlp_width", m.mlp_width);
    wr.get("mlp_layers", m.mlp_layers);
    std::string act = "silu", opt = "laprop";
    wr.get("mlp_activation", act);
    if (act != "silu") throw ConfigError("config.wm.mlp_activation: only 'silu' is supported");
    wr.get("optimizer", opt);
    if (opt != "laprop") throw ConfigError("config.wm.optimizer: only 'laprop' is supported");
    wr.get("beta_pred", m.beta_pred);
    wr.get("beta_dyn", m.beta_dyn);
    wr.get("beta_rep", m.beta_rep);
    wr.get("free_nats", m.free_nats);
    wr.get("unimix", m.unimix);
    wr.get("horizon", m.horizon);
    wr.get("gamma", m.gamma);
    double horizon_form = 0.0;
    wr.get("discount_horizon", horizon_form);
    if (horizon_form != 0.0) {
      if (!(horizon_form > 1.0)) throw ConfigError("config.wm.discount_horizon must be > 1");
      if (!w->contains("gamma")) {
        m.gamma = 1.0 - 1.0 / horizon_form;
      } else if (std::abs(m.gamma - (1.0 - 1.0 / horizon_form)) > 1e-9) {
        throw ConfigError("config.wm: gamma and discount_horizon disagree");
      }
    }
    wr.get("lambda", m.lambda);
    wr.get("entropy_coef", m.entropy_coef);
    wr.get("lr", m.lr);
    wr.get("agc", m.agc);
    wr.get("laprop_eps", m.laprop_eps);
    wr.get("policy_gru_units", m.policy_gru_units);
    std::string gru_act = m.policy_gru_activation == nn::Activation::Silu ? "silu" : "tanh";
    wr.get("policy_gru_activation", gru_act);
    if (gru_act == "silu") m.policy_gru_activation = nn::Activation::Silu;
    else if (gru_act == "tanh") m.policy_gru_activation = nn::Activation::Tanh;
    else throw ConfigError("config.wm.policy_gru_activation: expected 'tanh' or 'silu', got '" + gru_act + "'");
    wr.get("feed_prev_action_reward", m.feed_prev_action_reward);
    wr.get("batch_size", m.batch_size);
    wr.get("batch_length", m.batch_length);
    wr.get("train_ratio", m.train_ratio);
    wr.get("symlog", m.symlog);
    wr.get("persist_policy_state", m.persist_policy_state);
    wr.get("critic_on_latent", m.critic_on_latent);
    wr.get("recurrent_policy", m.recurrent_policy);
    wr.get("imag_starts", m.imag_starts);
    wr.get("return_ema_decay", m.return_ema_decay);
    wr.finish();
  }
  r.finish();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::unique_ptr<Agent> make_agent(const RunConfig& c) {
  c.validate();
  const int k = c.env.num_servers;
  if (c.agent == "a2c") return std::make_unique<a2c::A2cAgent>(k, c.a2c, derive_seed(c.seed, 0, 0xa6e7));
  if (c.agent == "wm")
    return std::make_unique<wm::WmAgent>(k, c.wm, derive_seed(c.seed, 0, 0xa6e7), c.replay_capacity);
  return std::make_unique<HeuristicAgent>(*heuristics::parse_heuristic(c.agent.substr(10)), c.env.service_rates());
}

}  // namespace lbwm::harness
