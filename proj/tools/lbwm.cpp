#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "lbwm/harness/heuristic_agent.hpp"
#include "lbwm/harness/plot.hpp"
#include "lbwm/harness/trainer.hpp"

using namespace lbwm;
using namespace lbwm::harness;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

std::vector<workload::Difficulty> parse_difficulties(const std::vector<std::string>& names) {
  std::vector<workload::Difficulty> out;
  for (const auto& n : names) {
    if (n == "all") {
      out.insert(out.end(), workload::kAllDifficulties.begin(), workload::kAllDifficulties.end());
      continue;
    }
    auto d = workload::parse_difficulty(n);
    if (!d) throw ConfigError("unknown difficulty '" + n + "' (expected easy, medium, hard or all)");
    out.push_back(*d);
  }
  if (out.empty()) out.assign(workload::kAllDifficulties.begin(), workload::kAllDifficulties.end());
  return out;
}

void print_summary(const std::vector<EpisodeRecord>& recs, std::ostream& os) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& r : recs) {
    acc[r.difficulty].first += r.cum_reward;
    ++acc[r.difficulty].second;
  }
  for (const auto& [d, s] : acc)
    os << "# " << d << " mean_reward " << format_number(s.first / s.second) << " over " << s.second << " seeds\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Load-balancing agents: training, evaluation, heuristic benchmarks and plots"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "Train an agent and write a run directory");
  std::string config_path, agent_kind, fidelity_name, out_dir, resume_path;
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  bool echo_config = false, quiet = false;
  train_cmd->add_option("--config", config_path, "JSON run configuration")->required();
  train_cmd->add_option("--agent", agent_kind, "a2c, wm or heuristic:<random|rr|jsq|lwl|sed>");
  train_cmd->add_option("--episodes", episodes, "Training episodes");
  train_cmd->add_option("--seed", seed, "Run seed");
  train_cmd->add_option("--fidelity", fidelity_name, "paper restores the reference hyperparameters; desk keeps the file's values");
  train_cmd->add_option("--out", out_dir, "Run directory");
  train_cmd->add_option("--resume", resume_path, "Continue from a checkpoint of this run");
  train_cmd->add_flag("--echo-config", echo_config, "Print the effective configuration as JSON and exit");
  train_cmd->add_flag("--quiet", quiet, "No per-episode progress lines");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on preset workloads");
  std::string checkpoint_path;
  std::vector<std::string> eval_difficulties;
  int eval_seeds = 5;
  std::uint64_t eval_run_seed = 0;
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval_cmd->add_option("--difficulty", eval_difficulties, "easy, medium, hard or all (repeatable)");
  eval_cmd->add_option("--seeds", eval_seeds, "Episodes per difficulty");
  eval_cmd->add_option("--seed", eval_run_seed, "Seed for the evaluation workloads");

  auto* bench_cmd = app.add_subcommand("bench", "Run a heuristic dispatcher on preset workloads");
  std::string heuristic_name;
  std::vector<std::string> bench_difficulties;
  int bench_seeds = 20, bench_jobs = 1000;
  std::uint64_t bench_seed = 0;
  bench_cmd->add_option("--heuristic", heuristic_name, "random, rr, jsq, lwl or sed")->required();
  bench_cmd->add_option("--difficulty", bench_difficulties, "easy, medium, hard or all (repeatable)");
  bench_cmd->add_option("--seeds", bench_seeds, "Episodes per difficulty");
  bench_cmd->add_option("--jobs", bench_jobs, "Jobs per episode");
  bench_cmd->add_option("--seed", bench_seed, "Seed for the workloads");

  auto* plot_cmd = app.add_subcommand("plot", "Plot smoothed eval curves of run directories");
  std::vector<std::string> plot_runs, plot_compare;
  std::string plot_out;
  int window = kSmoothWindow;
  plot_cmd->add_option("--run", plot_runs, "Run directory (repeatable)");
  plot_cmd->add_option("--compare", plot_compare, "NAME=DIR[,DIR...]: one panel averaged over its runs (repeatable)");
  plot_cmd->add_option("--out", plot_out, "Output prefix for --compare")->default_val("comparison");
  plot_cmd->add_option("--window", window, "Running-mean window")->default_val(kSmoothWindow);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train_cmd) {
      RunConfig cfg = load_config(config_path);
      if (!agent_kind.empty()) cfg.agent = agent_kind;
      if (episodes) cfg.episodes = *episodes;
      if (seed) cfg.seed = *seed;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      const Fidelity f = fidelity_name.empty() ? cfg.fidelity : parse_fidelity(fidelity_name);
      apply_fidelity(cfg, f);
      cfg.validate();
      if (echo_config) {
        std::cout << to_json(cfg).dump(2) << '\n';
        return 0;
      }
      TrainOptions opt;
      if (!resume_path.empty()) opt.resume = resume_path;
      if (!quiet) opt.log = &std::cerr;
      auto summary = train(cfg, opt);
      std::cout << "run directory: " << summary.run_dir << '\n' << to_json(summary.forgetting).dump(2) << '\n';
    } else if (*eval_cmd) {
      if (eval_seeds < 1) throw ConfigError("--seeds must be >= 1");
      const auto diffs = parse_difficulties(eval_difficulties);
      Checkpoint ck = checkpoint_load(checkpoint_path);
      auto recs = evaluate(*ck.agent, ck.config.env, eval_run_seed, eval_seeds, ck.next_episode, false, diffs);
      std::cout << kCsvHeader << '\n';
      for (const auto& r : recs) std::cout << csv_row(r) << '\n';
      print_summary(recs, std::cout);
    } else if (*bench_cmd) {
      auto kind = heuristics::parse_heuristic(heuristic_name);
      if (!kind) throw ConfigError("unknown heuristic '" + heuristic_name + "' (expected random, rr, jsq, lwl or sed)");
      if (bench_seeds < 1) throw ConfigError("--seeds must be >= 1");
      sim::EnvConfig env;
      env.jobs_per_episode = bench_jobs;
      try {
        env.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      HeuristicAgent agent(*kind, env.service_rates());
      std::cout << kCsvHeader << '\n';
      std::vector<EpisodeRecord> all;
      for (auto d : parse_difficulties(bench_difficulties)) {
        for (int j = 0; j < bench_seeds; ++j) {
          auto r = collect_episode(env, agent, workload::preset(d), eval_seed(bench_seed, d, 0, j), Mode::Eval).record;
          r.phase = Phase::Eval;
          r.difficulty = std::string(workload::to_string(d));
          std::cout << csv_row(r) << '\n';
          all.push_back(std::move(r));
        }
      }
      print_summary(all, std::cout);
    } else if (*plot_cmd) {
      if (plot_runs.empty() && plot_compare.empty()) throw ConfigError("plot needs --run or --compare");
      if (window < 1) throw ConfigError("--window must be >= 1");
      for (const auto& dir : plot_runs) {
        auto out = plot_run(dir, window);
        std::cout << out.svg << '\n' << out.csv << '\n';
      }
      if (!plot_compare.empty()) {
        std::map<std::string, std::vector<std::string>> panels;
        for (const auto& spec : plot_compare) {
          const auto eq = spec.find('=');
          if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
            throw ConfigError("--compare expects NAME=DIR[,DIR...], got '" + spec + "'");
          std::stringstream dirs(spec.substr(eq + 1));
          for (std::string d; std::getline(dirs, d, ',');)
            if (!d.empty()) panels[spec.substr(0, eq)].push_back(d);
        }
        auto out = plot_comparison(panels, plot_out, window);
        std::cout << out.svg << '\n' << out.csv << '\n';
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
