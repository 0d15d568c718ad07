// Command-line front end: train, evaluate, sweep and compare.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "batchrl/harness.hpp"

namespace fs = std::filesystem;
using namespace batchrl;

namespace {

constexpr int kExitFault = 1;
constexpr int kExitUsage = 2;

void print_summary(const ExperimentConfig& cfg, const ExperimentResult& r) {
  std::printf("%s/%s  seeds=%zu\n", to_string(cfg.agent).c_str(),
              to_string(cfg.reward.kind).c_str(), r.seeds.size());
  for (const auto& s : r.seeds) {
    std::printf("  seed %-6llu offline_eps=%-4zu rmse=%8.3f K  sd=%7.3f K  effort=%12.0f K^2 s%s%s\n",
                static_cast<unsigned long long>(s.seed), s.offline_episodes_run, s.summary.rmse,
                s.summary.action_sd, s.summary.control_effort, s.ok() ? "" : "  FAULT: ",
                s.fault.c_str());
  }
  std::printf("  mean          rmse=%8.3f K  sd=%7.3f K  effort=%12.0f K^2 s\n",
              r.mean_summary.rmse, r.mean_summary.action_sd, r.mean_summary.control_effort);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch reactor temperature control with TD3, DDPG and DQN"};
  app.require_subcommand(1);

  std::string config_path;
  std::string agent_name;
  std::string reward_name;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> offline_episodes;
  std::optional<std::size_t> batches;
  std::optional<double> b2b;
  std::string out_dir;

  auto* train = app.add_subcommand("train", "Offline + online training for one configuration");
  train->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--agent", agent_name, "td3 | ddpg | dqn")
      ->check(CLI::IsMember({"td3", "ddpg", "dqn"}));
  train->add_option("--reward", reward_name, "pi | pid")->check(CLI::IsMember({"pi", "pid"}));
  train->add_option("--seed", seed, "Run a single seed instead of the configured list");
  train->add_option("--offline-episodes", offline_episodes, "Override the offline episode budget");
  train->add_option("--batches", batches, "Override the number of online batches");
  train->add_option("--b2b", b2b, "Relative batch-to-batch variation of the kinetics");
  train->add_option("--out", out_dir, "Output directory (default: from the config)");

  std::string checkpoint;
  std::string trace_out;
  auto* evaluate = app.add_subcommand("evaluate", "Greedy episode of a checkpoint on the nominal plant");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--trace", trace_out, "Write the episode trace to this CSV");

  std::string sweep_config;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "Run the agent x reward grid of a config");
  sweep->add_option("--config", sweep_config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_out, "Output directory (default: from the config)");

  std::vector<std::string> run_dirs;
  std::string compare_csv;
  auto* cmp = app.add_subcommand("compare", "Side-by-side summary of finished runs");
  cmp->add_option("runs", run_dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--csv", compare_csv, "Also write the table as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      ExperimentConfig cfg = load_config(config_path);
      if (!agent_name.empty()) cfg.agent = parse_agent_kind(agent_name);
      if (!reward_name.empty()) cfg.reward.kind = parse_reward_kind(reward_name);
      if (seed) cfg.seeds = {*seed};
      if (offline_episodes) cfg.training.offline_episodes = *offline_episodes;
      if (batches) cfg.online_batches = *batches;
      if (b2b) cfg.b2b_variation = *b2b;
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      cfg.validate();
      const ExperimentResult r = run_experiment(cfg);
      print_summary(cfg, r);
      std::printf("outputs in %s\n", cfg.output_dir.string().c_str());
      return r.ok() ? 0 : kExitFault;
    }

    if (*evaluate) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const EpisodeTrace trace = evaluate_agent(*ck.agent, ck.config);
      if (!trace_out.empty()) write_trace_csv(trace_out, trace, ck.config.plant.t_ref);
      const MetricsRow m = batch_metrics(trace, 0, ck.config.plant);
      std::printf("%s/%s  rmse=%.3f K  sd=%.3f K  effort=%.0f K^2 s  final c_e=%.4f mol/L\n",
                  to_string(ck.agent->kind()).c_str(), to_string(ck.config.reward.kind).c_str(),
                  m.rmse, m.action_sd, m.control_effort,
                  trace.rows.empty() ? 0.0 : trace.rows.back().state.c_e);
      if (!trace.ok()) std::fprintf(stderr, "fault: %s\n", trace.fault.c_str());
      return trace.ok() ? 0 : kExitFault;
    }

    if (*sweep) {
      ExperimentConfig base = load_config(sweep_config);
      if (!sweep_out.empty()) base.output_dir = sweep_out;
      bool ok = true;
      std::vector<RunSummary> runs;
      for (const ExperimentConfig& cfg : expand_sweep(base)) {
        const ExperimentResult r = run_experiment(cfg);
        print_summary(cfg, r);
        ok = ok && r.ok();
        runs.push_back(load_run_summary(cfg.output_dir));
      }
      const ComparisonTable table = compare(runs);
      write_comparison_csv(base.output_dir / "comparison.csv", table);
      std::cout << '\n' << format_comparison(table);
      return ok ? 0 : kExitFault;
    }

    if (*cmp) {
      std::vector<RunSummary> runs;
      for (const auto& d : run_dirs) runs.push_back(load_run_summary(d));
      const ComparisonTable table = compare(runs);
      std::cout << format_comparison(table);
      if (!compare_csv.empty()) write_comparison_csv(compare_csv, table);
      const bool faulted = std::any_of(table.rows.begin(), table.rows.end(),
                                       [](const ComparisonRow& r) { return !r.summary.ok(); });
      return faulted ? kExitFault : 0;
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fault: %s\n", e.what());
    return kExitFault;
  }
  return kExitUsage;
}
