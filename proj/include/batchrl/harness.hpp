#pragma once

// Experiment orchestration: configuration files, the offline -> online
// pipeline over seeds, CSV outputs, checkpoints and run comparison.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "batchrl/agents.hpp"
#include "batchrl/env.hpp"
#include "batchrl/metrics.hpp"
#include "batchrl/training.hpp"

namespace batchrl {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kTraceHeader = 
    "t,c_tg,c_dg,c_mg,c_e,c_a,c_gl,T_r,T_j,t_ref,action,reward,penalty";
inline constexpr const char* kMetricsHeader =
    "seed,batch,rmse,action_sd,control_effort,mean_reward,fault";
inline constexpr const char* kSummaryHeader =
    "seed,agent,reward,rmse,action_sd,control_effort,mean_reward,fault";

struct ExperimentConfig {
  PlantConfig plant = default_plant_config();
  RewardConfig reward;
  ObservationScaling observation;
  AgentKind agent = AgentKind::td3;
  Td3Hyper td3;
  DqnHyper dqn;
  TrainingOptions training;
  std::size_t online_batches = 10;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double b2b_variation = 0.0;
  std::filesystem::path output_dir = "runs/default";
  // Grid expanded by the sweep command; empty means "the configured value".
  std::vector<AgentKind> sweep_agents;
  std::vector<RewardKind> sweep_rewards;

  /// Throws std::invalid_argument when any section is inconsistent.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

/// One configuration per (agent, reward) cell of the sweep grid, each with its
/// own output directory `<output_dir>/<agent>_<reward>`.
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& cfg);

/// Fresh agent of cfg.agent; DQN's epsilon schedule spans the offline stage.
std::unique_ptr<Agent> make_agent(const ExperimentConfig& cfg, std::uint64_t seed);

MetricsRow batch_metrics(const EpisodeTrace& trace, std::size_t batch, const PlantConfig& plant);

struct OfflineArtifacts {
  std::unique_ptr<Agent> agent;
  OfflineResult offline;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  MetricsRow summary;  // mean over the final four batches
  std::size_t offline_episodes_run = 0;
  std::string fault;

  bool ok() const { return fault.empty(); }
};

struct ExperimentResult {
  std::vector<SeedResult> seeds;  // in config seed order
  MetricsRow mean_summary;        // seed average of the per-seed summaries

  bool ok() const;
};

struct RunOptions {
  bool write_outputs = true;
  bool parallel_seeds = true;
};

/// Offline stage for one seed (agent construction + train_offline).
OfflineArtifacts run_offline_stage(const ExperimentConfig& cfg, std::uint64_t seed);

/// Online stage for one seed, starting from a copy of the offline agent and
/// replay memory. Writes traces and checkpoints below `seed_dir` if non-empty.
SeedResult run_online_stage(const ExperimentConfig& cfg, std::uint64_t seed,
                            const OfflineArtifacts& offline,
                            const std::filesystem::path& seed_dir = {});

/// For each seed: offline training, checkpoint, online batches, metrics.
/// A fault in one seed is recorded and the remaining seeds still run.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

void write_trace_csv(const std::filesystem::path& path, const EpisodeTrace& trace, double t_ref);
void write_metrics_csv(const std::filesystem::path& path, const ExperimentResult& result);
void write_summary_csv(const std::filesystem::path& path, const ExperimentConfig& cfg,
                       const ExperimentResult& result);

void save_checkpoint(const std::filesystem::path& path, const Agent& agent,
                     const ExperimentConfig& cfg);

struct Checkpoint {
  ExperimentConfig config;
  std::unique_ptr<Agent> agent;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Greedy (noise-free) episode of a trained agent on the nominal plant.
EpisodeTrace evaluate_agent(const Agent& agent, const ExperimentConfig& cfg);

struct RunSummary {
  std::filesystem::path dir;
  AgentKind agent = AgentKind::td3;
  RewardKind reward = RewardKind::pid;
  double b2b_variation = 0.0;
  MetricsRow summary;
  nlohmann::json plant;
};

/// Reads config.json and the seed-mean row of summary.csv from a run directory.
RunSummary load_run_summary(const std::filesystem::path& dir);

struct ComparisonRow {
  std::string label;
  MetricsRow summary;
  double d_rmse = 0.0;  // differences against the first run
  double d_action_sd = 0.0;
  double d_control_effort = 0.0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::vector<RunSummary> runs;
};

/// Side-by-side summary of runs sharing one plant configuration.
/// Throws std::invalid_argument on mismatched plants or fewer than one run.
ComparisonTable compare(const std::vector<RunSummary>& runs);

std::string format_comparison(const ComparisonTable& table);
void write_comparison_csv(const std::filesystem::path& path, const ComparisonTable& table);

}  // namespace batchrl
