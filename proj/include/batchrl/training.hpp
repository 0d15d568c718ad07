#pragma once

// Offline (process model) and online (true plant, batch after batch) training
// loops shared by all agents.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "batchrl/agents.hpp"
#include "batchrl/env.hpp"
#include "batchrl/replay.hpp"

namespace batchrl {

struct TraceRow {
  PlantState state;  // state reached at the end of the control interval
  double action = 0.0;
  double reward = 0.0;
};

struct EpisodeTrace {
  std::vector<TraceRow> rows;
  std::string fault;  // empty when the episode ran to t_end
  std::size_t clamp_events = 0;
  std::size_t updates = 0;
  double mean_loss = 0.0;
  double wall_time_s = 0.0;

  bool ok() const { return fault.empty(); }
  std::vector<double> temperatures() const;
  std::vector<double> actions() const;
  std::vector<double> rewards() const;
};

struct TrainingOptions {
  std::size_t offline_episodes = 150;
  std::size_t replay_capacity = 100000;
  // Greedy evaluation every `eval_every` offline episodes; training stops once
  // `patience` consecutive evaluations fail to improve the best RMSE by
  // `min_delta` K. patience = 0 disables early stopping.
  std::size_t eval_every = 10;
  std::size_t patience = 5;
  double min_delta = 0.01;
  bool explore_online = true;

  bool operator==(const TrainingOptions&) const = default;
};

/// Runs one episode. Transitions go to `buffer` when non-null; the agent
/// learns after every step once the buffer holds enough transitions.
/// SimulationFault ends the episode early and is recorded in the trace;
/// TrainingDivergence propagates.
EpisodeTrace run_episode(Agent& agent, ControlEnv& env, ReplayBuffer* buffer, bool explore,
                         bool learn, Rng& rng);

struct EvalPoint {
  std::size_t episode = 0;
  double rmse = 0.0;
};

struct OfflineResult {
  ReplayBuffer e1;
  std::size_t episodes_run = 0;
  std::vector<EvalPoint> evals;
  std::vector<double> episode_rmse;
  bool stopped_early = false;
};

/// Offline stage against the nominal process model. The agent is trained in
/// place; the filled replay memory is returned.
OfflineResult train_offline(Agent& agent, const PlantConfig& plant, const RewardConfig& reward,
                            const ObservationScaling& scaling, const TrainingOptions& opts,
                            std::uint64_t seed);

/// Kinetics used for online batch `batch` (nominal when rel_sd == 0).
KineticParams batch_kinetics(const KineticParams& nominal, double rel_sd, std::uint64_t seed,
                             std::size_t batch);

using BatchCallback = std::function<void(std::size_t batch, const EpisodeTrace&, const Agent&)>;

/// Online stage: replay E2 is preloaded from E1, then each batch runs the full
/// act/step/store/learn cycle with the networks carried over between batches.
/// A batch that faults is the last one run.
std::vector<EpisodeTrace> train_online(Agent& agent, const ReplayBuffer& e1,
                                       const PlantConfig& plant, const RewardConfig& reward,
                                       const ObservationScaling& scaling,
                                       const TrainingOptions& opts, std::size_t batches,
                                       double b2b_rel_sd, std::uint64_t seed,
                                       const BatchCallback& on_batch = {});

}  // namespace batchrl
