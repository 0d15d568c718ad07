#include "batchrl/training.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

#include "batchrl/kernels.hpp"
#include "batchrl/metrics.hpp"

namespace batchrl {

namespace {

constexpr std::uint64_t kOnlineStream = 0x6f6e6c696e65ULL;
constexpr std::uint64_t kPerturbStream = 0x70657274ULL;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::vector<double> EpisodeTrace::temperatures() const {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r.state.T_r);
  return v;
}

std::vector<double> EpisodeTrace::actions() const {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r.action);
  return v;
}

std::vector<double> EpisodeTrace::rewards() const {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r.reward);
  return v;
}

EpisodeTrace run_episode(Agent& agent, ControlEnv& env, ReplayBuffer* buffer, bool explore,
                         bool learn, Rng& rng) {
  const auto start = std::chrono::steady_clock::now();
  const kernels::FlushDenormals ftz;
  EpisodeTrace trace;
  trace.rows.reserve(env.steps_per_episode());
  std::vector<Real> obs = env.reset();
  double loss_sum = 0.0;
  const std::size_t ready = std::max(agent.warmup(), agent.batch_size());

  for (std::size_t k = 0; k < env.steps_per_episode(); ++k) {
    const Decision d = agent.act(obs, explore, rng);
    EnvStep st;
    try {
      st = env.step(d.action);
    } catch (const SimulationFault& fault) {
      trace.fault = fault.what();
      break;
    }
    trace.rows.push_back({env.state(), d.action, st.reward});
    if (buffer) {
      buffer->push({obs, {d.stored}, static_cast<Real>(st.reward), st.obs, st.done});
      if (learn && buffer->size() >= ready) {
        loss_sum += agent.learn(buffer->sample_batch(agent.batch_size(), rng), rng);
        ++trace.updates;
      }
    }
    obs = std::move(st.obs);
  }
  trace.clamp_events = env.clamp_events();
  trace.mean_loss = trace.updates ? loss_sum / static_cast<double>(trace.updates) : 0.0;
  trace.wall_time_s = seconds_since(start);
  return trace;
}

OfflineResult train_offline(Agent& agent, const PlantConfig& plant, const RewardConfig& reward,
                            const ObservationScaling& scaling, const TrainingOptions& opts,
                            std::uint64_t seed) {
  OfflineResult result{ReplayBuffer(opts.replay_capacity), 0, {}, {}, false};
  ControlEnv env(plant, reward, scaling);
  ControlEnv eval_env(plant, reward, scaling);
  Rng rng(seed);
  Rng eval_rng(seed ^ 0x5eedULL);

  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t ep = 0; ep < opts.offline_episodes; ++ep) {
    const EpisodeTrace trace = run_episode(agent, env, &result.e1, true, true, rng);
    ++result.episodes_run;
    result.episode_rmse.push_back(trace.rows.empty() ? std::numeric_limits<double>::infinity()
                                                     : rmse(trace.temperatures(), reward.t_ref));

    if (opts.eval_every == 0 || (ep + 1) % opts.eval_every != 0) continue;
    const EpisodeTrace eval = run_episode(agent, eval_env, nullptr, false, false, eval_rng);
    const double score = eval.ok() ? rmse(eval.temperatures(), reward.t_ref)
                                   : std::numeric_limits<double>::infinity();
    result.evals.push_back({ep + 1, score});
    if (score < best - opts.min_delta) {
      best = score;
      stale = 0;
    } else if (opts.patience > 0 && ++stale >= opts.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

KineticParams batch_kinetics(const KineticParams& nominal, double rel_sd, std::uint64_t seed,
                             std::size_t batch) {
  if (rel_sd == 0.0) return nominal;
  return perturb(nominal, rel_sd, seed ^ (kPerturbStream + 0x9e3779b97f4a7c15ULL * (batch + 1)));
}

std::vector<EpisodeTrace> train_online(Agent& agent, const ReplayBuffer& e1,
                                       const PlantConfig& plant, const RewardConfig& reward,
                                       const ObservationScaling& scaling,
                                       const TrainingOptions& opts, std::size_t batches,
                                       double b2b_rel_sd, std::uint64_t seed,
                                       const BatchCallback& on_batch) {
  ReplayBuffer e2(opts.replay_capacity);
  preload(e2, e1);
  Rng rng(seed ^ kOnlineStream);
  std::vector<EpisodeTrace> traces;
  traces.reserve(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    PlantConfig true_plant = plant;
    true_plant.params = batch_kinetics(plant.params, b2b_rel_sd, seed, b);
    ControlEnv env(true_plant, reward, scaling);
    traces.push_back(run_episode(agent, env, &e2, opts.explore_online, true, rng));
    if (on_batch) on_batch(b, traces.back(), agent);
    if (!traces.back().ok()) break;
  }
  return traces;
}

}  // namespace batchrl
