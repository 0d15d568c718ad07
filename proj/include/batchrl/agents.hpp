#pragma once

// TD3, DDPG and DQN agents.
//
// Continuous agents act in a normalized action space u in [-1, 1], mapped
// affinely onto [action_min, action_max]; exploration and target-smoothing
// noise scales are expressed in that space. DDPG is the TD3 update path run
// with a single critic, policy_freq = 1 and no target smoothing noise.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "batchrl/approx.hpp"
#include "batchrl/replay.hpp"

namespace batchrl {

using Rng = std::mt19937_64;

enum class AgentKind { td3, ddpg, dqn };

std::string to_string(AgentKind kind);
AgentKind parse_agent_kind(const std::string& name);

/// Monotone map applied to environment rewards before they enter a bootstrap
/// target. symlog(r) = sign(r) log(1 + |r|) compresses the heavy tail of the
/// inverse-error rewards while preserving their ordering.
enum class RewardTransform { identity, symlog };

std::string to_string(RewardTransform t);
RewardTransform parse_reward_transform(const std::string& name);

/// scale * f(r).
double shape_reward(double r, RewardTransform f, double scale);

/// Raised when a loss or target becomes non-finite.
class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// What an agent decided for one observation: the action sent to the plant (K)
/// and the value stored in replay (normalized action or discrete index).
struct Decision {
  double action = 0.0;
  Real stored = 0;
};

class Agent {
 public:
  virtual ~Agent() = default;

  virtual AgentKind kind() const = 0;
  virtual Decision act(std::span<const Real> obs, bool explore, Rng& rng) = 0;
  /// One gradient update from a replay minibatch; returns the loss.
  virtual double learn(const Batch& batch, Rng& rng) = 0;
  virtual std::size_t batch_size() const = 0;
  /// Transitions required in replay before learn() is called.
  virtual std::size_t warmup() const = 0;
  virtual std::unique_ptr<Agent> clone() const = 0;
  virtual void save(std::ostream& os) const = 0;
};

/// Reads any agent written by Agent::save.
std::unique_ptr<Agent> load_agent(std::istream& is);

struct Td3Hyper {
  double gamma = 0.99;
  double sigma_explore = 0.1;
  double sigma_policy = 0.2;
  double noise_clip = 0.5;
  double tau = 0.005;
  std::size_t policy_freq = 2;
  double lr_actor = 1e-3;
  double lr_critic = 1e-3;
  std::size_t batch_size = 100;
  std::size_t warmup = 1000;
  // The first `random_steps` exploring actions are drawn uniformly over the
  // action range instead of from the (untrained) actor.
  std::size_t random_steps = 1000;
  std::size_t num_critics = 2;
  double action_min = 330.0;
  double action_max = 350.0;
  std::vector<std::size_t> hidden{400, 300};
  OutputActivation actor_output = OutputActivation::scaled_tanh;
  RewardTransform reward_transform = RewardTransform::symlog;
  double reward_scale = 1.0;

  bool operator==(const Td3Hyper&) const = default;

  void validate() const;
};

/// The DDPG special case of a TD3 configuration.
Td3Hyper ddpg_hyper(Td3Hyper base);

class Td3Agent final : public Agent {
 public:
  using Matrix = RowMatrix<Real>;

  Td3Agent(std::size_t obs_dim, Td3Hyper hyper, std::uint64_t seed);

  AgentKind kind() const override;
  Decision act(std::span<const Real> obs, bool explore, Rng& rng) override;
  double learn(const Batch& batch, Rng& rng) override;
  std::size_t batch_size() const override { return hyper_.batch_size; }
  std::size_t warmup() const override { return hyper_.warmup; }
  std::unique_ptr<Agent> clone() const override { return std::make_unique<Td3Agent>(*this); }
  void save(std::ostream& os) const override;
  static Td3Agent load_body(std::istream& is);

  /// a = clip(mu(s) + eps, a_min, a_max), eps ~ N(0, sigma_explore) when
  /// exploring. Returns Kelvin.
  double select_action(std::span<const Real> obs, bool explore, Rng& rng);

  /// Smoothed target actions (normalized) for a batch of next states.
  Matrix target_actions(const Matrix& s_next, Rng& rng) const;
  /// Same with the raw (pre-clip) noise supplied, one entry per row.
  Matrix target_actions(const Matrix& s_next, std::span<const Real> noise) const;

  /// TV = shape(r) + gamma * (1 - done) * min_i Q_target_i(s', a~).
  std::vector<Real> target_values(const Batch& batch, Rng& rng) const;
  std::vector<Real> target_values(const Batch& batch, std::span<const Real> noise) const;
  /// Per-critic target Q values used by target_values (rows = critics).
  std::vector<std::vector<Real>> target_q(const Batch& batch, std::span<const Real> noise) const;

  /// Steps every critic once on the summed MSE against fixed targets.
  double critic_update(const Batch& batch, std::span<const Real> targets);
  double critic_update(const Batch& batch, Rng& rng);

  /// Gradient ascent on mean Q1(s, mu(s)) for the actor only.
  void actor_update(const Batch& batch);

  /// Polyak step of every target network.
  void soft_update();

  double normalize_action(double kelvin) const;
  double denormalize_action(double u) const;

  const Td3Hyper& hyper() const { return hyper_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t update_count() const { return updates_; }
  std::size_t actor_update_count() const { return actor_updates_; }
  std::size_t explore_steps() const { return explore_steps_; }

  Mlp<Real>& actor() { return actor_; }
  const Mlp<Real>& actor() const { return actor_; }
  const Mlp<Real>& actor_target() const { return actor_target_; }
  Mlp<Real>& critic(std::size_t i) { return critics_.at(i); }
  const Mlp<Real>& critic(std::size_t i) const { return critics_.at(i); }
  const Mlp<Real>& critic_target(std::size_t i) const { return critic_targets_.at(i); }
  std::size_t num_critics() const { return critics_.size(); }

 private:
  Td3Agent() = default;
  Matrix critic_input(const Matrix& s, const Matrix& a) const;

  std::size_t obs_dim_ = 0;
  Td3Hyper hyper_;
  Mlp<Real> actor_;
  Mlp<Real> actor_target_;
  std::vector<Mlp<Real>> critics_;
  std::vector<Mlp<Real>> critic_targets_;
  AdamState<Real> actor_opt_;
  std::vector<AdamState<Real>> critic_opts_;
  std::size_t updates_ = 0;
  std::size_t actor_updates_ = 0;
  std::size_t explore_steps_ = 0;
};

struct DqnHyper {
  double gamma = 0.99;
  double lr = 1e-3;
  std::size_t batch_size = 100;
  std::size_t warmup = 1000;
  std::size_t target_period = 500;
  double eps_start = 1.0;
  double eps_end = 0.05;
  std::size_t eps_decay_steps = 45000;
  double action_min = 330.0;
  double action_max = 360.0;
  double action_step = 0.75;
  std::vector<std::size_t> hidden{400, 300};
  RewardTransform reward_transform = RewardTransform::symlog;
  double reward_scale = 1.0;

  bool operator==(const DqnHyper&) const = default;

  void validate() const;
};

/// Sorted table action_min, action_min + step, ..., action_max.
std::vector<double> make_action_table(double lo, double hi, double step);

class DqnAgent final : public Agent {
 public:
  using Matrix = RowMatrix<Real>;

  DqnAgent(std::size_t obs_dim, DqnHyper hyper, std::uint64_t seed);

  AgentKind kind() const override { return AgentKind::dqn; }
  Decision act(std::span<const Real> obs, bool explore, Rng& rng) override;
  double learn(const Batch& batch, Rng& rng) override;
  std::size_t batch_size() const override { return hyper_.batch_size; }
  std::size_t warmup() const override { return hyper_.warmup; }
  std::unique_ptr<Agent> clone() const override { return std::make_unique<DqnAgent>(*this); }
  void save(std::ostream& os) const override;
  static DqnAgent load_body(std::istream& is);

  std::size_t greedy_index(std::span<const Real> obs) const;
  /// Current epsilon of the linear annealing schedule.
  double epsilon() const;

  /// MSE between Q(s, a) and r + gamma (1 - done) max_a' Q_target(s', a'),
  /// one Adam step, and a hard target copy every target_period updates.
  double dqn_update(const Batch& batch);

  const std::vector<double>& action_table() const { return table_; }
  const DqnHyper& hyper() const { return hyper_; }
  std::size_t update_count() const { return updates_; }
  std::size_t explore_steps() const { return explore_steps_; }
  Mlp<Real>& policy() { return policy_; }
  const Mlp<Real>& policy() const { return policy_; }
  const Mlp<Real>& target() const { return target_; }

 private:
  DqnAgent() = default;

  std::size_t obs_dim_ = 0;
  DqnHyper hyper_;
  std::vector<double> table_;
  Mlp<Real> policy_;
  Mlp<Real> target_;
  AdamState<Real> opt_;
  std::size_t updates_ = 0;
  std::size_t explore_steps_ = 0;
};

}  // namespace batchrl
