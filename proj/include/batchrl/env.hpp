#pragma once

// The reactor wrapped as an episodic control task: observation vector, reward
// bookkeeping and episode termination.

#include <cstddef>
#include <vector>

#include "batchrl/approx.hpp"
#include "batchrl/plant.hpp"
#include "batchrl/reward.hpp"

namespace batchrl {

/// Constants used to bring the observation features to roughly unit range.
struct ObservationScaling {
  double temp_center = 345.0;
  double temp_scale = 10.0;
  double err_scale = 5.0;
  double cum_err_scale = 300.0;

  bool operator==(const ObservationScaling&) const = default;
};

inline constexpr std::size_t kObservationSize = 5;

/// (T_r, T_j, t / t_end, e, cumulative |e|), each standardized.
std::vector<Real> observe(const PlantState& state, const RewardState& rs, double t_end,
                          double t_ref, const ObservationScaling& scaling);

struct EnvStep {
  std::vector<Real> obs;
  double reward = 0.0;
  double error = 0.0;
  bool done = false;
};

class ControlEnv {
 public:
  ControlEnv(PlantConfig plant, RewardConfig reward, ObservationScaling scaling = {});

  std::vector<Real> reset();

  /// Applies the jacket inlet temperature for one control interval. Throws
  /// SimulationFault if the plant faults and std::logic_error past t_end.
  EnvStep step(double action);

  const PlantState& state() const { return state_; }
  const RewardState& reward_state() const { return reward_state_; }
  const PlantConfig& plant() const { return plant_; }
  const RewardConfig& reward_config() const { return reward_; }
  std::size_t steps_per_episode() const { return plant_.steps_per_episode(); }
  std::size_t step_index() const { return step_index_; }
  std::size_t clamp_events() const { return diag_.clamp_events; }

 private:
  std::vector<Real> observation() const;

  PlantConfig plant_;
  RewardConfig reward_;
  ObservationScaling scaling_;
  PlantState state_;
  RewardState reward_state_;
  StepDiagnostics diag_;
  std::size_t step_index_ = 0;
};

}  // namespace batchrl
