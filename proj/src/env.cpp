#include "batchrl/env.hpp"

#include <cmath>
#include <stdexcept>

namespace batchrl {

std::vector<Real> observe(const PlantState& state, const RewardState& rs, double t_end,
                          double t_ref, const ObservationScaling& sc) {
  const double e = state.T_r - t_ref;
  return {static_cast<Real>((state.T_r - sc.temp_center) / sc.temp_scale),
          static_cast<Real>((state.T_j - sc.temp_center) / sc.temp_scale),
          static_cast<Real>(state.t / t_end),
          static_cast<Real>(e / sc.err_scale),
          static_cast<Real>(rs.cum_abs_err / sc.cum_err_scale)};
}

ControlEnv::ControlEnv(PlantConfig plant, RewardConfig reward, ObservationScaling scaling)
    : plant_(std::move(plant)), reward_(reward), scaling_(scaling) {
  plant_.validate();
  reward_.validate();
  reset();
}

std::vector<Real> ControlEnv::reset() {
  state_ = batchrl::reset(plant_);
  reward_state_ = {};
  diag_ = {};
  step_index_ = 0;
  return observation();
}

std::vector<Real> ControlEnv::observation() const {
  return observe(state_, reward_state_, plant_.t_end, reward_.t_ref, scaling_);
}

EnvStep ControlEnv::step(double action) {
  if (step_index_ >= steps_per_episode()) throw std::logic_error("env: episode already finished");
  if (!std::isfinite(action)) throw SimulationFault("env: non-finite action");
  state_ = batchrl::step(state_, action, plant_, &diag_);
  ++step_index_;
  const double e = tracking_error(state_.T_r, reward_);
  const RewardOutcome out = compute_reward(e, reward_state_, reward_);
  reward_state_ = out.state;
  return {observation(), out.reward, e, step_index_ == steps_per_episode()};
}

}  // namespace batchrl
