#include "batchrl/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace batchrl {

namespace {

void require_finite(double e) {
  if (!std::isfinite(e)) throw std::domain_error("reward: non-finite tracking error");
}

RewardState advance(const RewardState& rs, double e) {
  return {rs.cum_abs_err + std::abs(e), e, true};
}

}  // namespace

std::string to_string(RewardKind kind) { return kind == RewardKind::pi ? "pi" : "pid"; }

RewardKind parse_reward_kind(const std::string& name) {
  if (name == "pi" || name == "PI") return RewardKind::pi;
  if (name == "pid" || name == "PID") return RewardKind::pid;
  throw std::invalid_argument("unknown reward kind: " + name);
}

void RewardConfig::validate() const {
  if (!(threshold > 0.0)) throw std::invalid_argument("reward: threshold must be positive");
  if (!(eps > 0.0)) throw std::invalid_argument("reward: eps must be positive");
}

double tracking_error(double T_r, const RewardConfig& cfg) { return T_r - cfg.t_ref; }

double guarded_inverse(double x, double eps) { return 1.0 / std::max(x, eps); }

double penalty(double e) { return std::abs(e); }

RewardOutcome pi_reward(double e, const RewardState& rs, const RewardConfig& cfg) {
  require_finite(e);
  const auto& c = cfg.c_pi;
  const double abs_e = std::abs(e);
  const double s_inv = guarded_inverse(rs.cum_abs_err, cfg.eps);
  double r;
  if (abs_e < cfg.threshold) {
    r = c[0] + c[1] * guarded_inverse(abs_e, cfg.eps) + c[2] * s_inv;
  } else {
    r = c[3] + c[4] * s_inv;
  }
  return {r, advance(rs, e)};
}

RewardOutcome pid_reward(double e, const RewardState& rs, const RewardConfig& cfg) {
  require_finite(e);
  const auto& c = cfg.c_pid;
  const double abs_e = std::abs(e);
  const double abs_de = rs.initialized ? std::abs(e - rs.prev_err) : 0.0;
  const double s_inv = guarded_inverse(rs.cum_abs_err, cfg.eps);
  double r;
  if (abs_e < cfg.threshold) {
    r = c[0] + c[1] * guarded_inverse(abs_e, cfg.eps) + c[2] * s_inv +
        c[3] * guarded_inverse(c[4] + abs_de, cfg.eps);
  } else {
    const double integral = cfg.pid_outer_inverse ? s_inv : rs.cum_abs_err;
    r = c[5] + c[6] * integral + c[7] * guarded_inverse(c[8] + abs_de, cfg.eps);
  }
  return {r, advance(rs, e)};
}

RewardOutcome compute_reward(double e, const RewardState& rs, const RewardConfig& cfg) {
  return cfg.kind == RewardKind::pi ? pi_reward(e, rs, cfg) : pid_reward(e, rs, cfg);
}

}  // namespace batchrl
