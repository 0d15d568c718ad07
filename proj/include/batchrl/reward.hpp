#pragma once

// Setpoint-tracking rewards shaped after PI and PID control laws.
//
// With f(e) = |e| and g(x) = 1 / max(x, eps):
//   PI : |e| < thr ? c1 + c2 g(|e|) + c3 g(S)       : c4 + c5 g(S)
//   PID: |e| < thr ? c1 + c2 g(|e|) + c3 g(S) + c4 g(c5 + |de|)
//                  : c6 + c7 g(S)               + c8 g(c9 + |de|)
// where S is the sum of |e| over all earlier steps of the episode and de the
// change in error since the previous step (zero on the first step).

#include <array>
#include <string>

namespace batchrl {

enum class RewardKind { pi, pid };

std::string to_string(RewardKind kind);
RewardKind parse_reward_kind(const std::string& name);

struct RewardConfig {
  RewardKind kind = RewardKind::pid;
  double threshold = 5.0;
  std::array<double, 5> c_pi{0.0, 10.0, 100.0, 0.05, 100.0};
  std::array<double, 9> c_pid{0.0, 10.0, 100.0, 1.0, 1.0, 0.05, 100.0, 1.0, 1.0};
  double eps = 1e-3;
  double t_ref = 345.0;
  // false: the PID outer branch uses c7 * S literally instead of c7 * g(S).
  bool pid_outer_inverse = true;

  bool operator==(const RewardConfig&) const = default;

  void validate() const;
};

struct RewardState {
  double cum_abs_err = 0.0;
  double prev_err = 0.0;
  bool initialized = false;

  bool operator==(const RewardState&) const = default;
};

struct RewardOutcome {
  double reward = 0.0;
  RewardState state;
};

/// e = T_r - t_ref (signed).
double tracking_error(double T_r, const RewardConfig& cfg);

/// Guarded inverse 1 / max(x, eps).
double guarded_inverse(double x, double eps);

RewardOutcome pi_reward(double e, const RewardState& rs, const RewardConfig& cfg);
RewardOutcome pid_reward(double e, const RewardState& rs, const RewardConfig& cfg);

/// Dispatches on cfg.kind.
RewardOutcome compute_reward(double e, const RewardState& rs, const RewardConfig& cfg);

/// Per-step penalty f(e) = |e|, emitted for plotting.
double penalty(double e);

}  // namespace batchrl
