#pragma once

// Closed-form reward laws with the default constants and the twenty-point
// (e, S, de) table shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>

#include "batchrl/reward.hpp"

namespace batchrl::testing {

struct RewardCase {
  double e;
  double S;
  double de;
};

// Twenty (e, S, de) points covering both branches, the eps guard on |e| and S,
// the threshold edge and both signs of e and de.
inline constexpr RewardCase kRewardTable[] = {
    {1.0, 10.0, -0.5},  {10.0, 100.0, 0.0},   {0.0, 0.0, 0.0},     {-1.0, 10.0, 0.5},
    {4.999, 3.0, 1.0},  {5.0, 3.0, 1.0},      {-5.0, 3.0, -1.0},   {0.0005, 0.02, 0.0},
    {-0.0005, 0.0, 2.0}, {2.5, 0.0005, -3.0}, {0.3, 250.0, 0.01},  {-0.3, 250.0, -0.01},
    {7.2, 0.0, 0.0},    {-12.0, 4000.0, 9.0}, {3.75, 61.5, -0.25}, {-4.2, 17.0, 6.1},
    {0.001, 1e-3, 0.0}, {6.0, 1e-4, 0.5},     {-0.75, 0.75, 0.75}, {1e-6, 1e6, -1e-6},
};

// Direct transcriptions of the two reward laws with the default constants.
inline double oracle_pi(double e, double S) {
  const double eps = 1e-3;
  const double ae = std::fabs(e);
  if (ae < 5.0) return 0.0 + 10.0 / std::max(ae, eps) + 100.0 / std::max(S, eps);
  return 0.05 + 100.0 / std::max(S, eps);
}

inline double oracle_pid(double e, double S, double de) {
  const double eps = 1e-3;
  const double ae = std::fabs(e);
  const double ad = std::fabs(de);
  if (ae < 5.0)
    return 0.0 + 10.0 / std::max(ae, eps) + 100.0 / std::max(S, eps) + 1.0 / (1.0 + ad);
  return 0.05 + 100.0 / std::max(S, eps) + 1.0 / (1.0 + ad);
}

inline RewardState state_for(double e, double S, double de) {
  RewardState rs;
  rs.cum_abs_err = S;
  rs.prev_err = e - de;
  rs.initialized = true;
  return rs;
}

}  // namespace batchrl::testing
