#pragma once

// Per-batch control metrics.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace batchrl {

/// sqrt(mean((T_r(k) - t_ref)^2)). Throws std::invalid_argument on an empty trace.
double rmse(std::span<const double> temperatures, double t_ref);

/// Population standard deviation of the actions of one batch.
double action_sd(std::span<const double> actions);

/// sum_k a(k)^2 * dt_ctrl (rectangle rule on the zero-order-hold input).
double control_effort(std::span<const double> actions, double dt_ctrl);

struct MetricsRow {
  std::size_t batch = 0;
  double rmse = 0.0;            // K
  double action_sd = 0.0;       // K
  double control_effort = 0.0;  // K^2 s
  double mean_reward = 0.0;
  double wall_time_s = 0.0;
  std::string fault;  // empty when the batch completed

  bool ok() const { return fault.empty(); }
};

/// Number of trailing batches averaged into reported summaries.
inline constexpr std::size_t kSummaryWindow = 4;

/// Mean of the metric columns over the last four rows (fewer if fewer exist).
/// Faulted rows inside the window propagate their fault text.
MetricsRow summarize_last(std::span<const MetricsRow> rows, std::size_t window = kSummaryWindow);

}  // namespace batchrl
