#include "batchrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace batchrl {

double rmse(std::span<const double> temperatures, double t_ref) {
  if (temperatures.empty()) throw std::invalid_argument("rmse: empty trace");
  double sum = 0.0;
  for (double T : temperatures) sum += (T - t_ref) * (T - t_ref);
  return std::sqrt(sum / static_cast<double>(temperatures.size()));
}

double action_sd(std::span<const double> actions) {
  if (actions.empty()) return 0.0;
  const double n = static_cast<double>(actions.size());
  double mean = 0.0;
  for (double a : actions) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : actions) var += (a - mean) * (a - mean);
  return std::sqrt(var / n);
}

double control_effort(std::span<const double> actions, double dt_ctrl) {
  double sum = 0.0;
  for (double a : actions) sum += a * a;
  return sum * dt_ctrl;
}

MetricsRow summarize_last(std::span<const MetricsRow> rows, std::size_t window) {
  MetricsRow out;
  if (rows.empty() || window == 0) {
    out.fault = "no batches";
    return out;
  }
  const std::size_t n = std::min(window, rows.size());
  const auto tail = rows.subspan(rows.size() - n);
  for (const MetricsRow& r : tail) {
    out.rmse += r.rmse;
    out.action_sd += r.action_sd;
    out.control_effort += r.control_effort;
    out.mean_reward += r.mean_reward;
    out.wall_time_s += r.wall_time_s;
    if (!r.ok() && out.fault.empty()) out.fault = "batch " + std::to_string(r.batch) + ": " + r.fault;
  }
  const double k = static_cast<double>(n);
  out.rmse /= k;
  out.action_sd /= k;
  out.control_effort /= k;
  out.mean_reward /= k;
  out.wall_time_s /= k;
  out.batch = rows.back().batch;
  return out;
}

}  // namespace batchrl
