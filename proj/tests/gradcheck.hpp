#pragma once

// Central finite-difference check of Mlp::backward, shared by the unit tests
// and the acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "batchrl/approx.hpp"

namespace batchrl::testing {

struct GradCheckResult {
  std::size_t probes = 0;
  double worst_rel = 0.0;
};

inline double rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

// Loss L = sum(U .* net(X)) for fixed random X and U, so dL/dy = U.
class GradProblem {
 public:
  GradProblem(Mlp<double>& net, std::size_t batch, std::uint64_t seed) : net_(net) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    x_.resize(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(net.input_size()));
    u_.resize(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(net.output_size()));
    for (Eigen::Index i = 0; i < x_.size(); ++i) x_.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < u_.size(); ++i) u_.data()[i] = n(rng);
  }

  // Difference of the loss at two points, summed term by term so the large
  // common part of the outputs cancels before accumulation.
  double loss_diff(const RowMatrix<double>& plus, const RowMatrix<double>& minus) const {
    return (u_.array() * (plus - minus).array()).sum();
  }

  GradCheckResult check_layer(std::size_t layer, std::size_t probes, std::uint64_t seed,
                              double h = 1e-5) {
    net_.zero_grad();
    net_.forward(x_);
    const RowMatrix<double> dx = net_.backward(u_);
    (void)dx;
    const auto w = net_.weights(layer);
    const auto b = net_.biases(layer);
    const std::size_t nw = w.size();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, nw + b.size() - 1);
    GradCheckResult res;
    for (std::size_t k = 0; k < probes; ++k) {
      const std::size_t idx = pick(rng);
      double* p = idx < nw ? w.data + idx : b.data() + (idx - nw);
      const double analytic = idx < nw ? net_.weight_grads(layer).data[idx]
                                       : net_.bias_grads(layer)[idx - nw];
      const double saved = *p;
      *p = saved + h;
      const RowMatrix<double> yp = net_.evaluate(x_);
      *p = saved - h;
      const RowMatrix<double> ym = net_.evaluate(x_);
      *p = saved;
      const double numeric = loss_diff(yp, ym) / (2.0 * h);
      res.worst_rel = std::max(res.worst_rel, rel_error(analytic, numeric));
      ++res.probes;
    }
    return res;
  }

  GradCheckResult check_input(std::size_t probes, std::uint64_t seed, double h = 1e-5) {
    net_.forward(x_);
    const RowMatrix<double> dx = net_.backward(u_, false);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, x_.size() - 1);
    GradCheckResult res;
    for (std::size_t k = 0; k < probes; ++k) {
      const Eigen::Index idx = pick(rng);
      RowMatrix<double> xp = x_, xm = x_;
      xp.data()[idx] += h;
      xm.data()[idx] -= h;
      const double numeric = loss_diff(net_.evaluate(xp), net_.evaluate(xm)) / (2.0 * h);
      res.worst_rel = std::max(res.worst_rel, rel_error(dx.data()[idx], numeric));
      ++res.probes;
    }
    return res;
  }

 private:
  Mlp<double>& net_;
  RowMatrix<double> x_;
  RowMatrix<double> u_;
};

}  // namespace batchrl::testing
