#pragma once

// Dense feed-forward networks with hand-written backpropagation and Adam.
//
// Parameters of all layers live in one flat array (per layer: weights as an
// out x in row-major block, then biases), with gradients and Adam moments in
// arrays of the same layout. That keeps target tracking, optimizer steps and
// checkpointing simple element-wise passes.

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "batchrl/kernels.hpp"

namespace batchrl {

/// Scalar type used by the training agents.
using Real = float;

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Parameter storage shares Eigen's alignment so vectorized products see the
// same peeling, and hence the same rounding, in every copy of a network.
template <class T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

enum class OutputActivation { linear, scaled_tanh };

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // input width first, output width last
  OutputActivation output = OutputActivation::linear;
  double out_lo = -1.0;  // scaled-tanh range
  double out_hi = 1.0;

  bool operator==(const MlpSpec&) const = default;
};

std::size_t parameter_count(const MlpSpec& spec);

template <class T>
class Mlp {
 public:
  using Matrix = RowMatrix<T>;

  Mlp() = default;
  /// All parameters zero.
  explicit Mlp(MlpSpec spec);

  /// Uniform fan-in initialization: every weight and bias of a layer drawn
  /// from U(-1/sqrt(n_in), 1/sqrt(n_in)).
  static Mlp init(MlpSpec spec, std::uint64_t seed);

  const MlpSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return spec_.layer_sizes.size() - 1; }
  std::size_t input_size() const { return spec_.layer_sizes.front(); }
  std::size_t output_size() const { return spec_.layer_sizes.back(); }

  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }
  std::span<T> grads() { return grads_; }
  std::span<const T> grads() const { return grads_; }

  kernels::MatrixView<T> weights(std::size_t layer);
  kernels::ConstMatrixView<T> weights(std::size_t layer) const;
  std::span<T> biases(std::size_t layer);
  std::span<const T> biases(std::size_t layer) const;
  kernels::MatrixView<T> weight_grads(std::size_t layer);
  std::span<T> bias_grads(std::size_t layer);

  void zero_grad();

  kernels::Backend backend() const { return backend_; }
  void set_backend(kernels::Backend b) { backend_ = b; }

  /// Batch forward pass (one sample per row). Caches the activations needed by
  /// backward().
  const Matrix& forward(const Matrix& x);

  /// Batch evaluation without touching the cache.
  Matrix evaluate(const Matrix& x) const { return run(x, nullptr); }

  /// Single-sample evaluation without touching the cache.
  std::vector<T> predict(std::span<const T> x) const;

  /// Reverse pass for the cached batch. Accumulates parameter gradients unless
  /// `param_grads` is false, and returns dL/dx. Consumes the cache.
  Matrix backward(const Matrix& upstream, bool param_grads = true);

  bool has_cache() const { return cache_valid_; }

  /// Parameter-for-parameter copy of another network of the same shape.
  void copy_params_from(const Mlp& other);

  void save(std::ostream& os) const;
  static Mlp load(std::istream& is);

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + spec_.layer_sizes[layer] * spec_.layer_sizes[layer + 1];
  }
  Matrix run(const Matrix& x, std::vector<Matrix>* acts) const;

  MlpSpec spec_;
  std::vector<std::size_t> offsets_;
  AlignedVector<T> params_;
  AlignedVector<T> grads_;
  kernels::Backend backend_ = kernels::Backend::parallel;

  std::vector<Matrix> acts_;  // acts_[0] = input, acts_[l+1] = output of layer l
  bool cache_valid_ = false;
};

template <class T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate)
      : m(n, T(0)), v(n, T(0)), lr(learning_rate) {}

  bool operator==(const AdamState&) const = default;

  void save(std::ostream& os) const;
  static AdamState load(std::istream& is);
};

/// One bias-corrected Adam update; increments st.step.
template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& st,
               kernels::Backend backend = kernels::Backend::parallel);

/// Polyak tracking: target <- tau * source + (1 - tau) * target.
template <class T>
void soft_update(Mlp<T>& target, const Mlp<T>& source, double tau);

/// Stacks row vectors into a batch matrix.
template <class T>
RowMatrix<T> stack_rows(std::span<const std::vector<T>> rows);

}  // namespace batchrl
