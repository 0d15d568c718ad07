#pragma once

// Dense kernels behind the network layers.
//
// Every kernel exists twice: the default implementation (Eigen products and
// OpenMP loops) and a plain serial implementation in `reference` kept for
// testing and benchmarking. Matrices are row-major views; a batch is stored one
// sample per row.

#include <cstddef>
#include <cstdint>
#include <span>

namespace batchrl::kernels {

enum class Backend { parallel, serial };

template <class T>
struct MatrixView {
  T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return rows * cols; }
};

template <class T>
using ConstMatrixView = MatrixView<const T>;

template <class T>
struct AdamHyper {
  T lr;
  T beta1;
  T beta2;
  T eps;
  std::int64_t step;  // 1-based step used for bias correction
};

// y = x * w^T + b. x: batch x in, w: out x in, b: out, y: batch x out.
template <class T>
void affine(ConstMatrixView<T> x, ConstMatrixView<T> w, std::span<const T> b, MatrixView<T> y);

// dw += dy^T * x, db += column sums of dy.
template <class T>
void affine_grad_params(ConstMatrixView<T> x, ConstMatrixView<T> dy, MatrixView<T> dw,
                        std::span<T> db);

// dx = dy * w.
template <class T>
void affine_grad_input(ConstMatrixView<T> dy, ConstMatrixView<T> w, MatrixView<T> dx);

template <class T>
void relu(MatrixView<T> y);

// dy *= (y > 0), y being the post-activation values.
template <class T>
void relu_grad(ConstMatrixView<T> y, MatrixView<T> dy);

// y = mid + half * tanh(y), mapping onto [lo, hi].
template <class T>
void scaled_tanh(MatrixView<T> y, T lo, T hi);

// dy *= half * (1 - tanh^2), recovered from the post-activation y.
template <class T>
void scaled_tanh_grad(ConstMatrixView<T> y, T lo, T hi, MatrixView<T> dy);

// Bias-corrected Adam on flat parameter/moment arrays.
template <class T>
void adam(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
          const AdamHyper<T>& hp);

// target = tau * source + (1 - tau) * target.
template <class T>
void polyak(std::span<T> target, std::span<const T> source, T tau);

// Sets flush-to-zero / denormals-are-zero for the calling thread while alive.
// Adam second moments of near-dead units decay into the subnormal range, where
// every multiply takes a microcode assist; training runs with this guard.
class FlushDenormals {
 public:
  FlushDenormals();
  ~FlushDenormals();
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

namespace reference {

template <class T>
void affine(ConstMatrixView<T> x, ConstMatrixView<T> w, std::span<const T> b, MatrixView<T> y);
template <class T>
void affine_grad_params(ConstMatrixView<T> x, ConstMatrixView<T> dy, MatrixView<T> dw,
                        std::span<T> db);
template <class T>
void affine_grad_input(ConstMatrixView<T> dy, ConstMatrixView<T> w, MatrixView<T> dx);
template <class T>
void relu(MatrixView<T> y);
template <class T>
void relu_grad(ConstMatrixView<T> y, MatrixView<T> dy);
template <class T>
void scaled_tanh(MatrixView<T> y, T lo, T hi);
template <class T>
void scaled_tanh_grad(ConstMatrixView<T> y, T lo, T hi, MatrixView<T> dy);
template <class T>
void adam(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
          const AdamHyper<T>& hp);
template <class T>
void polyak(std::span<T> target, std::span<const T> source, T tau);

}  // namespace reference

}  // namespace batchrl::kernels
