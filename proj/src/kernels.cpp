#include "batchrl/kernels.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace batchrl::kernels {

#if defined(__SSE__)
FlushDenormals::FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
FlushDenormals::~FlushDenormals() { _mm_setcsr(saved_); }
#else
FlushDenormals::FlushDenormals() = default;
FlushDenormals::~FlushDenormals() = default;
#endif

namespace {

// Below this many elements the OpenMP fork costs more than the loop.
constexpr std::size_t kParallelThreshold = std::size_t{1} << 15;

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<const RowMatrix<T>> map(ConstMatrixView<T> m) {
  return {m.data, static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

template <class T>
Eigen::Map<RowMatrix<T>> map(MatrixView<T> m) {
  return {m.data, static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

template <class T>
Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> map_row(std::span<const T> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

template <class T>
Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> map_row(std::span<T> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

template <class T>
void check_affine(ConstMatrixView<T> x, ConstMatrixView<T> w, std::size_t b, MatrixView<T> y) {
  check(x.cols == w.cols && b == w.rows && y.rows == x.rows && y.cols == w.rows,
        "affine: shape mismatch");
}

template <class T>
void check_grad_params(ConstMatrixView<T> x, ConstMatrixView<T> dy, MatrixView<T> dw,
                       std::size_t db) {
  check(x.rows == dy.rows && dw.rows == dy.cols && dw.cols == x.cols && db == dy.cols,
        "affine_grad_params: shape mismatch");
}

template <class T>
void check_grad_input(ConstMatrixView<T> dy, ConstMatrixView<T> w, MatrixView<T> dx) {
  check(dy.cols == w.rows && dx.rows == dy.rows && dx.cols == w.cols,
        "affine_grad_input: shape mismatch");
}

template <class T>
T adam_element(T& p, T g, T& m, T& v, const AdamHyper<T>& hp, T step_size, T bc2_sqrt) {
  m = hp.beta1 * m + (T(1) - hp.beta1) * g;
  v = hp.beta2 * v + (T(1) - hp.beta2) * g * g;
  p -= step_size * m / (std::sqrt(v) / bc2_sqrt + hp.eps);
  return p;
}

template <class T>
void adam_checks(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 const AdamHyper<T>& hp) {
  check(params.size() == grads.size() && params.size() == m.size() && params.size() == v.size(),
        "adam: shape mismatch");
  check(hp.step >= 1, "adam: step must be >= 1");
}

}  // namespace

template <class T>
void affine(ConstMatrixView<T> x, ConstMatrixView<T> w, std::span<const T> b, MatrixView<T> y) {
  check_affine(x, w, b.size(), y);
  auto out = map(y);
  out.noalias() = map(x) * map(w).transpose();
  out.rowwise() += map_row(b);
}

template <class T>
void affine_grad_params(ConstMatrixView<T> x, ConstMatrixView<T> dy, MatrixView<T> dw,
                        std::span<T> db) {
  check_grad_params(x, dy, dw, db.size());
  map(dw).noalias() += map(dy).transpose() * map(x);
  map_row(db) += map(dy).colwise().sum();
}

template <class T>
void affine_grad_input(ConstMatrixView<T> dy, ConstMatrixView<T> w, MatrixView<T> dx) {
  check_grad_input(dy, w, dx);
  map(dx).noalias() = map(dy) * map(w);
}

template <class T>
void relu(MatrixView<T> y) {
  const std::size_t n = y.size();
  T* d = y.data;
#pragma omp parallel for simd if (n > kParallelThreshold)
  for (std::size_t i = 0; i < n; ++i) d[i] = d[i] > T(0) ? d[i] : T(0);
}

template <class T>
void relu_grad(ConstMatrixView<T> y, MatrixView<T> dy) {
  check(y.rows == dy.rows && y.cols == dy.cols, "relu_grad: shape mismatch");
  const std::size_t n = y.size();
  const T* a = y.data;
  T* g = dy.data;
#pragma omp parallel for simd if (n > kParallelThreshold)
  for (std::size_t i = 0; i < n; ++i) g[i] = a[i] > T(0) ? g[i] : T(0);
}

template <class T>
void scaled_tanh(MatrixView<T> y, T lo, T hi) {
  const T mid = (hi + lo) / T(2);
  const T half = (hi - lo) / T(2);
  const std::size_t n = y.size();
  T* d = y.data;
#pragma omp parallel for if (n > kParallelThreshold)
  for (std::size_t i = 0; i < n; ++i) d[i] = mid + half * std::tanh(d[i]);
}

template <class T>
void scaled_tanh_grad(ConstMatrixView<T> y, T lo, T hi, MatrixView<T> dy) {
  check(y.rows == dy.rows && y.cols == dy.cols, "scaled_tanh_grad: shape mismatch");
  const T mid = (hi + lo) / T(2);
  const T half = (hi - lo) / T(2);
  const std::size_t n = y.size();
  const T* a = y.data;
  T* g = dy.data;
#pragma omp parallel for simd if (n > kParallelThreshold)
  for (std::size_t i = 0; i < n; ++i) {
    const T th = (a[i] - mid) / half;
    g[i] *= half * (T(1) - th * th);
  }
}

template <class T>
void adam(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
          const AdamHyper<T>& hp) {
  adam_checks(params, grads, m, v, hp);
  const T step_size =
      hp.lr / (T(1) - static_cast<T>(std::pow(static_cast<double>(hp.beta1), hp.step)));
  const T bc2_sqrt =
      static_cast<T>(std::sqrt(1.0 - std::pow(static_cast<double>(hp.beta2), hp.step)));
  const std::size_t n = params.size();
  T* p = params.data();
  const T* g = grads.data();
  T* mm = m.data();
  T* vv = v.data();
#pragma omp parallel for simd if (n > kParallelThreshold)
  for (std::size_t i = 0; i < n; ++i) adam_element(p[i], g[i], mm[i], vv[i], hp, step_size, bc2_sqrt);
}

template <class T>
void polyak(std::span<T> target, std::span<const T> source, T tau) {
  check(target.size() == source.size(), "polyak: shape mismatch");
  const std::size_t n = target.size();
  T* t = target.data();
  const T* s = source.data();
  const T keep = T(1) - tau;
#pragma omp parallel for simd if (n > kParallelThreshold)
  for (std::size_t i = 0; i < n; ++i) t[i] = tau * s[i] + keep * t[i];
}

namespace reference {

template <class T>
void affine(ConstMatrixView<T> x, ConstMatrixView<T> w, std::span<const T> b, MatrixView<T> y) {
  check_affine(x, w, b.size(), y);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t o = 0; o < w.rows; ++o) {
      T acc = b[o];
      for (std::size_t i = 0; i < x.cols; ++i) acc += x(r, i) * w(o, i);
      y(r, o) = acc;
    }
  }
}

template <class T>
void affine_grad_params(ConstMatrixView<T> x, ConstMatrixView<T> dy, MatrixView<T> dw,
                        std::span<T> db) {
  check_grad_params(x, dy, dw, db.size());
  for (std::size_t o = 0; o < dy.cols; ++o) {
    for (std::size_t i = 0; i < x.cols; ++i) {
      T acc = 0;
      for (std::size_t r = 0; r < x.rows; ++r) acc += dy(r, o) * x(r, i);
      dw(o, i) += acc;
    }
    T acc = 0;
    for (std::size_t r = 0; r < dy.rows; ++r) acc += dy(r, o);
    db[o] += acc;
  }
}

template <class T>
void affine_grad_input(ConstMatrixView<T> dy, ConstMatrixView<T> w, MatrixView<T> dx) {
  check_grad_input(dy, w, dx);
  for (std::size_t r = 0; r < dy.rows; ++r) {
    for (std::size_t i = 0; i < w.cols; ++i) {
      T acc = 0;
      for (std::size_t o = 0; o < w.rows; ++o) acc += dy(r, o) * w(o, i);
      dx(r, i) = acc;
    }
  }
}

template <class T>
void relu(MatrixView<T> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = y.data[i] > T(0) ? y.data[i] : T(0);
}

template <class T>
void relu_grad(ConstMatrixView<T> y, MatrixView<T> dy) {
  check(y.rows == dy.rows && y.cols == dy.cols, "relu_grad: shape mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y.data[i] > T(0))) dy.data[i] = T(0);
  }
}

template <class T>
void scaled_tanh(MatrixView<T> y, T lo, T hi) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    y.data[i] = (hi + lo) / T(2) + (hi - lo) / T(2) * std::tanh(y.data[i]);
  }
}

template <class T>
void scaled_tanh_grad(ConstMatrixView<T> y, T lo, T hi, MatrixView<T> dy) {
  check(y.rows == dy.rows && y.cols == dy.cols, "scaled_tanh_grad: shape mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T th = (y.data[i] - (hi + lo) / T(2)) / ((hi - lo) / T(2));
    dy.data[i] *= (hi - lo) / T(2) * (T(1) - th * th);
  }
}

template <class T>
void adam(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
          const AdamHyper<T>& hp) {
  adam_checks(params, grads, m, v, hp);
  const T step_size =
      hp.lr / (T(1) - static_cast<T>(std::pow(static_cast<double>(hp.beta1), hp.step)));
  const T bc2_sqrt =
      static_cast<T>(std::sqrt(1.0 - std::pow(static_cast<double>(hp.beta2), hp.step)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_element(params[i], grads[i], m[i], v[i], hp, step_size, bc2_sqrt);
  }
}

template <class T>
void polyak(std::span<T> target, std::span<const T> source, T tau) {
  check(target.size() == source.size(), "polyak: shape mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i] = tau * source[i] + (T(1) - tau) * target[i];
  }
}

}  // namespace reference

#define BATCHRL_INSTANTIATE_KERNELS(NS, T)                                                        \
  template void NS::affine<T>(ConstMatrixView<T>, ConstMatrixView<T>, std::span<const T>,         \
                              MatrixView<T>);                                                     \
  template void NS::affine_grad_params<T>(ConstMatrixView<T>, ConstMatrixView<T>, MatrixView<T>,  \
                                          std::span<T>);                                          \
  template void NS::affine_grad_input<T>(ConstMatrixView<T>, ConstMatrixView<T>, MatrixView<T>);  \
  template void NS::relu<T>(MatrixView<T>);                                                       \
  template void NS::relu_grad<T>(ConstMatrixView<T>, MatrixView<T>);                              \
  template void NS::scaled_tanh<T>(MatrixView<T>, T, T);                                          \
  template void NS::scaled_tanh_grad<T>(ConstMatrixView<T>, T, T, MatrixView<T>);                 \
  template void NS::adam<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>,         \
                            const AdamHyper<T>&);                                                 \
  template void NS::polyak<T>(std::span<T>, std::span<const T>, T);

BATCHRL_INSTANTIATE_KERNELS(kernels, float)
BATCHRL_INSTANTIATE_KERNELS(kernels, double)
BATCHRL_INSTANTIATE_KERNELS(kernels::reference, float)
BATCHRL_INSTANTIATE_KERNELS(kernels::reference, double)

#undef BATCHRL_INSTANTIATE_KERNELS

}  // namespace batchrl::kernels
