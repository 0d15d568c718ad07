#include "batchrl/approx.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

#include "batchrl/binary_io.hpp"

namespace batchrl {

namespace {

constexpr char kNetMagic[9] = "BRLNET01";
constexpr char kAdamMagic[9] = "BRLADAM1";

template <class T>
kernels::MatrixView<T> view(RowMatrix<T>& m) {
  return {m.data(), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
}

template <class T>
kernels::ConstMatrixView<T> cview(const RowMatrix<T>& m) {
  return {m.data(), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
}

void validate_spec(const MlpSpec& spec) {
  if (spec.layer_sizes.size() < 2) throw std::invalid_argument("mlp: need at least two widths");
  for (std::size_t w : spec.layer_sizes) {
    if (w == 0) throw std::invalid_argument("mlp: widths must be positive");
  }
  if (spec.output == OutputActivation::scaled_tanh && !(spec.out_lo < spec.out_hi)) {
    throw std::invalid_argument("mlp: scaled-tanh range is empty");
  }
}

}  // namespace

std::size_t parameter_count(const MlpSpec& spec) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    n += (spec.layer_sizes[l] + 1) * spec.layer_sizes[l + 1];
  }
  return n;
}

template <class T>
Mlp<T>::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  validate_spec(spec_);
  offsets_.resize(num_layers());
  std::size_t off = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    offsets_[l] = off;
    off += (spec_.layer_sizes[l] + 1) * spec_.layer_sizes[l + 1];
  }
  params_.assign(off, T(0));
  grads_.assign(off, T(0));
}

template <class T>
Mlp<T> Mlp<T>::init(MlpSpec spec, std::uint64_t seed) {
  Mlp net(std::move(spec));
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.spec_.layer_sizes[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto w = net.weights(l);
    for (std::size_t i = 0; i < w.size(); ++i) w.data[i] = static_cast<T>(u(rng));
    for (T& b : net.biases(l)) b = static_cast<T>(u(rng));
  }
  return net;
}

template <class T>
kernels::MatrixView<T> Mlp<T>::weights(std::size_t layer) {
  return {params_.data() + weight_offset(layer), spec_.layer_sizes[layer + 1],
          spec_.layer_sizes[layer]};
}

template <class T>
kernels::ConstMatrixView<T> Mlp<T>::weights(std::size_t layer) const {
  return {params_.data() + weight_offset(layer), spec_.layer_sizes[layer + 1],
          spec_.layer_sizes[layer]};
}

template <class T>
std::span<T> Mlp<T>::biases(std::size_t layer) {
  return {params_.data() + bias_offset(layer), spec_.layer_sizes[layer + 1]};
}

template <class T>
std::span<const T> Mlp<T>::biases(std::size_t layer) const {
  return {params_.data() + bias_offset(layer), spec_.layer_sizes[layer + 1]};
}

template <class T>
kernels::MatrixView<T> Mlp<T>::weight_grads(std::size_t layer) {
  return {grads_.data() + weight_offset(layer), spec_.layer_sizes[layer + 1],
          spec_.layer_sizes[layer]};
}

template <class T>
std::span<T> Mlp<T>::bias_grads(std::size_t layer) {
  return {grads_.data() + bias_offset(layer), spec_.layer_sizes[layer + 1]};
}

template <class T>
void Mlp<T>::zero_grad() {
  std::fill(grads_.begin(), grads_.end(), T(0));
}

template <class T>
typename Mlp<T>::Matrix Mlp<T>::run(const Matrix& x, std::vector<Matrix>* acts) const {
  if (static_cast<std::size_t>(x.cols()) != input_size()) {
    throw std::invalid_argument("mlp forward: expected " + std::to_string(input_size()) +
                                " inputs, got " + std::to_string(x.cols()));
  }
  const bool serial = backend_ == kernels::Backend::serial;
  Matrix cur = x;
  if (acts) acts->assign(1, x);
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Matrix next(x.rows(), static_cast<Eigen::Index>(spec_.layer_sizes[l + 1]));
    if (serial) {
      kernels::reference::affine(cview(cur), weights(l), biases(l), view(next));
    } else {
      kernels::affine(cview(cur), weights(l), biases(l), view(next));
    }
    const bool last = l + 1 == num_layers();
    if (!last) {
      serial ? kernels::reference::relu(view(next)) : kernels::relu(view(next));
    } else if (spec_.output == OutputActivation::scaled_tanh) {
      const T lo = static_cast<T>(spec_.out_lo);
      const T hi = static_cast<T>(spec_.out_hi);
      serial ? kernels::reference::scaled_tanh(view(next), lo, hi)
             : kernels::scaled_tanh(view(next), lo, hi);
    }
    if (acts) acts->push_back(next);
    cur = std::move(next);
  }
  return cur;
}

template <class T>
const typename Mlp<T>::Matrix& Mlp<T>::forward(const Matrix& x) {
  run(x, &acts_);
  cache_valid_ = true;
  return acts_.back();
}

template <class T>
std::vector<T> Mlp<T>::predict(std::span<const T> x) const {
  Matrix in(1, static_cast<Eigen::Index>(x.size()));
  std::copy(x.begin(), x.end(), in.data());
  const Matrix out = run(in, nullptr);
  return {out.data(), out.data() + out.size()};
}

template <class T>
typename Mlp<T>::Matrix Mlp<T>::backward(const Matrix& upstream, bool param_grads) {
  if (!cache_valid_) throw std::logic_error("mlp backward: no cached forward pass");
  const Matrix& out = acts_.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw std::invalid_argument("mlp backward: upstream gradient shape mismatch");
  }
  cache_valid_ = false;
  const bool serial = backend_ == kernels::Backend::serial;

  Matrix delta = upstream;
  if (spec_.output == OutputActivation::scaled_tanh) {
    const T lo = static_cast<T>(spec_.out_lo);
    const T hi = static_cast<T>(spec_.out_hi);
    serial ? kernels::reference::scaled_tanh_grad(cview(out), lo, hi, view(delta))
           : kernels::scaled_tanh_grad(cview(out), lo, hi, view(delta));
  }
  for (std::size_t l = num_layers(); l-- > 0;) {
    const Matrix& in = acts_[l];
    if (param_grads) {
      serial ? kernels::reference::affine_grad_params(cview(in), cview(delta), weight_grads(l),
                                                      bias_grads(l))
             : kernels::affine_grad_params(cview(in), cview(delta), weight_grads(l),
                                           bias_grads(l));
    }
    Matrix below(delta.rows(), static_cast<Eigen::Index>(spec_.layer_sizes[l]));
    serial ? kernels::reference::affine_grad_input(cview(delta), std::as_const(*this).weights(l), view(below))
           : kernels::affine_grad_input(cview(delta), std::as_const(*this).weights(l), view(below));
    if (l > 0) {
      serial ? kernels::reference::relu_grad(cview(in), view(below))
             : kernels::relu_grad(cview(in), view(below));
    }
    delta = std::move(below);
  }
  return delta;
}

template <class T>
void Mlp<T>::copy_params_from(const Mlp& other) {
  if (other.spec_.layer_sizes != spec_.layer_sizes) {
    throw std::invalid_argument("mlp copy: shape mismatch");
  }
  params_ = other.params_;
}

template <class T>
void Mlp<T>::save(std::ostream& os) const {
  io::write_magic(os, kNetMagic);
  io::write<std::uint32_t>(os, sizeof(T));
  std::vector<std::uint64_t> sizes(spec_.layer_sizes.begin(), spec_.layer_sizes.end());
  io::write_vector(os, sizes);
  io::write<std::uint32_t>(os, static_cast<std::uint32_t>(spec_.output));
  io::write(os, spec_.out_lo);
  io::write(os, spec_.out_hi);
  io::write_vector(os, params_);
}

template <class T>
Mlp<T> Mlp<T>::load(std::istream& is) {
  io::expect_magic(is, kNetMagic, "network");
  const auto scalar = io::read<std::uint32_t>(is);
  if (scalar != sizeof(T)) throw io::FormatError("network scalar width mismatch");
  MlpSpec spec;
  for (auto s : io::read_vector<std::uint64_t>(is, 64)) spec.layer_sizes.push_back(s);
  const auto act = io::read<std::uint32_t>(is);
  if (act > 1) throw io::FormatError("unknown output activation");
  spec.output = static_cast<OutputActivation>(act);
  spec.out_lo = io::read<double>(is);
  spec.out_hi = io::read<double>(is);
  Mlp net(spec);
  auto params = io::read_vector<T>(is);
  if (params.size() != net.params_.size()) throw io::FormatError("parameter count mismatch");
  net.params_.assign(params.begin(), params.end());
  return net;
}

template <class T>
void AdamState<T>::save(std::ostream& os) const {
  io::write_magic(os, kAdamMagic);
  io::write<std::uint32_t>(os, sizeof(T));
  io::write(os, step);
  io::write(os, lr);
  io::write(os, beta1);
  io::write(os, beta2);
  io::write(os, eps);
  io::write_vector(os, m);
  io::write_vector(os, v);
}

template <class T>
AdamState<T> AdamState<T>::load(std::istream& is) {
  io::expect_magic(is, kAdamMagic, "optimizer state");
  if (io::read<std::uint32_t>(is) != sizeof(T)) throw io::FormatError("adam scalar width mismatch");
  AdamState st;
  st.step = io::read<std::int64_t>(is);
  st.lr = io::read<double>(is);
  st.beta1 = io::read<double>(is);
  st.beta2 = io::read<double>(is);
  st.eps = io::read<double>(is);
  st.m = io::read_vector<T>(is);
  st.v = io::read_vector<T>(is);
  if (st.m.size() != st.v.size()) throw io::FormatError("adam moment size mismatch");
  return st;
}

template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& st,
               kernels::Backend backend) {
  if (st.m.size() != params.size()) throw std::invalid_argument("adam_step: state shape mismatch");
  ++st.step;
  const kernels::AdamHyper<T> hp{static_cast<T>(st.lr), static_cast<T>(st.beta1),
                                 static_cast<T>(st.beta2), static_cast<T>(st.eps), st.step};
  if (backend == kernels::Backend::serial) {
    kernels::reference::adam<T>(params, grads, st.m, st.v, hp);
  } else {
    kernels::adam<T>(params, grads, st.m, st.v, hp);
  }
}

template <class T>
void soft_update(Mlp<T>& target, const Mlp<T>& source, double tau) {
  if (target.spec().layer_sizes != source.spec().layer_sizes) {
    throw std::invalid_argument("soft_update: shape mismatch");
  }
  kernels::polyak<T>(target.params(), source.params(), static_cast<T>(tau));
}

template <class T>
RowMatrix<T> stack_rows(std::span<const std::vector<T>> rows) {
  if (rows.empty()) return {};
  RowMatrix<T> m(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != static_cast<std::size_t>(m.cols())) {
      throw std::invalid_argument("stack_rows: ragged rows");
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(static_cast<Eigen::Index>(r)).data());
  }
  return m;
}

template class Mlp<float>;
template class Mlp<double>;
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&,
                               kernels::Backend);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&,
                                kernels::Backend);
template void soft_update<float>(Mlp<float>&, const Mlp<float>&, double);
template void soft_update<double>(Mlp<double>&, const Mlp<double>&, double);
template RowMatrix<float> stack_rows<float>(std::span<const std::vector<float>>);
template RowMatrix<double> stack_rows<double>(std::span<const std::vector<double>>);

}  // namespace batchrl
