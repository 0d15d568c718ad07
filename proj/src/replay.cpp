#include "batchrl/replay.hpp"

#include <algorithm>
#include <cmath>

#include "batchrl/binary_io.hpp"

namespace batchrl {

namespace {

constexpr char kReplayMagic[9] = "BRLREPL1";

bool all_finite(const std::vector<Real>& v) {
  return std::all_of(v.begin(), v.end(), [](Real x) { return std::isfinite(x); });
}

void copy_row(const std::vector<Real>& src, RowMatrix<Real>& dst, std::size_t row) {
  if (src.size() != static_cast<std::size_t>(dst.cols())) {
    throw std::invalid_argument("make_batch: inconsistent transition widths");
  }
  std::copy(src.begin(), src.end(), dst.row(static_cast<Eigen::Index>(row)).data());
}

}  // namespace

bool Transition::finite() const {
  return all_finite(s) && all_finite(a) && std::isfinite(r) && all_finite(s_next);
}

Batch make_batch(const std::vector<Transition>& transitions) {
  Batch b;
  if (transitions.empty()) return b;
  const auto n = static_cast<Eigen::Index>(transitions.size());
  const auto& first = transitions.front();
  b.s.resize(n, static_cast<Eigen::Index>(first.s.size()));
  b.a.resize(n, static_cast<Eigen::Index>(first.a.size()));
  b.s_next.resize(n, static_cast<Eigen::Index>(first.s_next.size()));
  b.r.reserve(transitions.size());
  b.done.reserve(transitions.size());
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const Transition& tr = transitions[i];
    copy_row(tr.s, b.s, i);
    copy_row(tr.a, b.a, i);
    copy_row(tr.s_next, b.s_next, i);
    b.r.push_back(tr.r);
    b.done.push_back(tr.done ? Real(1) : Real(0));
  }
  return b;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : storage_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay: capacity must be positive");
}

void ReplayBuffer::push(Transition tr) {
  if (!tr.finite()) throw std::invalid_argument("replay: non-finite transition rejected");
  storage_[head_] = std::move(tr);
  head_ = (head_ + 1) % storage_.size();
  size_ = std::min(size_ + 1, storage_.size());
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("replay: index out of range");
  const std::size_t oldest = full() ? head_ : 0;
  return storage_[(oldest + i) % storage_.size()];
}

std::vector<Transition> ReplayBuffer::ordered() const {
  std::vector<Transition> out;
  out.reserve(size_);
  for (std::size_t i = 0; i < size_; ++i) out.push_back(at(i));
  return out;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size,
                                                      std::mt19937_64& rng) const {
  if (batch_size == 0 || size_ < batch_size) {
    throw WarmupIncomplete("replay: " + std::to_string(size_) + " transitions stored, " +
                           std::to_string(batch_size) + " requested");
  }
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng) const {
  std::vector<Transition> out;
  out.reserve(batch_size);
  for (std::size_t i : sample_indices(batch_size, rng)) out.push_back(at(i));
  return out;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  return sample(batch_size, rng);
}

Batch ReplayBuffer::sample_batch(std::size_t batch_size, std::mt19937_64& rng) const {
  return make_batch(sample(batch_size, rng));
}

void ReplayBuffer::save(std::ostream& os) const {
  io::write_magic(os, kReplayMagic);
  io::write<std::uint32_t>(os, sizeof(Real));
  io::write<std::uint64_t>(os, capacity());
  io::write<std::uint64_t>(os, size_);
  for (std::size_t i = 0; i < size_; ++i) {
    const Transition& tr = at(i);
    io::write_vector(os, tr.s);
    io::write_vector(os, tr.a);
    io::write(os, tr.r);
    io::write_vector(os, tr.s_next);
    io::write<std::uint8_t>(os, tr.done ? 1 : 0);
  }
}

ReplayBuffer ReplayBuffer::load(std::istream& is) {
  io::expect_magic(is, kReplayMagic, "replay buffer");
  if (io::read<std::uint32_t>(is) != sizeof(Real)) throw io::FormatError("replay scalar mismatch");
  const auto capacity = io::read<std::uint64_t>(is);
  const auto size = io::read<std::uint64_t>(is);
  if (capacity == 0 || size > capacity) throw io::FormatError("replay size out of range");
  ReplayBuffer buf(capacity);
  for (std::uint64_t i = 0; i < size; ++i) {
    Transition tr;
    tr.s = io::read_vector<Real>(is, 1 << 20);
    tr.a = io::read_vector<Real>(is, 1 << 20);
    tr.r = io::read<Real>(is);
    tr.s_next = io::read_vector<Real>(is, 1 << 20);
    tr.done = io::read<std::uint8_t>(is) != 0;
    buf.push(std::move(tr));
  }
  return buf;
}

void preload(ReplayBuffer& dst, const ReplayBuffer& src) {
  const std::size_t n = std::min(src.size(), dst.capacity());
  for (std::size_t i = src.size() - n; i < src.size(); ++i) dst.push(src.at(i));
}

}  // namespace batchrl
