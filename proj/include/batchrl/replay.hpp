#pragma once

// Fixed-capacity FIFO experience replay with uniform sampling (with
// replacement).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <vector>

#include "batchrl/approx.hpp"

namespace batchrl {

struct Transition {
  std::vector<Real> s;
  std::vector<Real> a;
  Real r = 0;
  std::vector<Real> s_next;
  bool done = false;

  bool operator==(const Transition&) const = default;
  bool finite() const;
};

/// Minibatch laid out as matrices, one transition per row.
struct Batch {
  RowMatrix<Real> s;
  RowMatrix<Real> a;
  std::vector<Real> r;
  RowMatrix<Real> s_next;
  std::vector<Real> done;  // 1 for terminal transitions

  std::size_t size() const { return r.size(); }
};

Batch make_batch(const std::vector<Transition>& transitions);

/// Thrown when sampling is attempted before enough transitions were stored.
class WarmupIncomplete : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  /// Rejects transitions with non-finite entries (std::invalid_argument).
  void push(Transition tr);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return storage_.size(); }
  bool empty() const { return size_ == 0; }
  bool full() const { return size_ == storage_.size(); }

  /// i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;
  std::vector<Transition> ordered() const;

  std::vector<std::size_t> sample_indices(std::size_t batch_size, std::mt19937_64& rng) const;
  std::vector<Transition> sample(std::size_t batch_size, std::mt19937_64& rng) const;
  std::vector<Transition> sample(std::size_t batch_size, std::uint64_t seed) const;
  Batch sample_batch(std::size_t batch_size, std::mt19937_64& rng) const;

  void save(std::ostream& os) const;
  static ReplayBuffer load(std::istream& is);

 private:
  std::vector<Transition> storage_;
  std::size_t head_ = 0;  // next write position
  std::size_t size_ = 0;
};

/// Copies the newest min(|src|, dst.capacity()) transitions of src into dst,
/// oldest first.
void preload(ReplayBuffer& dst, const ReplayBuffer& src);

}  // namespace batchrl
