#pragma once

#include <cstdint>
#include <vector>

#include "dral/matrix.hpp"
#include "dral/rng.hpp"

namespace dral {

/// One (S, a, S', r) experience. Masks flag the selectable (non-padding)
/// rows of each state.
struct TransitionRec {
  Matrix state;
  std::vector<std::uint8_t> state_mask;
  std::vector<std::uint8_t> action;
  Matrix next_state;
  std::vector<std::uint8_t> next_mask;
  double reward = 0.0;

  friend bool operator==(const TransitionRec&, const TransitionRec&) = default;
};

/// Fixed-capacity FIFO ring of transitions.
///
/// sample() only hands out a batch once the stored count strictly exceeds
/// `min_fill`; below that it returns an empty batch meaning "skip update".
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity = 3000, std::size_t min_fill = 128,
               std::size_t batch_size = 64);

  // Overwrites the oldest entry once full.
  void push(TransitionRec rec);
  std::vector<TransitionRec> sample(Rng& rng) const;

  bool can_sample() const { return size() > min_fill_; }
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t min_fill() const { return min_fill_; }
  std::size_t batch_size() const { return batch_size_; }
  std::uint64_t total_pushed() const { return total_pushed_; }

  // i = 0 is the oldest stored record.
  const TransitionRec& oldest(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::size_t min_fill_;
  std::size_t batch_size_;
  std::vector<TransitionRec> data_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::uint64_t total_pushed_ = 0;
};

}  // namespace dral
