#include "dral/replay_buffer.hpp"

#include <algorithm>
#include <numeric>

#include "dral/errors.hpp"

namespace dral {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t min_fill, std::size_t batch_size)
    : capacity_(capacity), min_fill_(min_fill), batch_size_(batch_size) {
  if (capacity_ == 0 || batch_size_ == 0) {
    throw ParameterError("replay buffer capacity and batch size must be positive");
  }
  data_.reserve(std::min<std::size_t>(capacity_, 4096));
}

void ReplayBuffer::push(TransitionRec rec) {
  ++total_pushed_;
  if (data_.size() < capacity_) {
    data_.push_back(std::move(rec));
    return;
  }
  data_[head_] = std::move(rec);
  head_ = (head_ + 1) % capacity_;
}

std::vector<TransitionRec> ReplayBuffer::sample(Rng& rng) const {
  if (!can_sample()) return {};
  std::vector<std::size_t> idx(data_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(batch_size_);
  std::sample(idx.begin(), idx.end(), std::back_inserter(picked),
              std::min(batch_size_, data_.size()), rng);
  std::vector<TransitionRec> batch;
  batch.reserve(picked.size());
  for (std::size_t i : picked) batch.push_back(data_[i]);
  return batch;
}

const TransitionRec& ReplayBuffer::oldest(std::size_t i) const {
  if (i >= data_.size()) throw ParameterError("replay index out of range");
  return data_[(head_ + i) % data_.size()];
}

}  // namespace dral
