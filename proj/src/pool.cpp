#include "dral/pool.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "dral/errors.hpp"
#include "dral/rng.hpp"

namespace dral {

bool PoolState::is_unlabeled(SampleId id) const {
  return std::binary_search(unlabeled.begin(), unlabeled.end(), id);
}

void PoolState::commit(std::span<const SampleId> ids) {
  std::vector<SampleId> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw StateError("commit: duplicate ids");
  }
  for (SampleId id : sorted) {
    if (!is_unlabeled(id)) {
      throw StateError("commit: id " + std::to_string(id) + " is not in the unlabeled pool");
    }
  }
  std::vector<SampleId> remaining;
  remaining.reserve(unlabeled.size() - sorted.size());
  std::set_difference(unlabeled.begin(), unlabeled.end(), sorted.begin(), sorted.end(),
                      std::back_inserter(remaining));
  unlabeled = std::move(remaining);
  labeled.insert(labeled.end(), ids.begin(), ids.end());
}

void PoolState::check_invariants(std::size_t dataset_size) const {
  std::vector<SampleId> all;
  for (const auto* set : {&labeled, &unlabeled, &validation, &test}) {
    all.insert(all.end(), set->begin(), set->end());
  }
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw StateError("pool sets overlap or contain duplicates");
  }
  if (!all.empty() && all.back() >= dataset_size) {
    throw StateError("pool references id " + std::to_string(all.back()) + " beyond dataset");
  }
  if (!std::is_sorted(unlabeled.begin(), unlabeled.end())) {
    throw StateError("unlabeled pool lost its ordering");
  }
}

PoolState split_pool(const Dataset& data, std::size_t seed_labeled_size,
                     std::size_t validation_size, std::size_t test_size, std::uint64_t rng_seed) {
  const std::size_t n = data.size();
  if (seed_labeled_size + validation_size + test_size > n) {
    throw ParameterError("split sizes " + std::to_string(seed_labeled_size) + "+" +
                         std::to_string(validation_size) + "+" + std::to_string(test_size) +
                         " exceed dataset size " + std::to_string(n));
  }
  std::vector<SampleId> ids(n);
  std::iota(ids.begin(), ids.end(), SampleId{0});
  Rng rng = make_rng(rng_seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  PoolState pool;
  auto take = [&, pos = std::size_t{0}](std::size_t count) mutable {
    std::vector<SampleId> part(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                               ids.begin() + static_cast<std::ptrdiff_t>(pos + count));
    pos += count;
    std::sort(part.begin(), part.end());
    return part;
  };
  pool.labeled = take(seed_labeled_size);
  pool.validation = take(validation_size);
  pool.test = take(test_size);
  pool.unlabeled = take(n - seed_labeled_size - validation_size - test_size);
  pool.oracle_queries_spent = seed_labeled_size;
  return pool;
}

}  // namespace dral
