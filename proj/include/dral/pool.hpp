#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dral/dataset.hpp"

namespace dral {

using SampleId = std::size_t;

/// Partition of dataset indices into labeled / unlabeled / validation / test.
///
/// `unlabeled` is kept sorted ascending; `labeled` keeps commit order.
struct PoolState {
  std::vector<SampleId> labeled;
  std::vector<SampleId> unlabeled;
  std::vector<SampleId> validation;
  std::vector<SampleId> test;
  std::size_t oracle_queries_spent = 0;

  bool is_unlabeled(SampleId id) const;

  // Moves ids from unlabeled to labeled. Throws StateError if any id is not
  // currently unlabeled or repeats.
  void commit(std::span<const SampleId> ids);

  // Throws StateError on overlapping sets, duplicates or ids >= dataset_size.
  void check_invariants(std::size_t dataset_size) const;
};

// Uniform random disjoint assignment; ids left over form the unlabeled pool.
// oracle_queries_spent starts at seed_labeled_size.
PoolState split_pool(const Dataset& data, std::size_t seed_labeled_size,
                     std::size_t validation_size, std::size_t test_size, std::uint64_t rng_seed);

}  // namespace dral
