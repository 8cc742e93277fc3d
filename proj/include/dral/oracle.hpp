#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "dral/dataset.hpp"
#include "dral/pool.hpp"

namespace dral {

enum class OracleKind { kSimulated, kDeferred };

/// Label source. Implementations must return labels in [0, num_classes) and
/// answer consistently for repeated ids.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual std::vector<int> query(std::span<const SampleId> ids) = 0;
  virtual OracleKind kind() const = 0;
};

// Ground-truth lookup.
class SimulatedOracle : public Oracle {
 public:
  explicit SimulatedOracle(const Dataset& data);

  std::vector<int> query(std::span<const SampleId> ids) override;
  OracleKind kind() const override { return OracleKind::kSimulated; }

 private:
  std::vector<int> labels_;
};

struct LabeledSet {
  std::vector<SampleId> ids;
  std::vector<int> labels;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

/// Caching front for an Oracle that also enforces the labeling budget.
///
/// A cached id never reaches the underlying oracle again. Seed labels are
/// fetched outside the budget; every other uncached id costs one unit. Both paths
/// advance PoolState::oracle_queries_spent.
class LabelBook {
 public:
  LabelBook(Oracle& oracle, std::size_t budget);

  void fetch_seed(std::span<const SampleId> ids, PoolState& pool);
  // Throws StateError if the uncached ids exceed the remaining budget.
  std::vector<int> fetch(std::span<const SampleId> ids, PoolState& pool);

  bool is_cached(SampleId id) const { return cache_.contains(id); }
  int cached_label(SampleId id) const;
  std::size_t count_uncached(std::span<const SampleId> ids) const;
  // Drops cached labels; spent budget is not refunded.
  void forget(std::span<const SampleId> ids);

  std::size_t budget() const { return budget_; }
  std::size_t spent() const { return spent_; }
  std::size_t remaining() const { return budget_ - spent_; }

  // Labels for ids that are already cached, in order.
  LabeledSet labeled_set(std::span<const SampleId> ids) const;

 private:
  std::vector<int> fetch_impl(std::span<const SampleId> ids, PoolState& pool, bool charge);

  Oracle& oracle_;
  std::size_t budget_;
  std::size_t spent_ = 0;
  std::unordered_map<SampleId, int> cache_;
};

}  // namespace dral
