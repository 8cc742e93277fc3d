#include "dral/oracle.hpp"

#include <algorithm>
#include <string>
#include <unordered_set>

#include "dral/errors.hpp"

namespace dral {

SimulatedOracle::SimulatedOracle(const Dataset& data) {
  if (!data.labels) throw ParameterError("simulated oracle needs a dataset with true labels");
  labels_ = *data.labels;
}

std::vector<int> SimulatedOracle::query(std::span<const SampleId> ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (SampleId id : ids) {
    if (id >= labels_.size()) {
      throw ParameterError("oracle query for id " + std::to_string(id) + " out of range");
    }
    out.push_back(labels_[id]);
  }
  return out;
}

LabelBook::LabelBook(Oracle& oracle, std::size_t budget) : oracle_(oracle), budget_(budget) {}

int LabelBook::cached_label(SampleId id) const {
  auto it = cache_.find(id);
  if (it == cache_.end()) throw StateError("no label cached for id " + std::to_string(id));
  return it->second;
}

std::size_t LabelBook::count_uncached(std::span<const SampleId> ids) const {
  std::unordered_set<SampleId> fresh;
  for (SampleId id : ids) {
    if (!cache_.contains(id)) fresh.insert(id);
  }
  return fresh.size();
}

void LabelBook::forget(std::span<const SampleId> ids) {
  for (SampleId id : ids) cache_.erase(id);
}

void LabelBook::fetch_seed(std::span<const SampleId> ids, PoolState& pool) {
  fetch_impl(ids, pool, /*charge=*/false);
}

std::vector<int> LabelBook::fetch(std::span<const SampleId> ids, PoolState& pool) {
  return fetch_impl(ids, pool, /*charge=*/true);
}

std::vector<int> LabelBook::fetch_impl(std::span<const SampleId> ids, PoolState& pool,
                                       bool charge) {
  std::vector<SampleId> fresh;
  for (SampleId id : ids) {
    if (!cache_.contains(id) && std::find(fresh.begin(), fresh.end(), id) == fresh.end()) {
      fresh.push_back(id);
    }
  }
  if (charge && fresh.size() > remaining()) {
    throw StateError("label request for " + std::to_string(fresh.size()) +
                     " new ids exceeds remaining budget " + std::to_string(remaining()));
  }
  if (!fresh.empty()) {
    const std::vector<int> answers = oracle_.query(fresh);
    if (answers.size() != fresh.size()) throw StateError("oracle returned wrong label count");
    for (std::size_t i = 0; i < fresh.size(); ++i) cache_.emplace(fresh[i], answers[i]);
    pool.oracle_queries_spent += charge ? fresh.size() : 0;
    if (charge) spent_ += fresh.size();
  }
  std::vector<int> out;
  out.reserve(ids.size());
  for (SampleId id : ids) out.push_back(cache_.at(id));
  return out;
}

LabeledSet LabelBook::labeled_set(std::span<const SampleId> ids) const {
  LabeledSet set;
  set.ids.assign(ids.begin(), ids.end());
  set.labels.reserve(ids.size());
  for (SampleId id : ids) set.labels.push_back(cached_label(id));
  return set;
}

}  // namespace dral
