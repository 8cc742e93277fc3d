#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dral/classifier.hpp"
#include "dral/matrix.hpp"
#include "dral/pool.hpp"
#include "dral/rng.hpp"

namespace dral {

// Largest minus second-largest probability per row; lower is more uncertain.
// With a single class the second-largest is taken as 0.
std::vector<double> score_margin(const Matrix& probs);
// Shannon entropy (nats) with 0 ln 0 = 0; higher is more uncertain.
std::vector<double> score_entropy(const Matrix& probs);
// 1 - max_c p_c; higher is more uncertain.
std::vector<double> score_least_confidence(const Matrix& probs);

enum class Direction { kLowestFirst, kHighestFirst };

// The k best ids under `direction`; ties are broken uniformly by `tie_rng`.
// k <= 0 is a ParameterError; k is clamped to ids.size().
std::vector<SampleId> select_top_k(std::span<const SampleId> ids, std::span<const double> scores,
                                   int k, Direction direction, Rng& tie_rng);

// Uniform sample of min(k, |ids|) ids without replacement.
std::vector<SampleId> select_random(std::span<const SampleId> ids, int k, Rng& rng);

enum class StrategyKind { kRandom, kEntropy, kLeastConfidence, kMargin, kDral };

StrategyKind parse_strategy(const std::string& name);
std::string strategy_name(StrategyKind kind);
// Parses "random,margin,..."; throws ParameterError on unknown names.
std::vector<StrategyKind> parse_strategy_list(const std::string& csv);

/// Selects k distinct ids from the unlabeled pool.
class QueryStrategy {
 public:
  virtual ~QueryStrategy() = default;
  virtual StrategyKind kind() const = 0;
  std::string name() const { return strategy_name(kind()); }
  virtual std::vector<SampleId> select(const PoolState& pool, const Classifier& clf,
                                       const Matrix& features, int k, Rng& rng) const = 0;
};

// Random, entropy, least-confidence or margin. Throws ParameterError for kDral,
// which is driven by the agent loop instead (see PolicyStrategy).
std::unique_ptr<QueryStrategy> make_baseline_strategy(StrategyKind kind);

}  // namespace dral
