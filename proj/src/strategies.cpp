#include "dral/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dral/errors.hpp"

namespace dral {

std::vector<double> score_margin(const Matrix& probs) {
  std::vector<double> scores(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    double first = 0.0;
    double second = 0.0;
    for (double p : probs.row(r)) {
      if (p > first) {
        second = first;
        first = p;
      } else if (p > second) {
        second = p;
      }
    }
    scores[r] = first - second;
  }
  return scores;
}

std::vector<double> score_entropy(const Matrix& probs) {
  std::vector<double> scores(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    double h = 0.0;
    for (double p : probs.row(r)) {
      if (p > 0.0) h -= p * std::log(p);
    }
    scores[r] = h;
  }
  return scores;
}

std::vector<double> score_least_confidence(const Matrix& probs) {
  std::vector<double> scores(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    scores[r] = 1.0 - *std::max_element(row.begin(), row.end());
  }
  return scores;
}

std::vector<SampleId> select_top_k(std::span<const SampleId> ids, std::span<const double> scores,
                                   int k, Direction direction, Rng& tie_rng) {
  if (k <= 0) throw ParameterError("select_top_k: k must be positive");
  if (ids.size() != scores.size()) throw ShapeError("select_top_k: ids/scores length mismatch");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), tie_rng);
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), ids.size());
  auto better = [&](std::size_t a, std::size_t b) {
    return direction == Direction::kLowestFirst ? scores[a] < scores[b] : scores[a] > scores[b];
  };
  std::stable_sort(order.begin(), order.end(), better);
  std::vector<SampleId> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(ids[order[i]]);
  return out;
}

std::vector<SampleId> select_random(std::span<const SampleId> ids, int k, Rng& rng) {
  if (k <= 0) return {};
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), ids.size());
  std::vector<SampleId> out;
  out.reserve(take);
  std::sample(ids.begin(), ids.end(), std::back_inserter(out), take, rng);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

StrategyKind parse_strategy(const std::string& name) {
  if (name == "random") return StrategyKind::kRandom;
  if (name == "entropy") return StrategyKind::kEntropy;
  if (name == "least-confidence") return StrategyKind::kLeastConfidence;
  if (name == "margin") return StrategyKind::kMargin;
  if (name == "dral") return StrategyKind::kDral;
  throw ParameterError("unknown strategy '" + name +
                       "' (expected random, entropy, least-confidence, margin or dral)");
}

std::string strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kRandom: return "random";
    case StrategyKind::kEntropy: return "entropy";
    case StrategyKind::kLeastConfidence: return "least-confidence";
    case StrategyKind::kMargin: return "margin";
    case StrategyKind::kDral: return "dral";
  }
  return "random";
}

std::vector<StrategyKind> parse_strategy_list(const std::string& csv) {
  std::vector<StrategyKind> kinds;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) kinds.push_back(parse_strategy(item));
  }
  return kinds;
}

namespace {

class RandomStrategy : public QueryStrategy {
 public:
  StrategyKind kind() const override { return StrategyKind::kRandom; }
  std::vector<SampleId> select(const PoolState& pool, const Classifier&, const Matrix&, int k,
                               Rng& rng) const override {
    return select_random(pool.unlabeled, k, rng);
  }
};

class UncertaintyStrategy : public QueryStrategy {
 public:
  explicit UncertaintyStrategy(StrategyKind kind) : kind_(kind) {}

  StrategyKind kind() const override { return kind_; }

  std::vector<SampleId> select(const PoolState& pool, const Classifier& clf,
                               const Matrix& features, int k, Rng& rng) const override {
    if (k <= 0 || pool.unlabeled.empty()) return {};
    const Matrix probs = clf.predict_proba(features, pool.unlabeled);
    switch (kind_) {
      case StrategyKind::kMargin:
        return select_top_k(pool.unlabeled, score_margin(probs), k, Direction::kLowestFirst, rng);
      case StrategyKind::kEntropy:
        return select_top_k(pool.unlabeled, score_entropy(probs), k, Direction::kHighestFirst,
                            rng);
      default:
        return select_top_k(pool.unlabeled, score_least_confidence(probs), k,
                            Direction::kHighestFirst, rng);
    }
  }

 private:
  StrategyKind kind_;
};

}  // namespace

std::unique_ptr<QueryStrategy> make_baseline_strategy(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kRandom:
      return std::make_unique<RandomStrategy>();
    case StrategyKind::kEntropy:
    case StrategyKind::kLeastConfidence:
    case StrategyKind::kMargin:
      return std::make_unique<UncertaintyStrategy>(kind);
    case StrategyKind::kDral:
      break;
  }
  throw ParameterError("dral is not a pool-only strategy; use the agent loop");
}

}  // namespace dral
