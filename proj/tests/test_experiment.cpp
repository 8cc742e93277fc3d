#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "dral/errors.hpp"
#include "dral/experiment.hpp"
#include "dral/fs_util.hpp"
#include "dral/rng.hpp"

using namespace dral;

namespace {

ExperimentConfig small_config(StrategyKind strategy, std::uint64_t seed) {
  ExperimentConfig c;
  c.dataset.samples_per_class = 150;
  c.seed_labeled_size = 40;
  c.validation_size = 100;
  c.test_size = 100;
  c.round_budget = 10;
  c.global_budget = 50;
  c.strategy = strategy;
  c.seed = seed;
  return c;
}

// Everything except wall time.
void check_same_log(const MetricsLog& a, const MetricsLog& b) {
  CHECK(a.strategy == b.strategy);
  CHECK(a.seed == b.seed);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].round == b.rows[i].round);
    CHECK(a.rows[i].cumulative_labels == b.rows[i].cumulative_labels);
    CHECK(a.rows[i].val_acc == b.rows[i].val_acc);
    CHECK(a.rows[i].test_acc == b.rows[i].test_acc);
    CHECK(a.rows[i].selected == b.rows[i].selected);
  }
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dral_test_" + name);
}

}  // namespace

TEST_CASE("B=100, b=20: five retrain rounds after the seed row") {
  ExperimentConfig c = small_config(StrategyKind::kMargin, 3);
  c.round_budget = 20;
  c.global_budget = 100;
  const RunResult r = run_al(c);
  REQUIRE(r.log.rows.size() == 6);
  CHECK(r.log.rows[0].round == 0);
  CHECK(r.log.rows[0].cumulative_labels == 40);
  for (int k = 1; k <= 5; ++k) {
    CHECK(r.log.rows[k].round == k);
    CHECK(r.log.rows[k].cumulative_labels == 40u + 20u * k);
    CHECK(r.log.rows[k].selected.size() == 20);
  }
  CHECK(r.budget_spent == 100);
}

TEST_CASE("B=0 gives a single seed-only row") {
  ExperimentConfig c = small_config(StrategyKind::kRandom, 2);
  c.global_budget = 0;
  const RunResult r = run_al(c);
  REQUIRE(r.log.rows.size() == 1);
  CHECK(r.log.rows[0].cumulative_labels == 40);
  CHECK(r.budget_spent == 0);
}

TEST_CASE("a run is deterministic under its seed") {
  for (StrategyKind s : {StrategyKind::kRandom, StrategyKind::kDral}) {
    const ExperimentConfig c = small_config(s, 5);
    check_same_log(run_al(c).log, run_al(c).log);
  }
}

TEST_CASE("config errors surface before any work") {
  ExperimentConfig c = small_config(StrategyKind::kRandom, 1);
  c.round_budget = 60;
  CHECK_THROWS_AS(run_al(c), ParameterError);
  c = small_config(StrategyKind::kRandom, 1);
  c.global_budget = 400;  // unlabeled pool is 600 - 240 = 360
  CHECK_THROWS_AS(run_al(c), ParameterError);
  c = small_config(StrategyKind::kRandom, 1);
  c.oracle = OracleKind::kDeferred;
  CHECK_THROWS_AS(run_al(c), ParameterError);
  c = small_config(StrategyKind::kDral, 1);
  c.agent.gamma = 2.0;
  CHECK_THROWS_AS(run_al(c), ParameterError);
  c = small_config(StrategyKind::kRandom, 1);
  c.round_budget = 0;
  CHECK_THROWS_AS(run_al(c), ParameterError);
}

TEST_CASE("budget conservation, monotone rows and pool disjointness for every strategy") {
  for (StrategyKind s : {StrategyKind::kRandom, StrategyKind::kEntropy, StrategyKind::kLeastConfidence,
                         StrategyKind::kMargin, StrategyKind::kDral}) {
    for (std::uint64_t seed : {1, 2}) {
      const ExperimentConfig c = small_config(s, seed);
      const RunResult r = run_al(c);
      INFO(strategy_name(s), " seed ", seed);
      CHECK(r.budget_spent == c.global_budget);
      CHECK(r.oracle_queries == c.seed_labeled_size + c.global_budget);
      CHECK(r.final_pool.oracle_queries_spent == r.oracle_queries);
      for (std::size_t i = 1; i < r.log.rows.size(); ++i) {
        const auto& prev = r.log.rows[i - 1];
        const auto& row = r.log.rows[i];
        CHECK(row.cumulative_labels > prev.cumulative_labels);
        CHECK(row.cumulative_labels - prev.cumulative_labels <= c.round_budget);
        CHECK(row.cumulative_labels - prev.cumulative_labels == row.selected.size());
      }
      CHECK(r.log.rows.back().cumulative_labels <= c.seed_labeled_size + c.global_budget);
      CHECK(r.final_pool.labeled.size() == r.log.rows.back().cumulative_labels);
      r.final_pool.check_invariants(r.data.size());
    }
  }
}

TEST_CASE("dral run: labeled growth happens only on positive-reward steps") {
  const RunResult r = run_al(small_config(StrategyKind::kDral, 4));
  REQUIRE_FALSE(r.steps.empty());
  std::size_t grown = 0;
  for (const StepRecord& s : r.steps) {
    const std::size_t delta = s.labeled_after - s.labeled_before;
    CHECK(delta == (s.reward > 0.0 ? s.selected : 0));
    CHECK(s.committed == (delta > 0));
    grown += delta;
  }
  CHECK(grown == r.final_pool.labeled.size() - 40);
}

TEST_CASE("margin runs select what select_top_k picks over margin scores") {
  const ExperimentConfig c = small_config(StrategyKind::kMargin, 7);
  const RunResult r = run_al(c);
  const Dataset& d = r.data;

  // Rebuild the starting pool from the final one.
  PoolState pool = r.final_pool;
  std::vector<SampleId> committed(pool.labeled.begin() + c.seed_labeled_size, pool.labeled.end());
  pool.labeled.resize(c.seed_labeled_size);
  pool.unlabeled.insert(pool.unlabeled.end(), committed.begin(), committed.end());
  std::sort(pool.unlabeled.begin(), pool.unlabeled.end());

  auto labeled_set = [&] {
    LabeledSet s{pool.labeled, {}};
    for (SampleId id : pool.labeled) s.labels.push_back((*d.labels)[id]);
    return s;
  };
  Classifier clf(d.dims(), d.num_classes, c.learner, derive_seed(c.seed, RngStream::kInit));
  clf.train_full(d.features, labeled_set());
  const ClassifierSnapshot seed_snap = clf.snapshot();
  Rng rng = make_rng(c.seed, RngStream::kSelection);
  for (std::size_t k = 1; k < r.log.rows.size(); ++k) {
    const auto scores = score_margin(clf.predict_proba(d.features, pool.unlabeled));
    const auto pick = select_top_k(pool.unlabeled, scores, static_cast<int>(c.round_budget),
                                   Direction::kLowestFirst, rng);
    CHECK(pick == r.log.rows[k].selected);
    pool.commit(pick);
    clf.restore(seed_snap);
    clf.train_full(d.features, labeled_set());
    CHECK(clf.evaluate_accuracy(d.features, pool.test, *d.labels) == r.log.rows[k].test_acc);
  }
}

TEST_CASE("label milestones and accuracy lookup") {
  ExperimentConfig c;
  c.seed_labeled_size = 100;
  c.round_budget = 20;
  c.global_budget = 50;
  CHECK(label_milestones(c) == std::vector<std::size_t>{100, 120, 140, 150});
  MetricsLog log{"x", 1, {{0, 100, 0.5, 0.6, 0, {}}, {1, 118, 0.5, 0.7, 0, {}}}};
  CHECK(accuracy_at(log, 99) == std::nullopt);
  CHECK(accuracy_at(log, 117) == 0.6);
  CHECK(accuracy_at(log, 140) == 0.7);
}

TEST_CASE("compare: single run, duplicate strategies, errors") {
  const ExperimentConfig c = small_config(StrategyKind::kRandom, 1);
  std::vector<MetricsLog> runs;
  const ComparisonTable one = compare(c, {StrategyKind::kRandom}, {1}, &runs);
  REQUIRE(runs.size() == 1);
  const auto milestones = label_milestones(c);
  REQUIRE(one.rows.size() == milestones.size());
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    CHECK(one.rows[i].labels == milestones[i]);
    CHECK(one.rows[i].mean_acc == *accuracy_at(runs[0], milestones[i]));
    CHECK(one.rows[i].std_acc == 0.0);
    CHECK(one.rows[i].n_seeds == 1);
  }

  const ComparisonTable twice = compare(c, {StrategyKind::kMargin, StrategyKind::kMargin}, {1, 2}, &runs, 2);
  REQUIRE(runs.size() == 4);
  check_same_log(runs[0], runs[2]);
  check_same_log(runs[1], runs[3]);
  for (const auto& row : twice.rows) CHECK(row.n_seeds == 4);

  CHECK_THROWS_AS(compare(c, {}, {1}), ParameterError);
  CHECK_THROWS_AS(compare(c, {StrategyKind::kRandom}, {}), ParameterError);
}

TEST_CASE("aggregate uses the sample standard deviation") {
  ExperimentConfig c;
  c.seed_labeled_size = 10;
  c.round_budget = 5;
  c.global_budget = 5;
  std::vector<MetricsLog> runs{{"a", 1, {{0, 10, 0, 0.5, 0, {}}, {1, 15, 0, 0.6, 0, {}}}},
                               {"a", 2, {{0, 10, 0, 0.7, 0, {}}, {1, 15, 0, 0.9, 0, {}}}}};
  const ComparisonTable t = aggregate(c, runs);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1].mean_acc == doctest::Approx(0.75));
  CHECK(t.rows[1].std_acc == doctest::Approx(std::sqrt(0.045)));
}

TEST_CASE("five seeds of random, margin and dral produce a well-formed table") {
  ExperimentConfig c = small_config(StrategyKind::kRandom, 1);
  std::vector<MetricsLog> runs;
  const ComparisonTable t = compare(c, {StrategyKind::kRandom, StrategyKind::kMargin, StrategyKind::kDral},
                                    {1, 2, 3, 4, 5}, &runs);
  CHECK(runs.size() == 15);
  CHECK(t.rows.size() == 3 * label_milestones(c).size());
  const std::string csv = comparison_csv(t);
  CHECK(csv.rfind(std::string(kComparisonHeader) + "\n", 0) == 0);
  CHECK(parse_comparison_csv(csv).rows.size() == t.rows.size());
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(t.rows.size() + 1));
}

TEST_CASE("metrics CSV: empty log, exact round trip, write errors") {
  CHECK(metrics_csv({}) == std::string(kMetricsHeader) + "\n");
  const RunResult r = run_al(small_config(StrategyKind::kEntropy, 2));
  const std::vector<MetricsLog> logs{r.log};
  const auto back = parse_metrics_csv(metrics_csv(logs));
  REQUIRE(back.size() == 1);
  REQUIRE(back[0].rows.size() == r.log.rows.size());
  for (std::size_t i = 0; i < back[0].rows.size(); ++i) {
    CHECK(back[0].rows[i].val_acc == r.log.rows[i].val_acc);
    CHECK(back[0].rows[i].test_acc == r.log.rows[i].test_acc);
    CHECK(back[0].rows[i].wall_ms == r.log.rows[i].wall_ms);
    CHECK(back[0].rows[i].cumulative_labels == r.log.rows[i].cumulative_labels);
  }

  ComparisonTable t{{{"margin", 120, 0.1 + 0.2, 1.0 / 3.0, 5}}};
  const ComparisonTable tb = parse_comparison_csv(comparison_csv(t));
  REQUIRE(tb.rows.size() == 1);
  CHECK(tb.rows[0].mean_acc == t.rows[0].mean_acc);
  CHECK(tb.rows[0].std_acc == t.rows[0].std_acc);
  CHECK(tb.rows[0].strategy == "margin");

  CHECK_THROWS_AS(export_csv(logs, "/nonexistent-dir/x/metrics.csv"), IoError);
  const auto path = temp_path("metrics.csv");
  export_csv(logs, path);
  CHECK(read_file(path) == metrics_csv(logs));
  std::filesystem::remove(path);
}

TEST_CASE("scatter export: at most b points per round, coordinates and classes") {
  const ExperimentConfig c = small_config(StrategyKind::kDral, 3);
  const RunResult r = run_al(c);
  const nlohmann::json j = scatter_json(r.log, r.data);
  CHECK(j.at("points").size() == r.data.size());
  CHECK(j.at("rounds").size() == r.log.rows.size() - 1);
  for (const auto& round : j.at("rounds")) {
    CHECK(round.at("selected").size() <= c.round_budget);
    for (const auto& p : round.at("selected")) {
      const SampleId id = p.at("id").get<SampleId>();
      CHECK(p.at("x").get<double>() == (*r.data.coords2d)(id, 0));
      CHECK(p.at("label").get<int>() == (*r.data.labels)[id]);
    }
  }
}

TEST_CASE("config JSON round trip") {
  ExperimentConfig c = small_config(StrategyKind::kDral, 9);
  c.agent.n = 7;
  c.learner.epochs_full = 12;
  nlohmann::json j = c;
  const ExperimentConfig back = j.get<ExperimentConfig>();
  CHECK(nlohmann::json(back) == j);
  const auto path = temp_path("config.json");
  write_file_atomic(path, j.dump());
  CHECK(nlohmann::json(load_config(path)) == j);
  write_file_atomic(path, "{not json");
  CHECK_THROWS_AS(load_config(path), ParameterError);
  std::filesystem::remove(path);
  nlohmann::json bad = {{"strategy", "core-set"}};
  CHECK_THROWS_AS(bad.get<ExperimentConfig>(), ParameterError);
}
