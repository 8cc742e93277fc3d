#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dral/agent.hpp"
#include "dral/classifier.hpp"
#include "dral/dataset.hpp"
#include "dral/oracle.hpp"
#include "dral/strategies.hpp"

namespace dral {

struct ExperimentConfig {
  BlobSpec dataset;                     // used when dataset_file is empty
  std::string dataset_file;
  std::size_t seed_labeled_size = 100;
  std::size_t validation_size = 200;
  std::size_t test_size = 400;
  std::size_t round_budget = 20;        // b
  std::size_t global_budget = 200;      // B
  StrategyKind strategy = StrategyKind::kMargin;
  std::uint64_t seed = 0;
  AgentConfig agent;
  LearnerConfig learner;
  OracleKind oracle = OracleKind::kSimulated;
  std::string out;
  std::string scatter_out;

  // Checks that do not need the dataset (budgets, sizes, sub-configs).
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);

struct MetricsRow {
  int round = 0;
  std::size_t cumulative_labels = 0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double wall_ms = 0.0;
  std::vector<SampleId> selected;
};

/// Per-round accuracy record for one (strategy, seed) run. Round 0 is the
/// classifier trained on the seed set only.
struct MetricsLog {
  std::string strategy;
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
};

// One dral_step as seen by the loop.
struct StepRecord {
  int round = 0;
  std::size_t labeled_before = 0;
  std::size_t labeled_after = 0;
  std::size_t selected = 0;
  std::size_t newly_queried = 0;
  double reward = 0.0;
  bool committed = false;
};

struct RunResult {
  MetricsLog log;
  std::vector<StepRecord> steps;   // DRAL only
  std::size_t budget_spent = 0;    // distinct non-seed ids sent to the oracle
  std::size_t oracle_queries = 0;  // seed + budget_spent
  std::size_t initial_unlabeled = 0;
  Dataset data;
  PoolState final_pool;
};

using RowCallback = std::function<void(const MetricsRow&)>;

// Dataset for a config: loaded from dataset_file, or blobs whose seed is
// derived from the run seed's data stream.
Dataset make_dataset(const ExperimentConfig& config);

// Full active-learning run. `oracle` defaults to ground truth. Config errors
// raise ParameterError before any training happens.
RunResult run_al(const ExperimentConfig& config, Oracle* oracle = nullptr,
                 const RowCallback& on_row = {});

struct ComparisonRow {
  std::string strategy;
  std::size_t labels = 0;
  double mean_acc = 0.0;
  double std_acc = 0.0;  // sample standard deviation; 0 for a single seed
  std::size_t n_seeds = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;  // strategy-major, labels ascending
};

// Label milestones seed + k b, closed by seed + B.
std::vector<std::size_t> label_milestones(const ExperimentConfig& config);

// Test accuracy with at most `labels` labels: the last row not exceeding it.
std::optional<double> accuracy_at(const MetricsLog& log, std::size_t labels);

// Runs every (strategy, seed) pair and aggregates test accuracy at the label
// milestones. `runs_out`, when given, receives the logs in (strategy, seed)
// order.
ComparisonTable compare(const ExperimentConfig& config, const std::vector<StrategyKind>& strategies,
                        const std::vector<std::uint64_t>& seeds,
                        std::vector<MetricsLog>* runs_out = nullptr, unsigned workers = 1);

ComparisonTable aggregate(const ExperimentConfig& config, const std::vector<MetricsLog>& runs);

// Fixed-header CSV codecs.
inline constexpr const char* kMetricsHeader =
    "strategy,seed,round,cumulative_labels,val_acc,test_acc,wall_ms";
inline constexpr const char* kComparisonHeader = "strategy,labels,mean_acc,std_acc,n_seeds";

std::string metrics_csv(const std::vector<MetricsLog>& logs);
std::vector<MetricsLog> parse_metrics_csv(const std::string& csv);
std::string comparison_csv(const ComparisonTable& table);
ComparisonTable parse_comparison_csv(const std::string& csv);
// Strategies as rows, label counts as columns, "mean±std" cells.
std::string comparison_text(const ComparisonTable& table);

void export_csv(const std::vector<MetricsLog>& logs, const std::filesystem::path& path);
void export_csv(const ComparisonTable& table, const std::filesystem::path& path);

// Per-round selected points with 2-D source coordinates and classes, plus
// the background pool.
nlohmann::json scatter_json(const MetricsLog& log, const Dataset& data);
void export_scatter(const MetricsLog& log, const Dataset& data, const std::filesystem::path& path);

nlohmann::json metrics_json(const MetricsLog& log);

}  // namespace dral
