#include "dral/experiment.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <map>

#include <spdlog/spdlog.h>

#include "dral/errors.hpp"
#include "dral/fs_util.hpp"
#include "dral/rng.hpp"

namespace dral {
namespace {

std::string oracle_name(OracleKind k) { return k == OracleKind::kDeferred ? "deferred" : "simulated"; }

OracleKind parse_oracle(const std::string& name) {
  if (name == "simulated") return OracleKind::kSimulated;
  if (name == "deferred") return OracleKind::kDeferred;
  throw ParameterError("unknown oracle kind '" + name + "' (expected simulated or deferred)");
}

// Blob seed and split seed both come from the run seed's data stream.
struct DataSeeds {
  std::uint64_t blobs;
  std::uint64_t split;
};

DataSeeds data_seeds(std::uint64_t seed) {
  Rng rng = make_rng(seed, RngStream::kData);
  const std::uint64_t blobs = rng();
  return {blobs, rng()};
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (round_budget < 1) throw ParameterError("round_budget must be >= 1");
  if (global_budget > 0 && round_budget > global_budget) {
    throw ParameterError("round_budget (" + std::to_string(round_budget) +
                         ") exceeds global_budget (" + std::to_string(global_budget) + ")");
  }
  if (seed_labeled_size < 1) throw ParameterError("seed_labeled_size must be >= 1");
  if (validation_size < 1 || test_size < 1) {
    throw ParameterError("validation_size and test_size must be >= 1");
  }
  if (learner.batch_size < 1) throw ParameterError("learner.batch_size must be >= 1");
  if (learner.epochs_full < 0 || learner.epochs_finetune < 0) {
    throw ParameterError("learner epochs must be >= 0");
  }
  if (strategy == StrategyKind::kDral) agent.validate();
  if (dataset_file.empty()) {
    if (dataset.dims < 1) throw ParameterError("dataset.dims must be >= 1");
    if (dataset.num_classes < 1 || dataset.samples_per_class < 1) {
      throw ParameterError("dataset class/sample counts must be >= 1");
    }
    if (!(dataset.cluster_std > 0.0)) throw ParameterError("dataset.cluster_std must be > 0");
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"dataset", c.dataset},
       {"dataset_file", c.dataset_file},
       {"seed_labeled_size", c.seed_labeled_size},
       {"validation_size", c.validation_size},
       {"test_size", c.test_size},
       {"round_budget", c.round_budget},
       {"global_budget", c.global_budget},
       {"strategy", strategy_name(c.strategy)},
       {"seed", c.seed},
       {"agent", c.agent},
       {"learner", c.learner},
       {"oracle", oracle_name(c.oracle)},
       {"out", c.out},
       {"scatter_out", c.scatter_out}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  try {
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<BlobSpec>();
    c.dataset_file = j.value("dataset_file", c.dataset_file);
    c.seed_labeled_size = j.value("seed_labeled_size", c.seed_labeled_size);
    c.validation_size = j.value("validation_size", c.validation_size);
    c.test_size = j.value("test_size", c.test_size);
    c.round_budget = j.value("round_budget", c.round_budget);
    c.global_budget = j.value("global_budget", c.global_budget);
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    c.seed = j.value("seed", c.seed);
    if (j.contains("agent")) c.agent = j.at("agent").get<AgentConfig>();
    if (j.contains("learner")) c.learner = j.at("learner").get<LearnerConfig>();
    if (j.contains("oracle")) c.oracle = parse_oracle(j.at("oracle").get<std::string>());
    c.out = j.value("out", c.out);
    c.scatter_out = j.value("scatter_out", c.scatter_out);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("bad config field: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return j.get<ExperimentConfig>();
}

Dataset make_dataset(const ExperimentConfig& config) {
  if (!config.dataset_file.empty()) return load_dataset(config.dataset_file);
  BlobSpec spec = config.dataset;
  spec.seed = spec.seed + data_seeds(config.seed).blobs;
  return make_gaussian_blobs(spec);
}

RunResult run_al(const ExperimentConfig& config, Oracle* oracle, const RowCallback& on_row) {
  config.validate();
  if (config.oracle == OracleKind::kDeferred && oracle == nullptr) {
    throw ParameterError("a deferred-oracle run needs an oracle to be supplied");
  }
  const auto start = std::chrono::steady_clock::now();

  RunResult result;
  result.data = make_dataset(config);
  const Dataset& data = result.data;
  if (!data.labels) {
    throw ParameterError("dataset has no labels; validation/test accuracy cannot be computed");
  }
  const std::vector<int>& truth = *data.labels;
  PoolState pool = split_pool(data, config.seed_labeled_size, config.validation_size,
                              config.test_size, data_seeds(config.seed).split);
  result.initial_unlabeled = pool.unlabeled.size();
  if (config.global_budget > pool.unlabeled.size()) {
    throw ParameterError("global_budget " + std::to_string(config.global_budget) +
                         " exceeds the unlabeled pool (" + std::to_string(pool.unlabeled.size()) +
                         ")");
  }

  std::optional<SimulatedOracle> simulated;
  if (oracle == nullptr) {
    simulated.emplace(data);
    oracle = &*simulated;
  }
  LabelBook labels(*oracle, config.global_budget);
  labels.fetch_seed(pool.labeled, pool);

  const std::uint64_t init_seed = derive_seed(config.seed, RngStream::kInit);
  Rng selection_rng = make_rng(config.seed, RngStream::kSelection);
  Classifier clf(data.dims(), data.num_classes, config.learner, init_seed);
  clf.train_full(data.features, labels.labeled_set(pool.labeled));
  const ClassifierSnapshot seed_snapshot = clf.snapshot();

  MetricsLog& log = result.log;
  log.strategy = strategy_name(config.strategy);
  log.seed = config.seed;
  auto record = [&](int round, std::vector<SampleId> selected) {
    MetricsRow row{round,
                   pool.labeled.size(),
                   clf.evaluate_accuracy(data.features, pool.validation, truth),
                   clf.evaluate_accuracy(data.features, pool.test, truth),
                   elapsed_ms(start),
                   std::move(selected)};
    spdlog::info("{} seed={} round={} labels={} val={:.4f} test={:.4f}", log.strategy, log.seed,
                 row.round, row.cumulative_labels, row.val_acc, row.test_acc);
    log.rows.push_back(row);
    if (on_row) on_row(log.rows.back());
  };
  record(0, {});

  const bool is_dral = config.strategy == StrategyKind::kDral;
  std::unique_ptr<QueryStrategy> baseline;
  std::optional<Agent> agent;
  if (is_dral) {
    agent.emplace(clf.feature_dim(), config.agent, derive_seed(init_seed, RngStream::kInit),
                  derive_seed(config.seed, RngStream::kReplay));
  } else {
    baseline = make_baseline_strategy(config.strategy);
  }
  const std::size_t b = config.round_budget;
  const auto step_cap = static_cast<std::size_t>(
      std::max(1.0, std::ceil(50.0 * static_cast<double>(b) / static_cast<double>(config.agent.n))));

  int round = 0;
  while (labels.remaining() > 0 && !pool.unlabeled.empty()) {
    std::vector<SampleId> committed;
    if (!is_dral) {
      const std::size_t k = std::min({b, labels.remaining(), pool.unlabeled.size()});
      committed = baseline->select(pool, clf, data.features, static_cast<int>(k), selection_rng);
      labels.fetch(committed, pool);
      pool.commit(committed);
    } else {
      // A round ends once it has committed or paid for b labels.
      const std::size_t spent_at_start = labels.spent();
      for (std::size_t step = 0; step < step_cap; ++step) {
        const std::size_t round_spent = labels.spent() - spent_at_start;
        if (committed.size() >= b || round_spent >= b) break;
        StepEnv env{data.features, truth, pool, clf, labels, b - committed.size(),
                    b - round_spent, selection_rng};
        const std::size_t labeled_before = pool.labeled.size();
        StepOutcome out = dral_step(*agent, env);
        if (out.terminal) break;
        result.steps.push_back({round + 1, labeled_before, pool.labeled.size(),
                                out.selected.size(), out.newly_queried, out.reward,
                                out.committed});
        if (out.committed) committed.insert(committed.end(), out.selected.begin(), out.selected.end());
      }
      agent->decay_noise();
      if (committed.empty() && labels.spent() == spent_at_start) {
        spdlog::warn("dral seed={}: policy made no progress in a round; stopping with {} of {} "
                     "budget spent", config.seed, labels.spent(), labels.budget());
        break;
      }
      if (committed.empty()) continue;
    }
    clf.restore(seed_snapshot);
    clf.train_full(data.features, labels.labeled_set(pool.labeled));
    record(++round, std::move(committed));
  }

  result.budget_spent = labels.spent();
  result.oracle_queries = pool.oracle_queries_spent;
  result.final_pool = std::move(pool);
  return result;
}

std::vector<std::size_t> label_milestones(const ExperimentConfig& config) {
  std::vector<std::size_t> out;
  const std::size_t seed = config.seed_labeled_size;
  for (std::size_t spent = 0; spent < config.global_budget; spent += config.round_budget) {
    out.push_back(seed + spent);
  }
  out.push_back(seed + config.global_budget);
  return out;
}

std::optional<double> accuracy_at(const MetricsLog& log, std::size_t labels) {
  std::optional<double> acc;
  for (const auto& row : log.rows) {
    if (row.cumulative_labels <= labels) acc = row.test_acc;
  }
  return acc;
}

ComparisonTable aggregate(const ExperimentConfig& config, const std::vector<MetricsLog>& runs) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const MetricsLog*>> by_strategy;
  for (const auto& run : runs) {
    if (!by_strategy.contains(run.strategy)) order.push_back(run.strategy);
    by_strategy[run.strategy].push_back(&run);
  }
  ComparisonTable table;
  for (const auto& name : order) {
    for (std::size_t labels : label_milestones(config)) {
      std::vector<double> accs;
      for (const MetricsLog* run : by_strategy[name]) {
        if (auto acc = accuracy_at(*run, labels)) accs.push_back(*acc);
      }
      if (accs.empty()) continue;
      double mean = 0.0;
      for (double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      double var = 0.0;
      for (double a : accs) var += (a - mean) * (a - mean);
      const double sd =
          accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
      table.rows.push_back({name, labels, mean, sd, accs.size()});
    }
  }
  return table;
}

ComparisonTable compare(const ExperimentConfig& config, const std::vector<StrategyKind>& strategies,
                        const std::vector<std::uint64_t>& seeds, std::vector<MetricsLog>* runs_out,
                        unsigned workers) {
  if (strategies.empty() || seeds.empty()) {
    throw ParameterError("compare needs at least one strategy and one seed");
  }
  std::vector<ExperimentConfig> jobs;
  for (StrategyKind s : strategies) {
    for (std::uint64_t seed : seeds) {
      ExperimentConfig c = config;
      c.strategy = s;
      c.seed = seed;
      c.validate();
      jobs.push_back(std::move(c));
    }
  }
  std::vector<MetricsLog> logs(jobs.size());
  workers = std::max(1u, workers);
  for (std::size_t begin = 0; begin < jobs.size(); begin += workers) {
    const std::size_t end = std::min(jobs.size(), begin + workers);
    std::vector<std::future<MetricsLog>> futures;
    for (std::size_t i = begin; i < end; ++i) {
      futures.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                   [&jobs, i] { return run_al(jobs[i]).log; }));
    }
    for (std::size_t i = begin; i < end; ++i) logs[i] = futures[i - begin].get();
  }
  ComparisonTable table = aggregate(config, logs);
  if (runs_out) *runs_out = std::move(logs);
  return table;
}

}  // namespace dral
