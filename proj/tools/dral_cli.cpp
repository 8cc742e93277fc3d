// Command-line entry point: generate-data, run, compare, serve, grad-check.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 runtime failure.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dral/errors.hpp"
#include "dral/experiment.hpp"
#include "dral/fs_util.hpp"
#include "dral/gradcheck.hpp"
#include "dral/label_service.hpp"
#include "dral/logging.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string strategy;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> round_budget;
};

dral::ExperimentConfig resolve_config(const CommonFlags& f) {
  dral::ExperimentConfig config = f.config.empty() ? dral::ExperimentConfig{} : dral::load_config(f.config);
  if (f.seed) config.seed = *f.seed;
  if (!f.strategy.empty()) config.strategy = dral::parse_strategy(f.strategy);
  if (f.budget) config.global_budget = *f.budget;
  if (f.round_budget) config.round_budget = *f.round_budget;
  if (!f.out.empty()) config.out = f.out;
  config.validate();
  return config;
}

void add_experiment_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Experiment config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Run seed (overrides config)");
  cmd->add_option("--budget", f.budget, "Global labeling budget B");
  cmd->add_option("--round-budget", f.round_budget, "Labels per retraining round b");
}

int cmd_generate(const CommonFlags& f, const dral::BlobSpec& flags_spec, bool spec_from_flags) {
  dral::BlobSpec spec = flags_spec;
  if (!spec_from_flags && !f.config.empty()) spec = dral::load_config(f.config).dataset;
  if (f.seed) spec.seed = *f.seed;
  const dral::Dataset data = dral::make_gaussian_blobs(spec);
  dral::save_dataset(data, f.out);
  std::printf("wrote %zu samples (%d classes, %zu dims) to %s\n", data.size(), data.num_classes,
              data.dims(), f.out.c_str());
  return 0;
}

int cmd_run(const CommonFlags& f, const std::string& scatter_out) {
  dral::ExperimentConfig config = resolve_config(f);
  if (config.out.empty()) throw dral::ParameterError("run needs --out (or \"out\" in the config)");
  if (!scatter_out.empty()) config.scatter_out = scatter_out;
  const dral::RunResult result = dral::run_al(config);
  dral::export_csv({result.log}, config.out);
  if (!config.scatter_out.empty()) dral::export_scatter(result.log, result.data, config.scatter_out);
  const auto& last = result.log.rows.back();
  std::printf("%s seed=%llu rounds=%d labels=%zu budget_spent=%zu test_acc=%.4f -> %s\n",
              result.log.strategy.c_str(), static_cast<unsigned long long>(config.seed), last.round,
              last.cumulative_labels, result.budget_spent, last.test_acc, config.out.c_str());
  return 0;
}

int cmd_compare(const CommonFlags& f, const std::string& strategies, std::size_t seeds,
                const std::string& runs_out, unsigned workers) {
  dral::ExperimentConfig config = resolve_config(f);
  if (config.out.empty()) throw dral::ParameterError("compare needs --out");
  if (seeds < 1) throw dral::ParameterError("--seeds must be >= 1");
  std::vector<std::uint64_t> seed_list;
  for (std::size_t i = 0; i < seeds; ++i) seed_list.push_back(config.seed + i);
  std::vector<dral::MetricsLog> runs;
  const dral::ComparisonTable table = dral::compare(config, dral::parse_strategy_list(strategies),
                                                    seed_list, &runs, workers);
  dral::export_csv(table, config.out);
  if (!runs_out.empty()) dral::export_csv(runs, runs_out);
  std::cout << dral::comparison_text(table);
  return 0;
}

dral::LabelServer* g_server = nullptr;

extern "C" void handle_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const CommonFlags& f, const std::string& host, int port,
              const std::string& static_dir) {
  CommonFlags cfg_flags = f;
  cfg_flags.out.clear();
  const dral::ExperimentConfig defaults = resolve_config(cfg_flags);
  std::optional<std::filesystem::path> out_dir;
  if (!f.out.empty()) {
    std::filesystem::create_directories(f.out);
    out_dir = f.out;
  }
  dral::SessionManager sessions(defaults, out_dir);
  dral::LabelServer server(sessions, static_dir.empty()
                                         ? std::nullopt
                                         : std::optional<std::filesystem::path>(static_dir));
  const int bound = server.bind(host, port);
  if (bound < 0) throw dral::IoError("cannot bind " + host + ":" + std::to_string(port));
  std::printf("label service listening on http://%s:%d\n", host.c_str(), bound);
  std::fflush(stdout);
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

int cmd_grad_check(const CommonFlags& f) {
  const dral::GradCheckReport report = dral::run_grad_check(f.seed.value_or(0));
  for (const auto& c : report.cases) {
    std::printf("%-28s max_rel_error=%.3e tol=%.0e %s\n", c.name.c_str(), c.max_rel_error,
                c.tolerance, c.passed() ? "ok" : "FAIL");
  }
  std::printf("max relative error: layers %.3e, critic(actor) %.3e\n", report.max_layer_error(),
              report.max_composed_error());
  if (!f.out.empty()) dral::write_file_atomic(f.out, report.to_json().dump(2));
  return report.passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  dral::init_logging();
  CLI::App app{"Deep reinforcement active learning: agent, baselines and labeling service"};
  app.require_subcommand(1);

  CommonFlags gen_f, run_f, cmp_f, serve_f, grad_f;

  auto* gen = app.add_subcommand("generate-data", "Write a Gaussian-blobs dataset as JSON");
  dral::BlobSpec blob;
  gen->add_option("--config", gen_f.config, "Take the dataset spec from an experiment config")
      ->check(CLI::ExistingFile);
  gen->add_option("--seed", gen_f.seed, "Generation seed");
  gen->add_option("--out", gen_f.out, "Output dataset path")->required();
  auto* classes = gen->add_option("--classes", blob.num_classes, "Number of classes");
  auto* dims = gen->add_option("--dims", blob.dims, "Feature dimensions");
  auto* per = gen->add_option("--per-class", blob.samples_per_class, "Samples per class");
  auto* stdev = gen->add_option("--std", blob.cluster_std, "Cluster standard deviation");
  auto* spacing = gen->add_option("--spacing", blob.center_spacing, "Distance between centers");

  auto* run = app.add_subcommand("run", "One active-learning run; writes the metrics CSV");
  add_experiment_flags(run, run_f);
  run->add_option("--strategy", run_f.strategy, "random|entropy|least-confidence|margin|dral");
  run->add_option("--out", run_f.out, "Metrics CSV path");
  std::string scatter_out;
  run->add_option("--scatter", scatter_out, "Also write the selection scatter JSON here");

  auto* cmp = app.add_subcommand("compare", "Strategies x seeds table of test accuracy");
  add_experiment_flags(cmp, cmp_f);
  std::string strategies = "random,entropy,least-confidence,margin,dral";
  std::size_t seeds = 5;
  std::string runs_out;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  cmp->add_option("--strategies", strategies, "Comma-separated strategy names");
  cmp->add_option("--seeds", seeds, "Number of seeds, starting at --seed");
  cmp->add_option("--out", cmp_f.out, "Comparison CSV path");
  cmp->add_option("--runs-out", runs_out, "Per-run metrics CSV path");
  cmp->add_option("--workers", workers, "Parallel runs");

  auto* serve = app.add_subcommand("serve", "HTTP labeling service with a human oracle");
  serve->add_option("--config", serve_f.config, "Default session config")->check(CLI::ExistingFile);
  serve->add_option("--seed", serve_f.seed, "Seed for the default config");
  serve->add_option("--out", serve_f.out, "Directory receiving finished session CSVs");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--static-dir", static_dir, "Serve the labeling UI from this directory");

  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of all gradients");
  grad->add_option("--seed", grad_f.seed, "Seed for the random nets");
  grad->add_option("--out", grad_f.out, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const bool from_flags = classes->count() + dims->count() + per->count() + stdev->count() +
                                  spacing->count() > 0;
      return cmd_generate(gen_f, blob, from_flags);
    }
    if (*run) return cmd_run(run_f, scatter_out);
    if (*cmp) return cmd_compare(cmp_f, strategies, seeds, runs_out, workers);
    if (*serve) return cmd_serve(serve_f, host, port, static_dir);
    if (*grad) return cmd_grad_check(grad_f);
  } catch (const dral::ParameterError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
