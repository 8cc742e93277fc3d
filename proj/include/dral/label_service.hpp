#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dral/experiment.hpp"
#include "dral/oracle.hpp"

namespace httplib {
class Server;
}

namespace dral {

// Error carrying the HTTP status it maps to.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// Thrown inside a blocked query when its session is torn down.
class SessionCancelled : public std::runtime_error {
 public:
  SessionCancelled() : std::runtime_error("session cancelled") {}
};

struct PendingSample {
  SampleId id = 0;
  double x = 0.0;
  double y = 0.0;
  std::vector<double> preview;  // leading feature values
};

/// Oracle answered from outside: query() publishes the ids it needs and
/// blocks until every one of them has been submitted.
class DeferredOracle : public Oracle {
 public:
  explicit DeferredOracle(const Dataset& data, std::size_t preview_dims = 4);

  std::vector<int> query(std::span<const SampleId> ids) override;
  OracleKind kind() const override { return OracleKind::kDeferred; }

  std::vector<PendingSample> pending() const;
  bool awaiting() const;
  // All-or-nothing. Re-sending a fulfilled id with the same label is
  // accepted; a different label is a 409, an out-of-range label or an id
  // that was never requested is a 422. Returns the accepted count.
  std::size_t submit(const std::map<SampleId, int>& labels);
  void cancel();

 private:
  const Dataset& data_;
  std::size_t preview_dims_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<SampleId> pending_;
  std::map<SampleId, int> fulfilled_;
  bool cancelled_ = false;
};

enum class SessionStatus { kRunning, kAwaitingLabels, kFinished, kFailed };
std::string to_string(SessionStatus s);

/// One active-learning run whose oracle is a human behind the HTTP API.
class LabelSession {
 public:
  LabelSession(std::string id, ExperimentConfig config,
               std::optional<std::filesystem::path> output_dir);
  ~LabelSession();
  LabelSession(const LabelSession&) = delete;
  LabelSession& operator=(const LabelSession&) = delete;

  const std::string& id() const { return id_; }
  SessionStatus status() const;
  nlohmann::json pending_json() const;
  std::size_t submit(const std::map<SampleId, int>& labels) { return oracle_.submit(labels); }
  MetricsLog metrics() const;
  nlohmann::json scatter() const;
  std::string error() const;
  // Blocks until the loop has finished or failed.
  void wait() const;

 private:
  void run();

  std::string id_;
  ExperimentConfig config_;
  std::optional<std::filesystem::path> output_dir_;
  Dataset data_;
  DeferredOracle oracle_;
  mutable std::mutex mu_;
  mutable std::condition_variable done_cv_;
  MetricsLog log_;
  bool done_ = false;
  std::string error_;
  std::thread worker_;
};

/// Session registry behind the HTTP routes.
class SessionManager {
 public:
  explicit SessionManager(std::optional<ExperimentConfig> default_config = std::nullopt,
                          std::optional<std::filesystem::path> output_dir = std::nullopt);

  // Body may be empty (uses the default config) or a config JSON object.
  // Invalid or simulated-oracle configs raise ServiceError(400).
  std::string create(const std::string& body);
  LabelSession& get(const std::string& id);

  nlohmann::json pending(const std::string& id);
  // Body: {"labels": {"<id>": <class>, ...}}.
  nlohmann::json submit(const std::string& id, const std::string& body);
  nlohmann::json metrics(const std::string& id);
  nlohmann::json scatter(const std::string& id);

 private:
  std::optional<ExperimentConfig> default_config_;
  std::optional<std::filesystem::path> output_dir_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<LabelSession>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// HTTP/JSON front end:
///   POST /sessions, GET /sessions/{id}/pending, POST /sessions/{id}/labels,
///   GET /sessions/{id}/metrics, GET /sessions/{id}/scatter.
class LabelServer {
 public:
  explicit LabelServer(SessionManager& sessions,
                       std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~LabelServer();

  // Returns the bound port (useful with port 0).
  int bind(const std::string& host, int port);
  // Blocks serving requests until stop().
  bool listen();
  void stop();

 private:
  SessionManager& sessions_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace dral
