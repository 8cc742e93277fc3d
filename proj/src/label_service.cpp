#include "dral/label_service.hpp"

#include <algorithm>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "dral/errors.hpp"

namespace dral {

DeferredOracle::DeferredOracle(const Dataset& data, std::size_t preview_dims)
    : data_(data), preview_dims_(preview_dims) {}

std::vector<int> DeferredOracle::query(std::span<const SampleId> ids) {
  std::unique_lock lock(mu_);
  for (SampleId id : ids) {
    if (id >= data_.size()) {
      throw ParameterError("oracle query for id " + std::to_string(id) + " out of range");
    }
    if (!fulfilled_.contains(id) && std::find(pending_.begin(), pending_.end(), id) == pending_.end()) {
      pending_.push_back(id);
    }
  }
  cv_.wait(lock, [&] { return pending_.empty() || cancelled_; });
  if (cancelled_) throw SessionCancelled();
  std::vector<int> out;
  out.reserve(ids.size());
  for (SampleId id : ids) out.push_back(fulfilled_.at(id));
  return out;
}

std::vector<PendingSample> DeferredOracle::pending() const {
  std::lock_guard lock(mu_);
  std::vector<PendingSample> out;
  for (SampleId id : pending_) {
    PendingSample p;
    p.id = id;
    if (data_.coords2d) {
      p.x = (*data_.coords2d)(id, 0);
      p.y = (*data_.coords2d)(id, 1);
    } else {
      p.x = data_.features(id, 0);
      p.y = data_.dims() > 1 ? data_.features(id, 1) : 0.0;
    }
    auto row = data_.features.row(id);
    p.preview.assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(
                                                    std::min(preview_dims_, row.size())));
    out.push_back(std::move(p));
  }
  return out;
}

bool DeferredOracle::awaiting() const {
  std::lock_guard lock(mu_);
  return !pending_.empty();
}

std::size_t DeferredOracle::submit(const std::map<SampleId, int>& labels) {
  std::lock_guard lock(mu_);
  for (const auto& [id, label] : labels) {
    if (label < 0 || label >= data_.num_classes) {
      throw ServiceError(422, "label " + std::to_string(label) + " for id " + std::to_string(id) +
                                  " outside [0, " + std::to_string(data_.num_classes) + ")");
    }
    if (auto it = fulfilled_.find(id); it != fulfilled_.end()) {
      if (it->second != label) {
        throw ServiceError(409, "id " + std::to_string(id) + " already labeled " +
                                    std::to_string(it->second));
      }
      continue;
    }
    if (std::find(pending_.begin(), pending_.end(), id) == pending_.end()) {
      throw ServiceError(422, "id " + std::to_string(id) + " is not pending");
    }
  }
  for (const auto& [id, label] : labels) {
    if (fulfilled_.emplace(id, label).second) std::erase(pending_, id);
  }
  if (pending_.empty()) cv_.notify_all();
  return labels.size();
}

void DeferredOracle::cancel() {
  {
    std::lock_guard lock(mu_);
    cancelled_ = true;
  }
  cv_.notify_all();
}

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::kRunning: return "running";
    case SessionStatus::kAwaitingLabels: return "awaiting-labels";
    case SessionStatus::kFinished: return "finished";
    case SessionStatus::kFailed: return "failed";
  }
  return "running";
}

namespace {

// Catches config problems before the worker thread starts.
Dataset preflight(const ExperimentConfig& config) {
  config.validate();
  Dataset data = make_dataset(config);
  if (!data.labels) throw ParameterError("dataset needs labels for validation/test accuracy");
  const std::size_t held_out =
      config.seed_labeled_size + config.validation_size + config.test_size;
  if (held_out > data.size()) throw ParameterError("split sizes exceed dataset size");
  if (config.global_budget > data.size() - held_out) {
    throw ParameterError("global_budget exceeds the unlabeled pool");
  }
  return data;
}

}  // namespace

LabelSession::LabelSession(std::string id, ExperimentConfig config,
                           std::optional<std::filesystem::path> output_dir)
    : id_(std::move(id)),
      config_(std::move(config)),
      output_dir_(std::move(output_dir)),
      data_(preflight(config_)),
      oracle_(data_) {
  worker_ = std::thread([this] { run(); });
}

LabelSession::~LabelSession() {
  oracle_.cancel();
  if (worker_.joinable()) worker_.join();
}

void LabelSession::run() {
  std::string error;
  try {
    RunResult result = run_al(config_, &oracle_, [this](const MetricsRow& row) {
      std::lock_guard lock(mu_);
      log_.rows.push_back(row);
    });
    std::lock_guard lock(mu_);
    log_ = result.log;
    if (output_dir_) export_csv({log_}, *output_dir_ / (id_ + ".csv"));
  } catch (const SessionCancelled&) {
    error = "cancelled";
  } catch (const std::exception& e) {
    error = e.what();
    spdlog::error("session {} failed: {}", id_, error);
  }
  {
    std::lock_guard lock(mu_);
    error_ = error;
    done_ = true;
  }
  done_cv_.notify_all();
}

SessionStatus LabelSession::status() const {
  {
    std::lock_guard lock(mu_);
    if (done_) return error_.empty() ? SessionStatus::kFinished : SessionStatus::kFailed;
  }
  return oracle_.awaiting() ? SessionStatus::kAwaitingLabels : SessionStatus::kRunning;
}

nlohmann::json LabelSession::pending_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& p : oracle_.pending()) {
    items.push_back({{"id", p.id}, {"x", p.x}, {"y", p.y}, {"preview", p.preview}});
  }
  return {{"session", id_},
          {"status", to_string(status())},
          {"num_classes", data_.num_classes},
          {"pending", items}};
}

MetricsLog LabelSession::metrics() const {
  std::lock_guard lock(mu_);
  MetricsLog log = log_;
  log.strategy = strategy_name(config_.strategy);
  log.seed = config_.seed;
  return log;
}

nlohmann::json LabelSession::scatter() const { return scatter_json(metrics(), data_); }

std::string LabelSession::error() const {
  std::lock_guard lock(mu_);
  return error_;
}

void LabelSession::wait() const {
  std::unique_lock lock(mu_);
  done_cv_.wait(lock, [&] { return done_; });
}

SessionManager::SessionManager(std::optional<ExperimentConfig> default_config,
                               std::optional<std::filesystem::path> output_dir)
    : default_config_(std::move(default_config)), output_dir_(std::move(output_dir)) {}

std::string SessionManager::create(const std::string& body) {
  ExperimentConfig config;
  try {
    if (body.find_first_not_of(" \t\r\n") == std::string::npos) {
      if (!default_config_) throw ServiceError(400, "empty body and no default config");
      config = *default_config_;
    } else {
      const auto j = nlohmann::json::parse(body);
      if (!j.is_object()) throw ServiceError(400, "config must be a JSON object");
      if (j.value("oracle", std::string("deferred")) == "simulated") {
        throw ServiceError(400, "simulated-oracle runs belong on the command line");
      }
      config = j.get<ExperimentConfig>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, std::string("invalid config JSON: ") + e.what());
  } catch (const ParameterError& e) {
    throw ServiceError(400, e.what());
  }
  config.oracle = OracleKind::kDeferred;

  std::lock_guard lock(mu_);
  std::string id = "s" + std::to_string(next_id_++);
  try {
    sessions_.emplace(id, std::make_unique<LabelSession>(id, config, output_dir_));
  } catch (const ParameterError& e) {
    throw ServiceError(400, e.what());
  } catch (const IoError& e) {
    throw ServiceError(400, e.what());
  }
  return id;
}

LabelSession& SessionManager::get(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + id + "'");
  return *it->second;
}

nlohmann::json SessionManager::pending(const std::string& id) { return get(id).pending_json(); }

nlohmann::json SessionManager::submit(const std::string& id, const std::string& body) {
  LabelSession& session = get(id);
  std::map<SampleId, int> labels;
  try {
    const auto j = nlohmann::json::parse(body);
    for (const auto& [key, value] : j.at("labels").items()) {
      std::size_t used = 0;
      const unsigned long long parsed = std::stoull(key, &used);
      if (used != key.size()) throw ServiceError(422, "bad sample id '" + key + "'");
      labels[static_cast<SampleId>(parsed)] = value.get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, std::string("expected {\"labels\": {id: class}}: ") + e.what());
  } catch (const std::logic_error&) {
    throw ServiceError(422, "sample ids must be non-negative integers");
  }
  const std::size_t accepted = session.submit(labels);
  return {{"accepted", accepted}, {"status", to_string(session.status())}};
}

nlohmann::json SessionManager::metrics(const std::string& id) {
  LabelSession& session = get(id);
  nlohmann::json j = metrics_json(session.metrics());
  j["status"] = to_string(session.status());
  if (const auto err = session.error(); !err.empty()) j["error"] = err;
  return j;
}

nlohmann::json SessionManager::scatter(const std::string& id) { return get(id).scatter(); }

LabelServer::LabelServer(SessionManager& sessions, std::optional<std::filesystem::path> static_dir)
    : sessions_(sessions), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  auto reply = [](httplib::Response& res, const nlohmann::json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  auto guarded = [reply](auto handler) {
    return [handler, reply](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const ServiceError& e) {
        reply(res, {{"error", e.what()}}, e.status());
      } catch (const std::exception& e) {
        reply(res, {{"error", e.what()}}, 500);
      }
    };
  };

  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Post("/sessions", guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
             const std::string id = sessions_.create(req.body);
             reply(res, {{"id", id}, {"status", to_string(sessions_.get(id).status())}}, 201);
           }));
  srv.Get(R"(/sessions/([^/]+)/pending)",
          guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, sessions_.pending(req.matches[1]));
          }));
  srv.Post(R"(/sessions/([^/]+)/labels)",
           guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
             reply(res, sessions_.submit(req.matches[1], req.body));
           }));
  srv.Get(R"(/sessions/([^/]+)/metrics)",
          guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, sessions_.metrics(req.matches[1]));
          }));
  srv.Get(R"(/sessions/([^/]+)/scatter)",
          guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, sessions_.scatter(req.matches[1]));
          }));
  if (static_dir && !srv.set_mount_point("/", static_dir->string())) {
    throw IoError("static directory '" + static_dir->string() + "' does not exist");
  }
}

LabelServer::~LabelServer() { stop(); }

int LabelServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool LabelServer::listen() { return server_->listen_after_bind(); }

void LabelServer::stop() {
  if (server_) server_->stop();
}

}  // namespace dral
