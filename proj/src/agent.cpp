#include "dral/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dral/errors.hpp"

namespace dral {
namespace {

constexpr double kRawLimit = 1.0 - 1e-12;

DenseNet make_head(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                   Activation output, Rng& rng) {
  std::vector<LayerSpec> specs;
  for (std::size_t width : hidden) specs.push_back({width, Activation::kRelu});
  specs.push_back({1, output});
  return DenseNet::make(input_dim, specs, rng);
}

}  // namespace

void AgentConfig::validate() const {
  if (n < 1) throw ParameterError("agent: n must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("agent: gamma must lie in [0, 1)");
  if (!(lambda_soft >= 0.0 && lambda_soft <= 1.0)) {
    throw ParameterError("agent: lambda_soft must lie in [0, 1]");
  }
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) {
    throw ParameterError("agent: learning rates must be positive");
  }
  if (exploration_noise_std < 0.0) throw ParameterError("agent: noise std must be >= 0");
}

void to_json(nlohmann::json& j, const AgentConfig& c) {
  j = {{"n", c.n},
       {"gamma", c.gamma},
       {"lambda_soft", c.lambda_soft},
       {"actor_lr", c.actor_lr},
       {"critic_lr", c.critic_lr},
       {"exploration_noise_std", c.exploration_noise_std},
       {"noise_decay", c.noise_decay},
       {"reuse_rejected_labels", c.reuse_rejected_labels},
       {"actor_hidden", c.actor_hidden},
       {"critic_hidden", c.critic_hidden},
       {"replay_capacity", c.replay_capacity},
       {"replay_min_fill", c.replay_min_fill},
       {"replay_batch", c.replay_batch}};
}

void from_json(const nlohmann::json& j, AgentConfig& c) {
  c.n = j.value("n", c.n);
  c.gamma = j.value("gamma", c.gamma);
  c.lambda_soft = j.value("lambda_soft", c.lambda_soft);
  c.actor_lr = j.value("actor_lr", c.actor_lr);
  c.critic_lr = j.value("critic_lr", c.critic_lr);
  c.exploration_noise_std = j.value("exploration_noise_std", c.exploration_noise_std);
  c.noise_decay = j.value("noise_decay", c.noise_decay);
  c.reuse_rejected_labels = j.value("reuse_rejected_labels", c.reuse_rejected_labels);
  c.actor_hidden = j.value("actor_hidden", c.actor_hidden);
  c.critic_hidden = j.value("critic_hidden", c.critic_hidden);
  c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
  c.replay_min_fill = j.value("replay_min_fill", c.replay_min_fill);
  c.replay_batch = j.value("replay_batch", c.replay_batch);
}

std::size_t ActionVec::popcount() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

State build_state(const PoolState& pool, const Classifier& clf, const Matrix& features,
                  std::size_t n) {
  if (pool.unlabeled.empty()) throw StateError("build_state: unlabeled pool is empty");
  if (n < 1) throw ParameterError("build_state: n must be >= 1");
  const Matrix probs = clf.predict_proba(features, pool.unlabeled);
  const std::vector<double> margin = score_margin(probs);
  std::vector<std::size_t> order(pool.unlabeled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // unlabeled is sorted by id, so stability gives the id tie-break.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return margin[a] < margin[b]; });

  State state;
  const std::size_t real = std::min(n, order.size());
  for (std::size_t i = 0; i < n; ++i) {
    state.ids.push_back(pool.unlabeled[order[i < real ? i : 0]]);
    state.selectable.push_back(i < real ? 1 : 0);
  }
  state.features = clf.extract_features(features, state.ids);
  return state;
}

double compute_reward(double acc_after, double acc_before) { return acc_after - acc_before; }

Agent::Agent(std::size_t feature_dim, AgentConfig config, std::uint64_t init_seed,
             std::uint64_t replay_seed)
    : config_(std::move(config)),
      feature_dim_(feature_dim),
      buffer_(config_.replay_capacity, config_.replay_min_fill, config_.replay_batch),
      replay_rng_(make_rng(replay_seed)),
      noise_std_(config_.exploration_noise_std) {
  config_.validate();
  if (feature_dim_ < 1) throw ParameterError("agent: feature_dim must be >= 1");
  Rng rng = make_rng(init_seed);
  actor_ = make_head(feature_dim_, config_.actor_hidden, Activation::kTanh, rng);
  critic_ = make_head(config_.n * feature_dim_ + config_.n, config_.critic_hidden,
                      Activation::kIdentity, rng);
  target_actor_ = actor_;
  target_critic_ = critic_;
  actor_opt_ = Optimizer(OptimizerConfig::adam(config_.actor_lr), actor_);
  critic_opt_ = Optimizer(OptimizerConfig::adam(config_.critic_lr), critic_);
}

ActionVec Agent::act(const State& state, bool training, Rng& noise_rng) const {
  if (state.features.cols() != feature_dim_) {
    throw ShapeError("act: state has " + std::to_string(state.features.cols()) +
                     " feature columns, actor expects " + std::to_string(feature_dim_));
  }
  const Matrix out = actor_.predict(state.features);
  std::normal_distribution<double> noise(0.0, training && noise_std_ > 0.0 ? noise_std_ : 1.0);
  ActionVec action;
  for (std::size_t i = 0; i < state.size(); ++i) {
    double raw = out(i, 0);
    if (training && noise_std_ > 0.0) raw = std::clamp(raw + noise(noise_rng), -kRawLimit, kRawLimit);
    if (!state.selectable[i]) raw = 0.0;
    action.raw.push_back(raw);
    action.bits.push_back(raw > 0.0 ? 1 : 0);
  }
  return action;
}

std::vector<double> Agent::relaxed_action(std::span<const double> raw,
                                          std::span<const std::uint8_t> mask) const {
  std::vector<double> a(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) a[i] = mask[i] ? 0.5 * (raw[i] + 1.0) : 0.0;
  return a;
}

double Agent::q_value(const Matrix& state, std::span<const double> action_values) const {
  const std::size_t n = config_.n;
  if (state.rows() != n || state.cols() != feature_dim_ || action_values.size() != n) {
    throw ShapeError("q_value: expected an " + std::to_string(n) + "x" +
                     std::to_string(feature_dim_) + " state and " + std::to_string(n) +
                     " actions");
  }
  Matrix x(1, n * feature_dim_ + n);
  std::copy(state.values().begin(), state.values().end(), x.row(0).begin());
  std::copy(action_values.begin(), action_values.end(),
            x.row(0).begin() + static_cast<std::ptrdiff_t>(n * feature_dim_));
  return critic_.predict(x)(0, 0);
}

Matrix Agent::stacked_rows(std::span<const TransitionRec> batch, bool next_state) const {
  const std::size_t n = config_.n;
  Matrix rows(batch.size() * n, feature_dim_);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Matrix& s = next_state ? batch[b].next_state : batch[b].state;
    if (s.rows() != n || s.cols() != feature_dim_) {
      throw ShapeError("transition " + std::to_string(b) + " state is " +
                       std::to_string(s.rows()) + "x" + std::to_string(s.cols()));
    }
    std::copy(s.values().begin(), s.values().end(),
              rows.values().begin() + static_cast<std::ptrdiff_t>(b * n * feature_dim_));
  }
  return rows;
}

Matrix Agent::critic_inputs(std::span<const TransitionRec> batch, bool next_state,
                            const std::vector<std::vector<double>>& actions) const {
  const std::size_t n = config_.n;
  const std::size_t state_width = n * feature_dim_;
  Matrix x(batch.size(), state_width + n);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Matrix& s = next_state ? batch[b].next_state : batch[b].state;
    auto row = x.row(b);
    std::copy(s.values().begin(), s.values().end(), row.begin());
    std::copy(actions[b].begin(), actions[b].end(),
              row.begin() + static_cast<std::ptrdiff_t>(state_width));
  }
  return x;
}

double Agent::td_target(const Matrix& next_state, std::span<const std::uint8_t> next_mask,
                        double reward) const {
  const Matrix raw = target_actor_.predict(next_state);
  const std::vector<double> a = relaxed_action(raw.values(), next_mask);
  // Matrix column values are contiguous, so q_value-style packing applies.
  const std::size_t n = config_.n;
  Matrix x(1, n * feature_dim_ + n);
  std::copy(next_state.values().begin(), next_state.values().end(), x.row(0).begin());
  std::copy(a.begin(), a.end(), x.row(0).begin() + static_cast<std::ptrdiff_t>(n * feature_dim_));
  return config_.gamma * target_critic_.predict(x)(0, 0) + reward;
}

double Agent::critic_update(std::span<const TransitionRec> batch) {
  if (batch.empty()) throw ParameterError("critic_update: empty batch");
  const std::size_t n = config_.n;

  // TD targets through the target networks.
  const Matrix next_raw = target_actor_.predict(stacked_rows(batch, /*next_state=*/true));
  std::vector<std::vector<double>> next_actions;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    next_actions.push_back(relaxed_action(
        std::span<const double>(next_raw.values().data() + b * n, n), batch[b].next_mask));
  }
  const Matrix next_q = target_critic_.predict(critic_inputs(batch, true, next_actions));
  std::vector<double> targets(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    targets[b] = config_.gamma * next_q(b, 0) + batch[b].reward;
  }

  std::vector<std::vector<double>> taken;
  for (const auto& rec : batch) taken.emplace_back(rec.action.begin(), rec.action.end());
  const Matrix q = critic_.forward(critic_inputs(batch, false, taken));
  const LossResult loss = mean_squared_error(q, targets);
  if (!std::isfinite(loss.loss)) throw NonFiniteError("critic loss is not finite");
  critic_opt_.step(critic_, critic_.backward(loss.grad));
  critic_.clear_cache();
  return loss.loss;
}

NetGradients Agent::policy_gradient(std::span<const TransitionRec> batch, double* objective) {
  if (batch.empty()) throw ParameterError("actor_update: empty batch");
  const std::size_t n = config_.n;
  const std::size_t state_width = n * feature_dim_;
  const Matrix raw = actor_.forward(stacked_rows(batch, false));
  std::vector<std::vector<double>> actions;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    actions.push_back(relaxed_action(std::span<const double>(raw.values().data() + b * n, n),
                                     batch[b].state_mask));
  }
  // Backprop through a scratch copy so the critic's own cache stays untouched.
  DenseNet critic = critic_;
  const Matrix q = critic.forward(critic_inputs(batch, false, actions));
  const double batch_size = static_cast<double>(batch.size());
  double mean_q = 0.0;
  for (double v : q.values()) mean_q += v;
  mean_q /= batch_size;
  if (!std::isfinite(mean_q)) throw NonFiniteError("actor objective is not finite");
  if (objective) *objective = mean_q;

  const Matrix d_input = critic.backward(Matrix(batch.size(), 1, 1.0 / batch_size)).input;
  Matrix d_raw(raw.rows(), 1);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const double mask = batch[b].state_mask[i] ? 1.0 : 0.0;
      d_raw(b * n + i, 0) = 0.5 * mask * d_input(b, state_width + i);
    }
  }
  NetGradients grads = actor_.backward(d_raw);
  actor_.clear_cache();
  return grads;
}

double Agent::actor_update(std::span<const TransitionRec> batch) {
  double objective = 0.0;
  NetGradients grads = policy_gradient(batch, &objective);
  // Ascent on Q: hand the optimizer the negated gradient.
  for (auto& layer : grads.layers) {
    for (double& g : layer.weights.values()) g = -g;
    for (double& g : layer.bias) g = -g;
  }
  actor_opt_.step(actor_, grads);
  return objective;
}

double Agent::policy_objective(std::span<const TransitionRec> batch) const {
  const std::size_t n = config_.n;
  const Matrix raw = actor_.predict(stacked_rows(batch, false));
  std::vector<std::vector<double>> actions;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    actions.push_back(relaxed_action(std::span<const double>(raw.values().data() + b * n, n),
                                     batch[b].state_mask));
  }
  const Matrix q = critic_.predict(critic_inputs(batch, false, actions));
  double mean_q = 0.0;
  for (double v : q.values()) mean_q += v;
  return mean_q / static_cast<double>(batch.size());
}

void Agent::soft_update() {
  blend_parameters(target_actor_, actor_, config_.lambda_soft);
  blend_parameters(target_critic_, critic_, config_.lambda_soft);
}

bool Agent::train_from_replay() {
  const std::vector<TransitionRec> batch = buffer_.sample(replay_rng_);
  if (batch.empty()) return false;
  critic_update(batch);
  actor_update(batch);
  soft_update();
  return true;
}

nlohmann::json Agent::checkpoint(bool include_buffer) const {
  nlohmann::json cfg;
  to_json(cfg, config_);
  nlohmann::json actor_opt;
  nlohmann::json critic_opt;
  to_json(actor_opt, actor_opt_);
  to_json(critic_opt, critic_opt_);
  nlohmann::json j = {{"config", cfg},
                      {"feature_dim", feature_dim_},
                      {"noise_std", noise_std_},
                      {"actor", to_json(actor_)},
                      {"critic", to_json(critic_)},
                      {"target_actor", to_json(target_actor_)},
                      {"target_critic", to_json(target_critic_)},
                      {"actor_optimizer", actor_opt},
                      {"critic_optimizer", critic_opt}};
  if (include_buffer) {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < buffer_.size(); ++i) {
      const TransitionRec& rec = buffer_.oldest(i);
      entries.push_back(
          {{"state", std::vector<double>(rec.state.values().begin(), rec.state.values().end())},
           {"state_mask", rec.state_mask},
           {"action", rec.action},
           {"next_state",
            std::vector<double>(rec.next_state.values().begin(), rec.next_state.values().end())},
           {"next_mask", rec.next_mask},
           {"reward", rec.reward}});
    }
    j["buffer"] = entries;
  }
  return j;
}

Agent Agent::from_checkpoint(const nlohmann::json& j) {
  AgentConfig cfg = j.at("config").get<AgentConfig>();
  Agent agent(j.at("feature_dim").get<std::size_t>(), cfg, 0, 0);
  agent.noise_std_ = j.at("noise_std").get<double>();
  agent.actor_ = dense_net_from_json(j.at("actor"));
  agent.critic_ = dense_net_from_json(j.at("critic"));
  agent.target_actor_ = dense_net_from_json(j.at("target_actor"));
  agent.target_critic_ = dense_net_from_json(j.at("target_critic"));
  agent.actor_opt_ = j.at("actor_optimizer").get<Optimizer>();
  agent.critic_opt_ = j.at("critic_optimizer").get<Optimizer>();
  if (j.contains("buffer")) {
    const std::size_t n = cfg.n;
    const std::size_t d = agent.feature_dim_;
    for (const auto& e : j.at("buffer")) {
      agent.buffer_.push({Matrix(n, d, e.at("state").get<std::vector<double>>()),
                          e.at("state_mask").get<std::vector<std::uint8_t>>(),
                          e.at("action").get<std::vector<std::uint8_t>>(),
                          Matrix(n, d, e.at("next_state").get<std::vector<double>>()),
                          e.at("next_mask").get<std::vector<std::uint8_t>>(),
                          e.at("reward").get<double>()});
    }
  }
  return agent;
}

StepOutcome dral_step(Agent& agent, StepEnv& env) {
  StepOutcome out;
  if (env.labels.remaining() == 0 || env.pool.unlabeled.empty()) {
    out.terminal = true;
    return out;
  }
  const std::size_t n = agent.config().n;
  const State state = build_state(env.pool, env.classifier, env.features, n);
  out.action = agent.act(state, /*training=*/true, env.noise_rng);

  // Cap the selection by the round quota and by the query quota; cached ids
  // are free.
  std::vector<std::uint8_t> effective(n, 0);
  const std::size_t budget_left = std::min(env.labels.remaining(), env.query_quota);
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.action.bits[i]) continue;
    if (out.selected.size() >= env.round_quota) break;
    const SampleId id = state.ids[i];
    if (!env.labels.is_cached(id)) {
      if (out.newly_queried >= budget_left) continue;
      ++out.newly_queried;
    }
    out.selected.push_back(id);
    effective[i] = 1;
  }

  Matrix next_features = state.features;
  std::vector<std::uint8_t> next_mask = state.selectable;
  if (!out.selected.empty()) {
    const std::size_t spent_before = env.labels.spent();
    env.labels.fetch(out.selected, env.pool);
    out.newly_queried = env.labels.spent() - spent_before;

    const LabeledSet labeled = env.labels.labeled_set(env.pool.labeled);
    const LabeledSet extra = env.labels.labeled_set(out.selected);
    const auto& val = env.pool.validation;
    out.acc_before = env.classifier.evaluate_accuracy(env.features, val, env.true_labels);
    const ClassifierSnapshot snap = env.classifier.snapshot();
    env.classifier.fine_tune(env.features, labeled, extra,
                             env.classifier.config().epochs_finetune);
    out.acc_after = env.classifier.evaluate_accuracy(env.features, val, env.true_labels);
    out.reward = compute_reward(out.acc_after, out.acc_before);
    if (out.reward > 0.0) {
      env.pool.commit(out.selected);
      out.committed = true;
    } else {
      env.classifier.restore(snap);
      if (!agent.config().reuse_rejected_labels) env.labels.forget(out.selected);
    }

    if (env.pool.unlabeled.empty()) {
      next_features = Matrix(n, agent.feature_dim());
      next_mask.assign(n, 0);
    } else {
      State next = build_state(env.pool, env.classifier, env.features, n);
      next_features = std::move(next.features);
      next_mask = std::move(next.selectable);
    }
  }

  agent.buffer().push({state.features, state.selectable, effective, std::move(next_features),
                       std::move(next_mask), out.reward});
  out.updated = agent.train_from_replay();
  return out;
}

std::vector<SampleId> PolicyStrategy::select(const PoolState& pool, const Classifier& clf,
                                             const Matrix& features, int k, Rng& rng) const {
  if (k <= 0 || pool.unlabeled.empty()) return {};
  const std::size_t width = std::min(pool.unlabeled.size(),
                                     std::max(agent_.config().n, static_cast<std::size_t>(k)));
  const State state = build_state(pool, clf, features, width);
  const Matrix raw = agent_.actor().predict(state.features);
  return select_top_k(state.ids, raw.values(), k, Direction::kHighestFirst, rng);
}

}  // namespace dral
