#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "dral/classifier.hpp"
#include "dral/nn.hpp"
#include "dral/optimizer.hpp"
#include "dral/oracle.hpp"
#include "dral/pool.hpp"
#include "dral/replay_buffer.hpp"
#include "dral/rng.hpp"
#include "dral/strategies.hpp"

namespace dral {

struct AgentConfig {
  std::size_t n = 10;  // state size: rows of the most margin-uncertain samples
  double gamma = 0.99;
  double lambda_soft = 0.01;
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  double exploration_noise_std = 0.2;
  double noise_decay = 0.99;  // applied once per active-learning round
  // Hidden widths; each network adds a single-unit output layer, giving five
  // dense layers with the defaults.
  std::vector<std::size_t> actor_hidden = {64, 64, 32, 16};
  std::vector<std::size_t> critic_hidden = {64, 64, 32, 16};
  std::size_t replay_capacity = 3000;
  std::size_t replay_min_fill = 128;
  std::size_t replay_batch = 64;
  // When false, a rejected step forgets the labels it bought, so choosing the
  // same samples again is charged again.
  bool reuse_rejected_labels = false;

  // Throws ParameterError unless gamma in [0, 1), lambda in [0, 1] and n >= 1.
  // gamma = 0 is the myopic limit; lambda 0 and 1 freeze or copy the targets.
  void validate() const;
};

void to_json(nlohmann::json& j, const AgentConfig& c);
void from_json(const nlohmann::json& j, AgentConfig& c);

/// Features of the n most margin-uncertain unlabeled samples, most uncertain
/// first. When fewer than n are left the first row is repeated and the copies
/// are flagged non-selectable.
struct State {
  std::vector<SampleId> ids;
  Matrix features;
  std::vector<std::uint8_t> selectable;

  std::size_t size() const { return ids.size(); }
};

struct ActionVec {
  std::vector<double> raw;          // in (-1, 1)
  std::vector<std::uint8_t> bits;   // bits[i] == (raw[i] > 0)

  std::size_t popcount() const;
};

// Throws StateError when the unlabeled pool is empty. Ties in margin are
// broken by ascending id.
State build_state(const PoolState& pool, const Classifier& clf, const Matrix& features,
                  std::size_t n);

// Accuracy delta: acc_after - acc_before.
double compute_reward(double acc_after, double acc_before);

/// DDPG actor-critic with target copies and a replay buffer.
///
/// The actor is one per-row network shared across the n state rows (tanh
/// output). The critic reads flatten(S) followed by the n action values and
/// emits a scalar Q. Stored actions are bits; on the actor path the critic
/// receives the relaxation mask * (raw + 1) / 2, which agrees with the bits
/// at saturation and keeps a gradient.
class Agent {
 public:
  Agent(std::size_t feature_dim, AgentConfig config, std::uint64_t init_seed,
        std::uint64_t replay_seed);

  // Training adds Gaussian noise to the tanh output before thresholding.
  // Padded rows get raw 0 and bit 0.
  ActionVec act(const State& state, bool training, Rng& noise_rng) const;

  // gamma * Q'(S', pi'(S')) + r, through the target networks only.
  double td_target(const Matrix& next_state, std::span<const std::uint8_t> next_mask,
                   double reward) const;

  // One Adam step on the critic towards the TD targets; returns the pre-step
  // mean squared error.
  double critic_update(std::span<const TransitionRec> batch);
  // One Adam step on the actor ascending mean Q(S, pi(S)); the critic is not
  // modified. Returns the pre-step mean Q.
  double actor_update(std::span<const TransitionRec> batch);
  // theta' <- lambda theta + (1 - lambda) theta' for actor and critic.
  void soft_update();

  // Samples a minibatch and runs critic, actor and soft updates. Returns
  // false (and does nothing) while the buffer is not sampleable.
  bool train_from_replay();

  // Mean Q(S, pi(S)) over a batch, no side effects.
  double policy_objective(std::span<const TransitionRec> batch) const;
  // Gradient of policy_objective w.r.t. the actor parameters.
  NetGradients policy_gradient(std::span<const TransitionRec> batch, double* objective = nullptr);

  double q_value(const Matrix& state, std::span<const double> action_values) const;
  std::vector<double> relaxed_action(std::span<const double> raw,
                                     std::span<const std::uint8_t> mask) const;

  void decay_noise() { noise_std_ *= config_.noise_decay; }
  double noise_std() const { return noise_std_; }

  const AgentConfig& config() const { return config_; }
  std::size_t feature_dim() const { return feature_dim_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  DenseNet& actor() { return actor_; }
  DenseNet& critic() { return critic_; }
  DenseNet& target_actor() { return target_actor_; }
  DenseNet& target_critic() { return target_critic_; }
  const DenseNet& actor() const { return actor_; }
  const DenseNet& critic() const { return critic_; }
  const DenseNet& target_actor() const { return target_actor_; }
  const DenseNet& target_critic() const { return target_critic_; }

  nlohmann::json checkpoint(bool include_buffer = false) const;
  static Agent from_checkpoint(const nlohmann::json& j);

 private:
  Matrix critic_inputs(std::span<const TransitionRec> batch, bool next_state,
                       const std::vector<std::vector<double>>& actions) const;
  Matrix stacked_rows(std::span<const TransitionRec> batch, bool next_state) const;

  AgentConfig config_;
  std::size_t feature_dim_;
  DenseNet actor_;
  DenseNet critic_;
  DenseNet target_actor_;
  DenseNet target_critic_;
  Optimizer actor_opt_;
  Optimizer critic_opt_;
  ReplayBuffer buffer_;
  Rng replay_rng_;
  double noise_std_;
};

struct StepEnv {
  const Matrix& features;
  std::span<const int> true_labels;  // indexed by sample id; used on validation ids only
  PoolState& pool;
  Classifier& classifier;
  LabelBook& labels;
  std::size_t round_quota;  // labels this round may still commit
  std::size_t query_quota;  // new oracle queries this step may make
  Rng& noise_rng;
};

struct StepOutcome {
  ActionVec action;
  std::vector<SampleId> selected;  // after capping; these were labeled
  std::size_t newly_queried = 0;   // budget consumed by this step
  double acc_before = 0.0;
  double acc_after = 0.0;
  double reward = 0.0;
  bool committed = false;
  bool terminal = false;
  bool updated = false;  // a replay minibatch update ran
};

// One selection step: build S, act, label the capped selection, fine-tune
// and score, commit only on positive reward (else roll back), build S',
// store the transition and train from replay when possible. Terminal (and a
// no-op) when the budget is exhausted or the pool is empty.
StepOutcome dral_step(Agent& agent, StepEnv& env);

/// Greedy use of a trained actor as a pool-only strategy: ranks the
/// max(n, k) most margin-uncertain samples by raw actor output.
class PolicyStrategy : public QueryStrategy {
 public:
  explicit PolicyStrategy(const Agent& agent) : agent_(agent) {}
  StrategyKind kind() const override { return StrategyKind::kDral; }
  std::vector<SampleId> select(const PoolState& pool, const Classifier& clf,
                               const Matrix& features, int k, Rng& rng) const override;

 private:
  const Agent& agent_;
};

}  // namespace dral
