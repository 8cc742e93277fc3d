#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dral/nn.hpp"

namespace dral {

enum class OptimizerKind { kSgdMomentum, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgdMomentum;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;  // SGD only, weights only (biases are not decayed)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerConfig sgd(double lr, double momentum, double weight_decay) {
    return {OptimizerKind::kSgdMomentum, lr, momentum, weight_decay};
  }
  static OptimizerConfig adam(double lr) {
    OptimizerConfig c;
    c.kind = OptimizerKind::kAdam;
    c.learning_rate = lr;
    return c;
  }

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// First-order optimizer whose accumulators mirror a DenseNet's parameters.
///
/// SGD-momentum: v <- m v - lr (g + wd w); w <- w + v.
/// Adam: bias-corrected first/second moments.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig config, const DenseNet& shape);

  // Rejects the whole update (nothing is modified) if any gradient is
  // non-finite; the error names the offending parameter.
  void step(DenseNet& net, const NetGradients& grads);

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t step_count() const { return steps_; }

  friend bool operator==(const Optimizer&, const Optimizer&) = default;

  friend void to_json(nlohmann::json& j, const Optimizer& opt);
  friend void from_json(const nlohmann::json& j, Optimizer& opt);

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  // One flat buffer per layer: weights then bias.
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;  // Adam only
};

void to_json(nlohmann::json& j, const Optimizer& opt);
void from_json(const nlohmann::json& j, Optimizer& opt);

}  // namespace dral
