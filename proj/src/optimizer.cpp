#include "dral/optimizer.hpp"

#include <cmath>
#include <string>

#include "dral/errors.hpp"

namespace dral {
namespace {

void check_finite(const NetGradients& grads) {
  for (std::size_t k = 0; k < grads.layers.size(); ++k) {
    if (!grads.layers[k].weights.all_finite()) {
      throw NonFiniteError("non-finite gradient in layer " + std::to_string(k) + " weights");
    }
    for (double b : grads.layers[k].bias) {
      if (!std::isfinite(b)) {
        throw NonFiniteError("non-finite gradient in layer " + std::to_string(k) + " bias");
      }
    }
  }
}

}  // namespace

Optimizer::Optimizer(OptimizerConfig config, const DenseNet& shape) : config_(config) {
  for (const auto& l : shape.layers()) {
    const std::size_t n = l.weights.size() + l.bias.size();
    first_.emplace_back(n, 0.0);
    if (config_.kind == OptimizerKind::kAdam) second_.emplace_back(n, 0.0);
  }
}

void Optimizer::step(DenseNet& net, const NetGradients& grads) {
  if (grads.layers.size() != net.num_layers() || first_.size() != net.num_layers()) {
    throw ShapeError("optimizer: gradient/parameter layer count mismatch");
  }
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const auto& l = net.layer(k);
    const auto& g = grads.layers[k];
    if (g.weights.rows() != l.weights.rows() || g.weights.cols() != l.weights.cols() ||
        g.bias.size() != l.bias.size() || first_[k].size() != l.weights.size() + l.bias.size()) {
      throw ShapeError("optimizer: layer " + std::to_string(k) + " shape mismatch");
    }
  }
  check_finite(grads);
  ++steps_;

  const double lr = config_.learning_rate;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    DenseLayer& layer = net.layer(k);
    auto w = layer.weights.values();
    auto gw = grads.layers[k].weights.values();
    std::vector<double>& m = first_[k];
    const std::size_t nw = w.size();
    const std::size_t total = nw + layer.bias.size();
    for (std::size_t i = 0; i < total; ++i) {
      const bool is_weight = i < nw;
      double& param = is_weight ? w[i] : layer.bias[i - nw];
      const double grad = is_weight ? gw[i] : grads.layers[k].bias[i - nw];
      if (config_.kind == OptimizerKind::kSgdMomentum) {
        const double decay = is_weight ? config_.weight_decay * param : 0.0;
        m[i] = config_.momentum * m[i] - lr * (grad + decay);
        param += m[i];
      } else {
        double& v = second_[k][i];
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad;
        v = config_.beta2 * v + (1.0 - config_.beta2) * grad * grad;
        param -= lr * (m[i] / bc1) / (std::sqrt(v / bc2) + config_.epsilon);
      }
    }
  }
}

void to_json(nlohmann::json& j, const Optimizer& opt) {
  j = {{"kind", opt.config_.kind == OptimizerKind::kAdam ? "adam" : "sgd-momentum"},
       {"learning_rate", opt.config_.learning_rate},
       {"momentum", opt.config_.momentum},
       {"weight_decay", opt.config_.weight_decay},
       {"beta1", opt.config_.beta1},
       {"beta2", opt.config_.beta2},
       {"epsilon", opt.config_.epsilon},
       {"steps", opt.steps_},
       {"first", opt.first_},
       {"second", opt.second_}};
}

void from_json(const nlohmann::json& j, Optimizer& opt) {
  opt.config_.kind = j.at("kind").get<std::string>() == "adam" ? OptimizerKind::kAdam
                                                               : OptimizerKind::kSgdMomentum;
  opt.config_.learning_rate = j.at("learning_rate").get<double>();
  opt.config_.momentum = j.at("momentum").get<double>();
  opt.config_.weight_decay = j.at("weight_decay").get<double>();
  opt.config_.beta1 = j.at("beta1").get<double>();
  opt.config_.beta2 = j.at("beta2").get<double>();
  opt.config_.epsilon = j.at("epsilon").get<double>();
  opt.steps_ = j.at("steps").get<std::uint64_t>();
  opt.first_ = j.at("first").get<std::vector<std::vector<double>>>();
  opt.second_ = j.at("second").get<std::vector<std::vector<double>>>();
}

}  // namespace dral
