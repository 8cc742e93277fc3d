#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dral/matrix.hpp"

namespace dral {

enum class Activation { kIdentity, kRelu, kTanh, kSoftmax };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

/// y = act(x W^T + b), with W stored out x in.
struct DenseLayer {
  Matrix weights;
  std::vector<double> bias;
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct LayerSpec {
  std::size_t out_dim;
  Activation activation;
};

struct LayerGrad {
  Matrix weights;
  std::vector<double> bias;
};

struct NetGradients {
  std::vector<LayerGrad> layers;
  Matrix input;  // d loss / d x
};

/// Feedforward stack of dense layers with hand-derived backpropagation.
///
/// forward() caches every layer's output so that a subsequent backward() can
/// run; predict() is the cache-free const path used for inference.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers);

  // Symmetric uniform init with limit sqrt(6 / (fan_in + fan_out)), zero bias.
  static DenseNet make(std::size_t input_dim, std::span<const LayerSpec> specs,
                       std::mt19937_64& rng);

  Matrix forward(const Matrix& x);
  Matrix predict(const Matrix& x) const;
  // Output of layer `layer_index` (0-based) without caching.
  Matrix activations(const Matrix& x, std::size_t layer_index) const;

  // Gradient of the loss w.r.t. every parameter and the input, given
  // d loss / d output (post-activation) of the last cached forward().
  NetGradients backward(const Matrix& upstream) const;
  // Same, but `logit_grad` is already d loss / d pre-activation of the last
  // layer (the softmax + cross-entropy shortcut).
  NetGradients backward_from_logits(const Matrix& logit_grad) const;

  bool has_cache() const { return !cache_.empty(); }
  void clear_cache() { cache_.clear(); }

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  DenseLayer& layer(std::size_t i) { return layers_.at(i); }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }

  // Parameters flattened layer by layer: weights (row-major) then bias.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);

  // Parameter equality; the forward cache is ignored.
  bool same_parameters(const DenseNet& other) const { return layers_ == other.layers_; }

 private:
  Matrix run(const Matrix& x, std::size_t last_layer, std::vector<Matrix>* cache) const;
  NetGradients backprop(Matrix delta, bool skip_last_activation) const;

  std::vector<DenseLayer> layers_;
  std::vector<Matrix> cache_;  // cache_[0] = input, cache_[k + 1] = output of layer k
};

/// Elementwise target <- lambda * source + (1 - lambda) * target.
void blend_parameters(DenseNet& target, const DenseNet& source, double lambda);

struct LossResult {
  double loss = 0.0;
  Matrix grad;
};

// Mean cross-entropy of softmax outputs. grad is w.r.t. the logits:
// (p - onehot(y)) / batch. Probabilities are clamped at 1e-12.
LossResult cross_entropy(const Matrix& probs, std::span<const int> labels);

// Mean over rows of (pred - target)^2 for a single-column prediction;
// grad is w.r.t. pred.
LossResult mean_squared_error(const Matrix& pred, std::span<const double> target);

nlohmann::json to_json(const DenseNet& net);
DenseNet dense_net_from_json(const nlohmann::json& j);

}  // namespace dral
