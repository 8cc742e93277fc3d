#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "dral/matrix.hpp"
#include "dral/nn.hpp"
#include "dral/optimizer.hpp"
#include "dral/oracle.hpp"
#include "dral/rng.hpp"

namespace dral {

struct LearnerConfig {
  std::vector<std::size_t> hidden = {32, 32};
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 32;
  int epochs_full = 30;
  int epochs_finetune = 5;
};

void to_json(nlohmann::json& j, const LearnerConfig& c);
void from_json(const nlohmann::json& j, LearnerConfig& c);

struct ClassifierSnapshot {
  DenseNet net;
  Optimizer optimizer;
  Rng rng;
};

/// Softmax classifier trained with mini-batch SGD-momentum.
///
/// Default architecture: d -> hidden[0] (relu) -> ... -> hidden[last] (tanh)
/// -> num_classes (softmax). The last hidden layer is the feature layer.
class Classifier {
 public:
  Classifier(std::size_t input_dim, int num_classes, LearnerConfig config, std::uint64_t seed);
  // Wraps an existing softmax-headed net; `feature_layer` indexes its layers.
  Classifier(DenseNet net, std::size_t feature_layer, LearnerConfig config, std::uint64_t seed);

  // Runs `epochs` passes over `set`, shuffled each epoch.
  void train_epochs(const Matrix& features, const LabeledSet& set, int epochs);
  // epochs_full passes over the labeled set; throws StateError when it is empty.
  void train_full(const Matrix& features, const LabeledSet& labeled);
  // Continues training on labeled U extra (deduplicated by id). Empty extra is a no-op.
  void fine_tune(const Matrix& features, const LabeledSet& labeled, const LabeledSet& extra,
                 int epochs);

  Matrix predict_proba(const Matrix& features, std::span<const SampleId> ids) const;
  Matrix extract_features(const Matrix& features, std::span<const SampleId> ids) const;
  // Throws ParameterError for an empty split.
  double evaluate_accuracy(const Matrix& features, std::span<const SampleId> ids,
                           std::span<const int> true_labels) const;

  ClassifierSnapshot snapshot() const;
  void restore(const ClassifierSnapshot& snap);

  std::size_t feature_dim() const { return net_.layer(feature_layer_).out_dim(); }
  std::size_t feature_layer() const { return feature_layer_; }
  int num_classes() const { return static_cast<int>(net_.output_dim()); }
  const DenseNet& net() const { return net_; }
  const LearnerConfig& config() const { return config_; }

  nlohmann::json to_json() const;

 private:
  DenseNet net_;
  Optimizer optimizer_;
  LearnerConfig config_;
  std::size_t feature_layer_;
  Rng rng_;
};

}  // namespace dral
