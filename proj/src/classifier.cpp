#include "dral/classifier.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_set>

#include "dral/errors.hpp"

namespace dral {
namespace {

OptimizerConfig sgd_config(const LearnerConfig& c) {
  return OptimizerConfig::sgd(c.learning_rate, c.momentum, c.weight_decay);
}

DenseNet default_net(std::size_t input_dim, int num_classes, const LearnerConfig& c, Rng& rng) {
  if (c.hidden.empty()) throw ParameterError("classifier needs at least one hidden layer");
  if (num_classes < 1) throw ParameterError("classifier needs num_classes >= 1");
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i < c.hidden.size(); ++i) {
    const bool feature_layer = i + 1 == c.hidden.size();
    specs.push_back({c.hidden[i], feature_layer ? Activation::kTanh : Activation::kRelu});
  }
  specs.push_back({static_cast<std::size_t>(num_classes), Activation::kSoftmax});
  return DenseNet::make(input_dim, specs, rng);
}

}  // namespace

void to_json(nlohmann::json& j, const LearnerConfig& c) {
  j = {{"hidden", c.hidden},
       {"learning_rate", c.learning_rate},
       {"momentum", c.momentum},
       {"weight_decay", c.weight_decay},
       {"batch_size", c.batch_size},
       {"epochs_full", c.epochs_full},
       {"epochs_finetune", c.epochs_finetune}};
}

void from_json(const nlohmann::json& j, LearnerConfig& c) {
  c.hidden = j.value("hidden", c.hidden);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs_full = j.value("epochs_full", c.epochs_full);
  c.epochs_finetune = j.value("epochs_finetune", c.epochs_finetune);
}

Classifier::Classifier(std::size_t input_dim, int num_classes, LearnerConfig config,
                       std::uint64_t seed)
    : config_(std::move(config)), feature_layer_(config_.hidden.size() - 1), rng_(make_rng(seed)) {
  net_ = default_net(input_dim, num_classes, config_, rng_);
  optimizer_ = Optimizer(sgd_config(config_), net_);
}

Classifier::Classifier(DenseNet net, std::size_t feature_layer, LearnerConfig config,
                       std::uint64_t seed)
    : net_(std::move(net)), config_(std::move(config)), feature_layer_(feature_layer),
      rng_(make_rng(seed)) {
  if (net_.num_layers() == 0 || net_.layers().back().activation != Activation::kSoftmax) {
    throw ParameterError("classifier net must end in a softmax layer");
  }
  if (feature_layer_ >= net_.num_layers()) {
    throw ParameterError("feature layer index " + std::to_string(feature_layer_) +
                         " out of range");
  }
  optimizer_ = Optimizer(sgd_config(config_), net_);
}

void Classifier::train_epochs(const Matrix& features, const LabeledSet& set, int epochs) {
  if (epochs <= 0 || set.empty()) return;
  if (config_.batch_size == 0) throw ParameterError("batch_size must be >= 1");
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
      const std::size_t end = std::min(order.size(), start + config_.batch_size);
      std::vector<SampleId> batch_ids;
      std::vector<int> batch_labels;
      for (std::size_t i = start; i < end; ++i) {
        batch_ids.push_back(set.ids[order[i]]);
        batch_labels.push_back(set.labels[order[i]]);
      }
      const Matrix probs = net_.forward(features.gather_rows(batch_ids));
      const LossResult loss = cross_entropy(probs, batch_labels);
      optimizer_.step(net_, net_.backward_from_logits(loss.grad));
    }
  }
  net_.clear_cache();
}

void Classifier::train_full(const Matrix& features, const LabeledSet& labeled) {
  if (labeled.empty()) throw StateError("train_full: labeled set is empty");
  train_epochs(features, labeled, config_.epochs_full);
}

void Classifier::fine_tune(const Matrix& features, const LabeledSet& labeled,
                           const LabeledSet& extra, int epochs) {
  if (extra.empty()) return;
  LabeledSet merged = labeled;
  std::unordered_set<SampleId> seen(labeled.ids.begin(), labeled.ids.end());
  for (std::size_t i = 0; i < extra.size(); ++i) {
    if (seen.insert(extra.ids[i]).second) {
      merged.ids.push_back(extra.ids[i]);
      merged.labels.push_back(extra.labels[i]);
    }
  }
  train_epochs(features, merged, epochs);
}

Matrix Classifier::predict_proba(const Matrix& features, std::span<const SampleId> ids) const {
  return net_.predict(features.gather_rows(ids));
}

Matrix Classifier::extract_features(const Matrix& features, std::span<const SampleId> ids) const {
  return net_.activations(features.gather_rows(ids), feature_layer_);
}

double Classifier::evaluate_accuracy(const Matrix& features, std::span<const SampleId> ids,
                                     std::span<const int> true_labels) const {
  if (ids.empty()) throw ParameterError("evaluate_accuracy: empty split");
  const Matrix probs = predict_proba(features, ids);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto row = probs.row(i);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == true_labels[ids[i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

ClassifierSnapshot Classifier::snapshot() const {
  DenseNet copy = net_;
  copy.clear_cache();
  return {std::move(copy), optimizer_, rng_};
}

void Classifier::restore(const ClassifierSnapshot& snap) {
  if (snap.net.num_layers() != net_.num_layers()) {
    throw StateError("restore: snapshot layer count mismatch");
  }
  for (std::size_t k = 0; k < net_.num_layers(); ++k) {
    if (snap.net.layer(k).weights.rows() != net_.layer(k).weights.rows() ||
        snap.net.layer(k).weights.cols() != net_.layer(k).weights.cols()) {
      throw StateError("restore: snapshot shape mismatch at layer " + std::to_string(k));
    }
  }
  net_ = snap.net;
  optimizer_ = snap.optimizer;
  rng_ = snap.rng;
}

nlohmann::json Classifier::to_json() const {
  nlohmann::json opt;
  dral::to_json(opt, optimizer_);
  nlohmann::json cfg;
  dral::to_json(cfg, config_);
  return {{"config", cfg},
          {"feature_layer", feature_layer_},
          {"net", dral::to_json(net_)},
          {"optimizer", opt}};
}

}  // namespace dral
