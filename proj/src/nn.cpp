#include "dral/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dral/errors.hpp"

namespace dral {
namespace {

void apply_activation(Matrix& z, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return;
    case Activation::kRelu:
      for (double& v : z.values()) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::kTanh:
      for (double& v : z.values()) v = std::tanh(v);
      return;
    case Activation::kSoftmax:
      for (std::size_t r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double& v : row) {
          v = std::exp(v - peak);
          total += v;
        }
        for (double& v : row) v /= total;
      }
      return;
  }
}

// Turns d loss / d y into d loss / d z in place, using the cached y.
void activation_backward(Matrix& grad, const Matrix& y, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return;
    case Activation::kRelu: {
      auto g = grad.values();
      auto out = y.values();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (out[i] <= 0.0) g[i] = 0.0;
      }
      return;
    }
    case Activation::kTanh: {
      auto g = grad.values();
      auto out = y.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - out[i] * out[i];
      return;
    }
    case Activation::kSoftmax:
      for (std::size_t r = 0; r < grad.rows(); ++r) {
        auto g = grad.row(r);
        auto p = y.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < g.size(); ++c) dot += g[c] * p[c];
        for (std::size_t c = 0; c < g.size(); ++c) g[c] = p[c] * (g[c] - dot);
      }
      return;
  }
}

Matrix affine(const Matrix& x, const DenseLayer& layer) {
  const std::size_t out = layer.out_dim();
  const std::size_t in = layer.in_dim();
  Matrix z(x.rows(), out);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    auto zi = z.row(i);
    for (std::size_t o = 0; o < out; ++o) {
      auto w = layer.weights.row(o);
      double acc = layer.bias[o];
      for (std::size_t k = 0; k < in; ++k) acc += xi[k] * w[k];
      zi[o] = acc;
    }
  }
  return z;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSoftmax: return "softmax";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "softmax") return Activation::kSoftmax;
  throw ParameterError("unknown activation '" + name + "'");
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    if (l.bias.size() != l.out_dim()) {
      throw ShapeError("layer " + std::to_string(k) + ": bias length " +
                       std::to_string(l.bias.size()) + " != out dim " +
                       std::to_string(l.out_dim()));
    }
    if (k > 0 && layers_[k - 1].out_dim() != l.in_dim()) {
      throw ShapeError("layer " + std::to_string(k) + " expects " + std::to_string(l.in_dim()) +
                       " inputs but layer " + std::to_string(k - 1) + " produces " +
                       std::to_string(layers_[k - 1].out_dim()));
    }
    if (l.activation == Activation::kSoftmax && k + 1 != layers_.size()) {
      throw ShapeError("layer " + std::to_string(k) + ": softmax only allowed on the final layer");
    }
  }
}

DenseNet DenseNet::make(std::size_t input_dim, std::span<const LayerSpec> specs,
                        std::mt19937_64& rng) {
  std::vector<DenseLayer> layers;
  std::size_t fan_in = input_dim;
  for (const auto& spec : specs) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + spec.out_dim));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Matrix(spec.out_dim, fan_in), std::vector<double>(spec.out_dim, 0.0),
                     spec.activation};
    for (double& w : layer.weights.values()) w = dist(rng);
    layers.push_back(std::move(layer));
    fan_in = spec.out_dim;
  }
  return DenseNet(std::move(layers));
}

Matrix DenseNet::run(const Matrix& x, std::size_t last_layer, std::vector<Matrix>* cache) const {
  if (layers_.empty()) throw StateError("network has no layers");
  if (x.cols() != input_dim()) {
    throw ShapeError("layer 0 expects " + std::to_string(input_dim()) + " inputs, got " +
                     std::to_string(x.cols()));
  }
  if (cache) {
    cache->clear();
    cache->push_back(x);
  }
  Matrix h = x;
  for (std::size_t k = 0; k <= last_layer; ++k) {
    h = affine(h, layers_[k]);
    apply_activation(h, layers_[k].activation);
    if (cache) cache->push_back(h);
  }
  return h;
}

Matrix DenseNet::forward(const Matrix& x) {
  std::vector<Matrix> cache;
  Matrix out = run(x, layers_.size() - 1, &cache);
  cache_ = std::move(cache);
  return out;
}

Matrix DenseNet::predict(const Matrix& x) const { return run(x, layers_.size() - 1, nullptr); }

Matrix DenseNet::activations(const Matrix& x, std::size_t layer_index) const {
  if (layer_index >= layers_.size()) {
    throw ParameterError("layer index " + std::to_string(layer_index) + " out of range");
  }
  return run(x, layer_index, nullptr);
}

NetGradients DenseNet::backward(const Matrix& upstream) const {
  return backprop(upstream, /*skip_last_activation=*/false);
}

NetGradients DenseNet::backward_from_logits(const Matrix& logit_grad) const {
  return backprop(logit_grad, /*skip_last_activation=*/true);
}

NetGradients DenseNet::backprop(Matrix delta, bool skip_last_activation) const {
  if (cache_.empty()) throw StateError("backward called before forward");
  const Matrix& out = cache_.back();
  if (delta.rows() != out.rows() || delta.cols() != out.cols()) {
    throw ShapeError("upstream gradient " + std::to_string(delta.rows()) + "x" +
                     std::to_string(delta.cols()) + " does not match output " +
                     std::to_string(out.rows()) + "x" + std::to_string(out.cols()));
  }
  NetGradients grads;
  grads.layers.resize(layers_.size());
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const DenseLayer& layer = layers_[k];
    if (!(skip_last_activation && k + 1 == layers_.size())) {
      activation_backward(delta, cache_[k + 1], layer.activation);
    }
    const Matrix& x = cache_[k];
    LayerGrad& g = grads.layers[k];
    g.weights = Matrix(layer.out_dim(), layer.in_dim());
    g.bias.assign(layer.out_dim(), 0.0);
    Matrix dx(x.rows(), layer.in_dim());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto xi = x.row(i);
      auto di = delta.row(i);
      auto dxi = dx.row(i);
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        const double d = di[o];
        if (d == 0.0) continue;
        g.bias[o] += d;
        auto gw = g.weights.row(o);
        auto w = layer.weights.row(o);
        for (std::size_t c = 0; c < gw.size(); ++c) {
          gw[c] += d * xi[c];
          dxi[c] += d * w[c];
        }
      }
    }
    delta = std::move(dx);
  }
  grads.input = std::move(delta);
  return grads;
}

std::size_t DenseNet::input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t DenseNet::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().out_dim();
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<double> DenseNet::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers_) {
    flat.insert(flat.end(), l.weights.values().begin(), l.weights.values().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void DenseNet::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError("expected " + std::to_string(parameter_count()) + " parameters, got " +
                     std::to_string(flat.size()));
  }
  auto it = flat.begin();
  for (auto& l : layers_) {
    auto w = l.weights.values();
    std::copy_n(it, w.size(), w.begin());
    it += static_cast<std::ptrdiff_t>(w.size());
    std::copy_n(it, l.bias.size(), l.bias.begin());
    it += static_cast<std::ptrdiff_t>(l.bias.size());
  }
}

void blend_parameters(DenseNet& target, const DenseNet& source, double lambda) {
  if (target.num_layers() != source.num_layers()) {
    throw ShapeError("blend: layer count mismatch");
  }
  for (std::size_t k = 0; k < target.num_layers(); ++k) {
    DenseLayer& t = target.layer(k);
    const DenseLayer& s = source.layer(k);
    if (t.weights.rows() != s.weights.rows() || t.weights.cols() != s.weights.cols()) {
      throw ShapeError("blend: layer " + std::to_string(k) + " shape mismatch");
    }
    auto tw = t.weights.values();
    auto sw = s.weights.values();
    for (std::size_t i = 0; i < tw.size(); ++i) tw[i] = lambda * sw[i] + (1.0 - lambda) * tw[i];
    for (std::size_t i = 0; i < t.bias.size(); ++i) {
      t.bias[i] = lambda * s.bias[i] + (1.0 - lambda) * t.bias[i];
    }
  }
}

LossResult cross_entropy(const Matrix& probs, std::span<const int> labels) {
  if (labels.size() != probs.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(probs.rows()) + " rows");
  }
  if (probs.rows() == 0) throw ParameterError("cross_entropy: empty batch");
  const double batch = static_cast<double>(probs.rows());
  LossResult result{0.0, probs};
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= probs.cols()) {
      throw ParameterError("cross_entropy: label " + std::to_string(y) + " out of range");
    }
    result.loss -= std::log(std::max(probs(i, y), 1e-12));
    result.grad(i, y) -= 1.0;
  }
  result.loss /= batch;
  for (double& g : result.grad.values()) g /= batch;
  return result;
}

LossResult mean_squared_error(const Matrix& pred, std::span<const double> target) {
  if (pred.cols() != 1 || pred.rows() != target.size()) {
    throw ShapeError("mean_squared_error: prediction must be a column matching target length");
  }
  if (pred.rows() == 0) throw ParameterError("mean_squared_error: empty batch");
  const double batch = static_cast<double>(pred.rows());
  LossResult result{0.0, Matrix(pred.rows(), 1)};
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    const double diff = pred(i, 0) - target[i];
    result.loss += diff * diff;
    result.grad(i, 0) = 2.0 * diff / batch;
  }
  result.loss /= batch;
  return result;
}

nlohmann::json to_json(const DenseNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", to_string(l.activation)},
                      {"weights", std::vector<double>(l.weights.values().begin(),
                                                      l.weights.values().end())},
                      {"bias", l.bias}});
  }
  return {{"layers", layers}};
}

DenseNet dense_net_from_json(const nlohmann::json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& jl : j.at("layers")) {
    const auto in = jl.at("in").get<std::size_t>();
    const auto out = jl.at("out").get<std::size_t>();
    layers.push_back({Matrix(out, in, jl.at("weights").get<std::vector<double>>()),
                      jl.at("bias").get<std::vector<double>>(),
                      parse_activation(jl.at("activation").get<std::string>())});
  }
  return DenseNet(std::move(layers));
}

}  // namespace dral
