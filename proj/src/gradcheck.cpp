#include "dral/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dral/agent.hpp"
#include "dral/rng.hpp"

namespace dral {
namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = normal(rng);
  return m;
}

void randomize_bias(DenseNet& net, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 0.1);
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    for (double& b : net.layer(k).bias) b = normal(rng);
  }
}

double weighted_sum(const Matrix& out, const Matrix& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * weights.values()[i];
  return s;
}

// Loss = sum(G * net(x)) for a fixed random G, so d loss / d out = G.
GradCheckCase projection_case(const std::string& name, std::vector<LayerSpec> specs,
                              std::size_t input_dim, Rng& rng) {
  DenseNet net = DenseNet::make(input_dim, specs, rng);
  randomize_bias(net, rng);
  const Matrix x = random_matrix(5, input_dim, rng);
  const Matrix g = random_matrix(5, net.output_dim(), rng);
  net.forward(x);
  const NetGradients analytic = net.backward(g);
  GradCheckCase c{name, 0.0, kLayerTolerance, 0};
  c.max_rel_error = check_net_gradient(
      net, [&] { return weighted_sum(net.predict(x), g); }, analytic, kGradCheckEps,
      &c.parameters_checked);
  // Input gradient as well.
  Matrix xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = xp.values()[i];
    xp.values()[i] = orig + kGradCheckEps;
    const double up = weighted_sum(net.predict(xp), g);
    xp.values()[i] = orig - kGradCheckEps;
    const double down = weighted_sum(net.predict(xp), g);
    xp.values()[i] = orig;
    c.max_rel_error = std::max(
        c.max_rel_error, relative_error(analytic.input.values()[i], (up - down) / (2 * kGradCheckEps)));
    ++c.parameters_checked;
  }
  return c;
}

GradCheckCase cross_entropy_case(Rng& rng) {
  const std::vector<LayerSpec> specs = {{8, Activation::kRelu}, {6, Activation::kTanh},
                                        {4, Activation::kSoftmax}};
  DenseNet net = DenseNet::make(5, specs, rng);
  randomize_bias(net, rng);
  const Matrix x = random_matrix(6, 5, rng);
  const std::vector<int> labels = {0, 1, 2, 3, 1, 2};
  const LossResult loss = cross_entropy(net.forward(x), labels);
  const NetGradients analytic = net.backward_from_logits(loss.grad);
  GradCheckCase c{"softmax+cross-entropy", 0.0, kLayerTolerance, 0};
  c.max_rel_error = check_net_gradient(
      net, [&] { return cross_entropy(net.predict(x), labels).loss; }, analytic, kGradCheckEps,
      &c.parameters_checked);
  return c;
}

GradCheckCase mse_case(Rng& rng) {
  const std::vector<LayerSpec> specs = {{7, Activation::kTanh}, {1, Activation::kIdentity}};
  DenseNet net = DenseNet::make(4, specs, rng);
  randomize_bias(net, rng);
  const Matrix x = random_matrix(5, 4, rng);
  const std::vector<double> target = {0.3, -0.2, 0.9, 0.0, -1.1};
  const LossResult loss = mean_squared_error(net.forward(x), target);
  const NetGradients analytic = net.backward(loss.grad);
  GradCheckCase c{"identity+mse", 0.0, kLayerTolerance, 0};
  c.max_rel_error = check_net_gradient(
      net, [&] { return mean_squared_error(net.predict(x), target).loss; }, analytic,
      kGradCheckEps, &c.parameters_checked);
  return c;
}

GradCheckCase composed_case(const std::string& name, std::size_t n, std::size_t feature_dim,
                            std::vector<std::size_t> hidden, std::uint64_t seed, Rng& rng) {
  AgentConfig cfg;
  cfg.n = n;
  cfg.actor_hidden = hidden;
  cfg.critic_hidden = hidden;
  Agent agent(feature_dim, cfg, seed, seed + 1);
  randomize_bias(agent.actor(), rng);
  randomize_bias(agent.critic(), rng);
  std::vector<TransitionRec> batch;
  for (int b = 0; b < 4; ++b) {
    TransitionRec rec;
    rec.state = random_matrix(n, feature_dim, rng);
    rec.state_mask.assign(n, 1);
    if (n > 1 && b == 3) rec.state_mask[n - 1] = 0;
    rec.action.assign(n, 0);
    rec.next_state = rec.state;
    rec.next_mask = rec.state_mask;
    batch.push_back(std::move(rec));
  }
  const NetGradients analytic = agent.policy_gradient(batch);
  GradCheckCase c{name, 0.0, kComposedTolerance, 0};
  c.max_rel_error = check_net_gradient(
      agent.actor(), [&] { return agent.policy_objective(batch); }, analytic, kGradCheckEps,
      &c.parameters_checked);
  return c;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

double check_net_gradient(DenseNet& net, const std::function<double()>& loss,
                          const NetGradients& analytic, double eps, std::size_t* checked) {
  double worst = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    auto probe = [&](double& param, double grad) {
      const double orig = param;
      param = orig + eps;
      const double up = loss();
      param = orig - eps;
      const double down = loss();
      param = orig;
      worst = std::max(worst, relative_error(grad, (up - down) / (2.0 * eps)));
      ++count;
    };
    auto w = net.layer(k).weights.values();
    for (std::size_t i = 0; i < w.size(); ++i) probe(w[i], analytic.layers[k].weights.values()[i]);
    auto& bias = net.layer(k).bias;
    for (std::size_t i = 0; i < bias.size(); ++i) probe(bias[i], analytic.layers[k].bias[i]);
  }
  if (checked) *checked += count;
  return worst;
}

bool GradCheckReport::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed(); });
}

double GradCheckReport::max_layer_error() const {
  double m = 0.0;
  for (const auto& c : cases) {
    if (c.tolerance == kLayerTolerance) m = std::max(m, c.max_rel_error);
  }
  return m;
}

double GradCheckReport::max_composed_error() const {
  double m = 0.0;
  for (const auto& c : cases) {
    if (c.tolerance == kComposedTolerance) m = std::max(m, c.max_rel_error);
  }
  return m;
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cases) {
    arr.push_back({{"name", c.name},
                   {"max_rel_error", c.max_rel_error},
                   {"tolerance", c.tolerance},
                   {"parameters_checked", c.parameters_checked},
                   {"passed", c.passed()}});
  }
  return {{"epsilon", kGradCheckEps},
          {"max_layer_error", max_layer_error()},
          {"max_composed_error", max_composed_error()},
          {"passed", passed()},
          {"cases", arr}};
}

GradCheckReport run_grad_check(std::uint64_t seed) {
  Rng rng = make_rng(seed);
  GradCheckReport report;
  const Activation all[] = {Activation::kIdentity, Activation::kRelu, Activation::kTanh};
  for (Activation hidden : all) {
    for (Activation output : {Activation::kIdentity, Activation::kRelu, Activation::kTanh,
                              Activation::kSoftmax}) {
      report.cases.push_back(projection_case(
          to_string(hidden) + "->" + to_string(output),
          {{9, hidden}, {7, hidden}, {4, output}}, 6, rng));
    }
  }
  report.cases.push_back(projection_case("single-linear", {{3, Activation::kIdentity}}, 4, rng));
  report.cases.push_back(projection_case(
      "wide-tanh", {{32, Activation::kTanh}, {32, Activation::kRelu}, {5, Activation::kSoftmax}},
      12, rng));
  report.cases.push_back(cross_entropy_case(rng));
  report.cases.push_back(mse_case(rng));
  report.cases.push_back(composed_case("critic(actor) 2-unit", 2, 2, {2}, seed + 11, rng));
  report.cases.push_back(composed_case("critic(actor) 5-layer", 3, 4, {8, 8, 6, 4}, seed + 13, rng));
  return report;
}

}  // namespace dral
