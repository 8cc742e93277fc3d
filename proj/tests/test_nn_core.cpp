#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "dral/errors.hpp"
#include "dral/gradcheck.hpp"
#include "dral/matrix.hpp"
#include "dral/nn.hpp"
#include "dral/optimizer.hpp"
#include "dral/rng.hpp"

using namespace dral;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = u(rng);
  return m;
}

DenseNet random_net(std::size_t in, std::vector<LayerSpec> specs, std::uint64_t seed) {
  Rng rng(seed);
  DenseNet net = DenseNet::make(in, specs, rng);
  // Non-zero biases so the bias paths are exercised.
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    for (double& b : net.layer(k).bias) b = u(rng);
  }
  return net;
}

double act_scalar(Activation a, double z) {
  switch (a) {
    case Activation::kRelu: return z > 0 ? z : 0.0;
    case Activation::kTanh: return std::tanh(z);
    default: return z;
  }
}

// Plain loops over rows and units, written independently of the library.
Matrix scalar_forward(const DenseNet& net, const Matrix& x) {
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<double> h(x.row(r).begin(), x.row(r).end());
    for (const auto& layer : net.layers()) {
      std::vector<double> z(layer.out_dim());
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        double s = layer.bias[o];
        for (std::size_t i = 0; i < layer.in_dim(); ++i) s += layer.weights(o, i) * h[i];
        z[o] = s;
      }
      if (layer.activation == Activation::kSoftmax) {
        double mx = z[0];
        for (double v : z) mx = std::max(mx, v);
        double sum = 0;
        for (double& v : z) sum += (v = std::exp(v - mx));
        for (double& v : z) v /= sum;
      } else {
        for (double& v : z) v = act_scalar(layer.activation, v);
      }
      h = z;
    }
    rows.push_back(h);
  }
  Matrix out(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) out(r, c) = rows[r][c];
  return out;
}

}  // namespace

TEST_CASE("matrix rejects mismatched data and out-of-range rows") {
  CHECK_THROWS_AS(Matrix(2, 3, std::vector<double>(5)), ShapeError);
  Matrix m{{1, 2}, {3, 4}, {5, 6}};
  std::vector<std::size_t> ids{2, 0};
  const Matrix g = m.gather_rows(ids);
  CHECK(g == Matrix{{5, 6}, {1, 2}});
  std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(m.gather_rows(bad), ParameterError);
  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(m.all_finite());
}

TEST_CASE("forward: zero softmax layer gives uniform rows") {
  DenseNet net({DenseLayer{Matrix(10, 5), std::vector<double>(10, 0.0), Activation::kSoftmax}});
  Rng rng(3);
  const Matrix out = net.forward(random_matrix(4, 5, rng));
  for (double v : out.values()) CHECK(v == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("forward: single tanh unit") {
  DenseNet net({DenseLayer{Matrix{{2.0}}, {0.0}, Activation::kTanh}});
  const Matrix out = net.forward(Matrix{{0.5}});
  CHECK(out(0, 0) == doctest::Approx(0.76159).epsilon(1e-5));
  CHECK(out(0, 0) == std::tanh(1.0));
}

TEST_CASE("forward matches a scalar-loop recomputation") {
  for (Activation hidden : {Activation::kRelu, Activation::kTanh, Activation::kIdentity}) {
    DenseNet net = random_net(6, {{5, hidden}, {3, Activation::kSoftmax}}, 11);
    Rng rng(12);
    const Matrix x = random_matrix(4, 6, rng, 2.0);
    const Matrix got = net.forward(x);
    const Matrix want = scalar_forward(net, x);
    REQUIRE(got.rows() == 4);
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(std::abs(got.values()[i] - want.values()[i]) <= 1e-12);
    }
    CHECK(net.predict(x) == got);
  }
}

TEST_CASE("forward output ranges hold on random nets") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DenseNet net = random_net(4, {{8, Activation::kTanh}, {8, Activation::kRelu}, {5, Activation::kSoftmax}}, seed);
    Rng rng(seed + 100);
    const Matrix x = random_matrix(7, 4, rng, 10.0);
    const Matrix p = net.predict(x);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0;
      for (double v : p.row(r)) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    const Matrix t = net.activations(x, 0);
    for (double v : t.values()) CHECK((v > -1.0 && v < 1.0));
  }
}

TEST_CASE("construction and forward errors name the layer") {
  CHECK_THROWS_WITH_AS(DenseNet({DenseLayer{Matrix(3, 2), std::vector<double>(3), Activation::kRelu},
                                 DenseLayer{Matrix(2, 4), std::vector<double>(2), Activation::kIdentity}}),
                       doctest::Contains("layer 1"), ShapeError);
  CHECK_THROWS_WITH_AS(DenseNet({DenseLayer{Matrix(3, 2), std::vector<double>(3), Activation::kSoftmax},
                                 DenseLayer{Matrix(2, 3), std::vector<double>(2), Activation::kIdentity}}),
                       doctest::Contains("layer 0"), ShapeError);
  DenseNet net = random_net(3, {{2, Activation::kTanh}}, 1);
  CHECK_THROWS_WITH_AS(net.forward(Matrix(1, 4)), doctest::Contains("layer 0"), ShapeError);
}

TEST_CASE("backward before forward is a state error") {
  DenseNet net = random_net(3, {{2, Activation::kTanh}}, 1);
  CHECK_THROWS_AS(net.backward(Matrix(1, 2)), StateError);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  DenseNet net = random_net(4, {{6, Activation::kTanh}, {3, Activation::kSoftmax}}, 5);
  Rng rng(6);
  const Matrix x = random_matrix(5, 4, rng);
  net.forward(x);
  const NetGradients g = net.backward(Matrix(5, 3));
  for (const auto& layer : g.layers) {
    for (double v : layer.weights.values()) CHECK(v == 0.0);
    for (double v : layer.bias) CHECK(v == 0.0);
  }
}

TEST_CASE("linear layer with summed outputs: weight gradient is column sums of x") {
  DenseNet net = random_net(3, {{2, Activation::kIdentity}}, 9);
  const Matrix x{{1, 2, 3}, {-1, 0.5, 4}, {2, 2, -2}, {0, 1, 1}};
  const Matrix before = x;
  net.forward(x);
  const NetGradients g = net.backward(Matrix(4, 2, 1.0));
  const std::vector<double> colsum{2.0, 5.5, 6.0};
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 3; ++i) CHECK(g.layers[0].weights(o, i) == doctest::Approx(colsum[i]));
    CHECK(g.layers[0].bias[o] == doctest::Approx(4.0));
  }
  CHECK(x == before);
}

TEST_CASE("analytic gradients agree with central differences on random small nets") {
  const std::vector<Activation> acts{Activation::kIdentity, Activation::kRelu, Activation::kTanh};
  std::uint64_t seed = 40;
  for (Activation a : acts) {
    for (Activation b : acts) {
      for (Activation out : {Activation::kIdentity, Activation::kTanh, Activation::kSoftmax}) {
        DenseNet net = random_net(5, {{7, a}, {6, b}, {3, out}}, ++seed);
        Rng rng(seed * 7);
        const Matrix x = random_matrix(4, 5, rng);
        const Matrix proj = random_matrix(4, 3, rng);
        auto loss = [&] {
          const Matrix y = net.predict(x);
          double s = 0;
          for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * proj.values()[i];
          return s;
        };
        net.forward(x);
        const NetGradients g = net.backward(proj);
        const double err = check_net_gradient(net, loss, g, kGradCheckEps);
        CHECK_MESSAGE(err < 1e-4, to_string(a), "/", to_string(b), "/", to_string(out));
      }
    }
  }
}

TEST_CASE("built-in gradient check passes") {
  const GradCheckReport report = run_grad_check(0);
  CHECK(report.passed());
  CHECK(report.max_layer_error() < kLayerTolerance);
  CHECK(report.max_composed_error() < kComposedTolerance);
}

TEST_CASE("cross entropy values") {
  const std::vector<int> y0{1};
  CHECK(cross_entropy(Matrix{{0.0, 1.0, 0.0}}, y0).loss == 0.0);

  const std::vector<int> y1{4};
  CHECK(cross_entropy(Matrix(1, 10, 0.1), y1).loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(cross_entropy(Matrix(1, 10, 0.1), y1).loss == doctest::Approx(2.302585).epsilon(1e-6));

  const LossResult clamped = cross_entropy(Matrix{{1.0, 0.0}}, y0);
  CHECK(std::isfinite(clamped.loss));
  CHECK(clamped.loss == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("cross entropy on a 3-row batch matches a scalar loop") {
  const Matrix p{{0.7, 0.2, 0.1}, {0.1, 0.3, 0.6}, {0.25, 0.5, 0.25}};
  const std::vector<int> y{0, 1, 2};
  const LossResult r = cross_entropy(p, y);
  double want = 0;
  for (std::size_t i = 0; i < 3; ++i) want -= std::log(p(i, y[i]));
  want /= 3.0;
  CHECK(std::abs(r.loss - want) <= 1e-12);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double g = (p(i, c) - (static_cast<int>(c) == y[i] ? 1.0 : 0.0)) / 3.0;
      CHECK(std::abs(r.grad(i, c) - g) <= 1e-12);
    }
  }
}

TEST_CASE("sgd without momentum: one hand step") {
  DenseNet net({DenseLayer{Matrix{{1.0}}, {0.0}, Activation::kIdentity}});
  Optimizer opt(OptimizerConfig::sgd(0.1, 0.0, 0.0), net);
  NetGradients g{{LayerGrad{Matrix{{0.1}}, {0.0}}}, {}};
  opt.step(net, g);
  CHECK(net.layer(0).weights(0, 0) == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("adam with zero gradient leaves the parameter unchanged") {
  DenseNet net({DenseLayer{Matrix{{0.37}}, {-1.5}, Activation::kIdentity}});
  Optimizer opt(OptimizerConfig::adam(1e-3), net);
  opt.step(net, NetGradients{{LayerGrad{Matrix{{0.0}}, {0.0}}}, {}});
  CHECK(net.layer(0).weights(0, 0) == 0.37);
  CHECK(net.layer(0).bias[0] == -1.5);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("sgd momentum trajectory on a scalar quadratic") {
  // Loss 1.5 w^2 + b^2, lr 0.1, momentum 0.9, decay 5e-4 on the weight only.
  DenseNet net({DenseLayer{Matrix{{1.0}}, {0.5}, Activation::kIdentity}});
  Optimizer opt(OptimizerConfig::sgd(0.1, 0.9, 5e-4), net);
  const double want_w[] = {0.69995, 0.21988500249999993, -0.2781499902501251,
                           -0.6429225791506876, -0.7783089892870301};
  const double want_b[] = {0.4, 0.22999999999999998, 0.030999999999999917,
                           -0.15430000000000013, -0.2902100000000002};
  for (int t = 0; t < 5; ++t) {
    const double w = net.layer(0).weights(0, 0);
    const double b = net.layer(0).bias[0];
    opt.step(net, NetGradients{{LayerGrad{Matrix{{3.0 * w}}, {2.0 * b}}}, {}});
    CHECK(std::abs(net.layer(0).weights(0, 0) - want_w[t]) <= 1e-12);
    CHECK(std::abs(net.layer(0).bias[0] - want_b[t]) <= 1e-12);
  }
}

TEST_CASE("non-finite gradient rejects the whole update") {
  DenseNet net = random_net(2, {{3, Activation::kTanh}, {1, Activation::kIdentity}}, 2);
  const DenseNet before = net;
  Optimizer opt(OptimizerConfig::adam(0.1), net);
  NetGradients g;
  for (const auto& l : net.layers()) g.layers.push_back({Matrix(l.out_dim(), l.in_dim(), 0.1), std::vector<double>(l.out_dim(), 0.1)});
  g.layers[1].weights(0, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(opt.step(net, g), doctest::Contains("layer 1 weights"), NonFiniteError);
  CHECK(net.same_parameters(before));
  CHECK(opt.step_count() == 0);

  g.layers.pop_back();
  CHECK_THROWS_AS(opt.step(net, g), ShapeError);
}

TEST_CASE("training is deterministic and drives cross entropy down on a separable batch") {
  auto train = [](std::uint64_t seed, std::vector<double>* losses) {
    Rng rng(seed);
    DenseNet net = DenseNet::make(2, std::vector<LayerSpec>{{8, Activation::kTanh}, {2, Activation::kSoftmax}}, rng);
    Optimizer opt(OptimizerConfig::sgd(0.1, 0.9, 0.0), net);
    const Matrix x{{2, 1}, {1.5, 2}, {3, 0.5}, {-2, -1}, {-1, -2.5}, {-3, 0}};
    const std::vector<int> y{0, 0, 0, 1, 1, 1};
    for (int step = 0; step < 200; ++step) {
      const LossResult r = cross_entropy(net.forward(x), y);
      if (losses) losses->push_back(r.loss);
      opt.step(net, net.backward_from_logits(r.grad));
    }
    return net;
  };
  std::vector<double> losses;
  const DenseNet a = train(5, &losses);
  const DenseNet b = train(5, nullptr);
  CHECK(a.flat_parameters() == b.flat_parameters());
  CHECK(losses.back() <= 0.1 * losses.front());
}

TEST_CASE("blend and flat parameter round trip") {
  DenseNet a = random_net(3, {{4, Activation::kRelu}, {2, Activation::kIdentity}}, 1);
  DenseNet b = random_net(3, {{4, Activation::kRelu}, {2, Activation::kIdentity}}, 2);
  const auto pa = a.flat_parameters();
  const auto pb = b.flat_parameters();
  DenseNet t = b;
  blend_parameters(t, a, 0.25);
  const auto pt = t.flat_parameters();
  for (std::size_t i = 0; i < pt.size(); ++i) CHECK(pt[i] == 0.25 * pa[i] + 0.75 * pb[i]);

  DenseNet c = b;
  c.set_flat_parameters(pa);
  CHECK(c.same_parameters(a));
  CHECK(dense_net_from_json(to_json(a)).same_parameters(a));
  CHECK_THROWS_AS(c.set_flat_parameters(std::vector<double>(pa.size() + 1)), ShapeError);
}
