#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dral/classifier.hpp"
#include "dral/dataset.hpp"
#include "dral/errors.hpp"
#include "dral/pool.hpp"
#include "dral/strategies.hpp"

using namespace dral;

namespace {

struct Blobs {
  Dataset data;
  PoolState pool;
  LabeledSet seed;
};

Blobs blobs(std::uint64_t seed) {
  BlobSpec spec;
  spec.seed = seed;
  Blobs b{make_gaussian_blobs(spec), {}, {}};
  b.pool = split_pool(b.data, 100, 200, 400, seed + 1);
  b.seed.ids = b.pool.labeled;
  for (SampleId id : b.seed.ids) b.seed.labels.push_back((*b.data.labels)[id]);
  return b;
}

LabeledSet labeled_from(const Dataset& d, std::vector<SampleId> ids) {
  LabeledSet s;
  s.ids = std::move(ids);
  for (SampleId id : s.ids) s.labels.push_back((*d.labels)[id]);
  return s;
}

std::vector<SampleId> iota_ids(std::size_t n) {
  std::vector<SampleId> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

TEST_CASE("default architecture and feature width") {
  Classifier clf(16, 4, LearnerConfig{}, 1);
  CHECK(clf.feature_dim() == 32);
  CHECK(clf.num_classes() == 4);
  REQUIRE(clf.net().num_layers() == 3);
  CHECK(clf.net().layer(0).activation == Activation::kRelu);
  CHECK(clf.net().layer(1).activation == Activation::kTanh);
  CHECK(clf.net().layer(2).activation == Activation::kSoftmax);
  CHECK(clf.feature_layer() == 1);
}

TEST_CASE("train_full memorizes a single sample") {
  Dataset d;
  d.features = Matrix{{0.3, -1.2, 0.8}};
  d.labels = std::vector<int>{2};
  d.num_classes = 3;
  LearnerConfig cfg;
  cfg.epochs_full = 50;
  Classifier clf(3, 3, cfg, 4);
  clf.train_full(d.features, labeled_from(d, {0}));
  const std::vector<SampleId> ids{0};
  CHECK(clf.evaluate_accuracy(d.features, ids, *d.labels) == 1.0);
}

TEST_CASE("train_full with zero epochs leaves parameters unchanged; empty set is an error") {
  const Blobs b = blobs(3);
  LearnerConfig cfg;
  cfg.epochs_full = 0;
  Classifier clf(16, 4, cfg, 5);
  const auto before = clf.net().flat_parameters();
  clf.train_full(b.data.features, b.seed);
  CHECK(clf.net().flat_parameters() == before);
  CHECK_THROWS_AS(clf.train_full(b.data.features, LabeledSet{}), StateError);
}

TEST_CASE("seed-trained classifier reaches 0.9 validation accuracy on blobs") {
  for (std::uint64_t s : {1, 2, 3}) {
    const Blobs b = blobs(s);
    Classifier clf(16, 4, LearnerConfig{}, s);
    clf.train_full(b.data.features, b.seed);
    CHECK(clf.evaluate_accuracy(b.data.features, b.pool.validation, *b.data.labels) >= 0.9);
  }
}

TEST_CASE("training is deterministic under a seed") {
  const Blobs b = blobs(8);
  Classifier a(16, 4, LearnerConfig{}, 9);
  Classifier c(16, 4, LearnerConfig{}, 9);
  a.train_full(b.data.features, b.seed);
  c.train_full(b.data.features, b.seed);
  CHECK(a.net().flat_parameters() == c.net().flat_parameters());
}

TEST_CASE("fine_tune: zero epochs and empty extra are no-ops") {
  const Blobs b = blobs(2);
  Classifier clf(16, 4, LearnerConfig{}, 3);
  clf.train_full(b.data.features, b.seed);
  const Matrix before = clf.predict_proba(b.data.features, b.pool.test);
  const LabeledSet extra = labeled_from(b.data, {b.pool.unlabeled[0], b.pool.unlabeled[1]});
  clf.fine_tune(b.data.features, b.seed, extra, 0);
  CHECK(clf.predict_proba(b.data.features, b.pool.test) == before);
  clf.fine_tune(b.data.features, b.seed, LabeledSet{}, 5);
  CHECK(clf.predict_proba(b.data.features, b.pool.test) == before);
}

TEST_CASE("fine_tune with already-labeled extras equals extra epochs on the same data") {
  const Blobs b = blobs(4);
  Classifier a(16, 4, LearnerConfig{}, 6);
  a.train_full(b.data.features, b.seed);
  Classifier c = a;
  const LabeledSet dup = labeled_from(b.data, {b.seed.ids[3], b.seed.ids[7]});
  a.fine_tune(b.data.features, b.seed, dup, 5);
  c.train_epochs(b.data.features, b.seed, 5);
  CHECK(a.net().flat_parameters() == c.net().flat_parameters());
}

TEST_CASE("fine_tune on 20 boundary points moves validation accuracy") {
  int moved = 0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const Blobs b = blobs(s);
    Classifier clf(16, 4, LearnerConfig{}, s);
    clf.train_full(b.data.features, b.seed);
    const double before = clf.evaluate_accuracy(b.data.features, b.pool.validation, *b.data.labels);
    const auto margins = score_margin(clf.predict_proba(b.data.features, b.pool.unlabeled));
    Rng rng(s);
    const auto near = select_top_k(b.pool.unlabeled, margins, 20, Direction::kLowestFirst, rng);
    clf.fine_tune(b.data.features, b.seed, labeled_from(b.data, near), 5);
    const double after = clf.evaluate_accuracy(b.data.features, b.pool.validation, *b.data.labels);
    moved += after != before;
  }
  CHECK(moved >= 8);
}

TEST_CASE("predicted probabilities are normalized") {
  const Blobs b = blobs(5);
  for (std::uint64_t s = 0; s < 5; ++s) {
    Classifier clf(16, 4, LearnerConfig{}, s);
    const Matrix p = clf.predict_proba(b.data.features, iota_ids(b.data.size()));
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double sum = 0;
      for (double v : p.row(r)) sum += v;
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("predict_proba on a wrapped net: uniform and hand cases") {
  DenseNet zero({DenseLayer{Matrix(10, 2), std::vector<double>(10, 0.0), Activation::kSoftmax}});
  Classifier u(zero, 0, LearnerConfig{}, 1);
  const Matrix x{{0.4, -3.0}, {2.0, 1.0}};
  const std::vector<SampleId> ids{0, 1};
  const Matrix pu = u.predict_proba(x, ids);
  for (double v : pu.values()) CHECK(v == doctest::Approx(0.1).epsilon(1e-15));

  DenseNet two({DenseLayer{Matrix{{1.0, 0.0}, {0.0, 1.0}}, {0.0, 0.0}, Activation::kSoftmax}});
  Classifier h(two, 0, LearnerConfig{}, 1);
  const Matrix p = h.predict_proba(Matrix{{1.0, 0.0}}, std::vector<SampleId>{0});
  CHECK(p(0, 0) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
}

TEST_CASE("extract_features: passthrough layer and order contract") {
  Matrix eye(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  DenseNet net({DenseLayer{eye, std::vector<double>(3, 0.0), Activation::kIdentity},
                DenseLayer{Matrix(2, 3, 0.1), std::vector<double>(2, 0.0), Activation::kSoftmax}});
  Classifier clf(net, 0, LearnerConfig{}, 1);
  const Matrix x{{1, 2, 3}, {4, 5, 6}, {-1, 0, 1}};
  CHECK(clf.extract_features(x, std::vector<SampleId>{0, 1, 2}) == x);

  const Blobs b = blobs(6);
  Classifier real(16, 4, LearnerConfig{}, 2);
  const std::vector<SampleId> ids{5, 9, 2, 40};
  const std::vector<SampleId> perm{40, 5, 2, 9};
  const Matrix f = real.extract_features(b.data.features, ids);
  const Matrix g = real.extract_features(b.data.features, perm);
  CHECK(f.cols() == 32);
  const std::size_t where[] = {1, 3, 2, 0};
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < f.cols(); ++c) CHECK(f(r, c) == g(where[r], c));
  }
}

TEST_CASE("evaluate_accuracy cases") {
  DenseNet two({DenseLayer{Matrix{{1.0, 0.0}, {0.0, 1.0}}, {0.0, 0.0}, Activation::kSoftmax}});
  Classifier clf(two, 0, LearnerConfig{}, 1);
  const Matrix x{{1, 0}, {0, 1}, {1, 0}, {0, 1}};
  const std::vector<SampleId> ids{0, 1, 2, 3};
  CHECK(clf.evaluate_accuracy(x, ids, std::vector<int>{0, 1, 0, 1}) == 1.0);
  CHECK(clf.evaluate_accuracy(x, ids, std::vector<int>{0, 1, 0, 0}) == 0.75);
  const std::vector<SampleId> shuffled{3, 0, 2, 1};
  CHECK(clf.evaluate_accuracy(x, shuffled, std::vector<int>{0, 1, 0, 0}) == 0.75);
  CHECK_THROWS_AS(clf.evaluate_accuracy(x, std::vector<SampleId>{}, std::vector<int>{0, 1, 0, 0}),
                  ParameterError);
}

TEST_CASE("untrained binary classifier is at chance on a balanced split") {
  BlobSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = 200;
  spec.seed = 12;
  const Dataset d = make_gaussian_blobs(spec);
  const auto ids = iota_ids(d.size());
  double total = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Classifier clf(16, 2, LearnerConfig{}, 100 + s);
    total += clf.evaluate_accuracy(d.features, ids, *d.labels);
  }
  CHECK(std::abs(total / 20 - 0.5) <= 0.1);
}

TEST_CASE("snapshot and restore") {
  const Blobs b = blobs(7);
  Classifier clf(16, 4, LearnerConfig{}, 7);
  clf.train_full(b.data.features, b.seed);
  const ClassifierSnapshot snap = clf.snapshot();
  const Matrix p0 = clf.predict_proba(b.data.features, b.pool.validation);
  const double acc0 = clf.evaluate_accuracy(b.data.features, b.pool.validation, *b.data.labels);

  clf.restore(snap);
  CHECK(clf.predict_proba(b.data.features, b.pool.validation) == p0);

  const LabeledSet extra = labeled_from(b.data, {b.pool.unlabeled.begin(), b.pool.unlabeled.begin() + 30});
  clf.fine_tune(b.data.features, b.seed, extra, 5);
  CHECK_FALSE(clf.predict_proba(b.data.features, b.pool.validation) == p0);
  clf.restore(snap);
  clf.restore(snap);
  CHECK(clf.predict_proba(b.data.features, b.pool.validation) == p0);
  CHECK(clf.evaluate_accuracy(b.data.features, b.pool.validation, *b.data.labels) == acc0);

  Classifier other(8, 4, LearnerConfig{}, 1);
  CHECK_THROWS_AS(other.restore(snap), StateError);
}
