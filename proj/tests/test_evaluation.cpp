#include <doctest.h>

#include <fstream>
#include <random>

#include "autopool/dataset.hpp"
#include "autopool/evaluation.hpp"
#include "oracles.hpp"

using namespace autopool;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an autopool::Error");
  return ErrorCode::kUndefined;
}

}  // namespace

TEST_CASE("derangement has no fixed points and is a bijection") {
  for (Index n : {2, 3, 5, 17, 200})
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto p = derangement(n, seed);
      std::vector<int> seen(static_cast<std::size_t>(n), 0);
      for (Index i = 0; i < n; ++i) {
        CHECK(p[i] != i);
        seen.at(static_cast<std::size_t>(p[i]))++;
      }
      for (int s : seen) CHECK(s == 1);
      CHECK(derangement(n, seed) == p);
    }
  CHECK(derangement(2, 0) == std::vector<Index>{1, 0});
}

TEST_CASE("invariance score hand-computed example") {
  Eigen::MatrixXd first(1, 2), second(1, 2);
  first << 0.0, 1.0;
  second << 0.1, 0.9;
  const auto r = invariance_score(first, second, 3);
  CHECK(r.permutation == std::vector<Index>{1, 0});
  CHECK(r.g_mean == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(r.h_mean == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(r.f_score == doctest::Approx(9.0).epsilon(1e-13));
}

TEST_CASE("invariance score degenerate cases") {
  const Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(3, 10, 0.4);
  CHECK(code_of([&] { invariance_score(constant, constant, 0); }) == ErrorCode::kUndefined);

  std::mt19937_64 rng(1);
  const Eigen::MatrixXd varying = oracle::uniform(3, 10, rng);
  const auto r = invariance_score(varying, varying, 0);
  CHECK(r.g_mean == 0.0);
  CHECK(r.h_mean > 0.0);
  CHECK(r.infinite());

  CHECK(code_of([&] { invariance_score(varying.leftCols(1), varying.leftCols(1), 0); }) == ErrorCode::kTooFewPairs);
  CHECK(code_of([&] { invariance_score(varying, varying.topRows(2), 0); }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("invariance score matches a direct evaluation") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd a = oracle::uniform(5, 12, rng), b = oracle::uniform(5, 12, rng);
  const auto r = invariance_score(a, b, 8);
  double g = 0, h = 0;
  for (Index i = 0; i < 12; ++i) {
    double dg = 0, dh = 0;
    for (Index d = 0; d < 5; ++d) {
      dg += (a(d, i) - b(d, i)) * (a(d, i) - b(d, i));
      dh += (a(d, i) - b(d, r.permutation[i])) * (a(d, i) - b(d, r.permutation[i]));
    }
    g += std::sqrt(dg);
    h += std::sqrt(dh);
  }
  CHECK(std::abs(r.g_mean - g / 12) < 1e-14);
  CHECK(std::abs(r.h_mean - h / 12) < 1e-14);
}

TEST_CASE("invariance score scale property") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Index d = 1 + static_cast<Index>(rng() % 10), n = 2 + static_cast<Index>(rng() % 30);
    const Eigen::MatrixXd a = oracle::uniform(d, n, rng), b = oracle::uniform(d, n, rng);
    for (double c : {3.7, 0.25, 1000.0}) {
      const auto r = invariance_score(a, b, seed);
      const auto s = invariance_score((c * a).eval(), (c * b).eval(), seed);
      CHECK(std::abs(s.g_mean - c * r.g_mean) <= 1e-12 * c * r.g_mean);
      CHECK(std::abs(s.h_mean - c * r.h_mean) <= 1e-12 * c * r.h_mean);
      CHECK(std::abs(s.f_score - r.f_score) <= 1e-12 * r.f_score);
    }
  }
}

TEST_CASE("cluster purity") {
  CHECK(cluster_purity({0, 0, 1, 1}, {1, 1, 0, 0}) == 1.0);
  CHECK(cluster_purity({0, 0, 0, 0}, {0, 0, 1, 1}) == 0.5);
  CHECK(cluster_purity({0, 1, 2, 2}, {0, 0, 1, 1}) == 0.75);
  CHECK(cluster_purity({1, 0, 0, 1, 1, 0}, {0, 1, 1, 1, 0, 0}) == doctest::Approx(4.0 / 6.0));
  CHECK(code_of([] { cluster_purity({}, {}); }) == ErrorCode::kEmptySet);
  CHECK(code_of([] { cluster_purity({0}, {0, 1}); }) == ErrorCode::kDimensionMismatch);

  // Brute force over all cluster-to-group bijections for 3 clusters / 3 groups.
  std::mt19937_64 rng(5);
  for (int t = 0; t < 30; ++t) {
    std::vector<int> a(15), g(15);
    for (int j = 0; j < 15; ++j) {
      a[j] = static_cast<int>(rng() % 3);
      g[j] = static_cast<int>(rng() % 3);
    }
    a[0] = 2;
    g[0] = 2;
    std::array<int, 3> perm{0, 1, 2};
    int best = 0;
    do {
      int hit = 0;
      for (int j = 0; j < 15; ++j) hit += perm[a[j]] == g[j];
      best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(cluster_purity(a, g) == doctest::Approx(best / 15.0));
  }
}

TEST_CASE("lambda sweep") {
  SynthConfig sc;
  sc.n_pairs = 60;
  sc.size = 12;
  const auto data = generate_synthetic(sc);
  const OrientedLineBank bank(12, 2);
  const auto features = extract_pairs(data.pairs, bank);

  SweepConfig cfg;
  cfg.base.epochs = 20;
  cfg.lambdas = {1.0};
  const auto one = lambda_sweep(features, cfg);
  CHECK(one.points.size() == 1);
  CHECK(one.heldout_pairs == 18);
  CHECK(one.train_pairs == 42);

  cfg.lambdas = {0.1, 1.0, 10.0};
  const auto three = lambda_sweep(data.pairs, bank, cfg);
  REQUIRE(three.points.size() == 3);
  for (const auto& p : three.points) {
    CHECK(p.f_raw == three.points[0].f_raw);
    CHECK(std::isfinite(p.f_pooled));
  }

  const auto path = oracle::temp_path("sweep.csv");
  write_sweep_csv(three, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "lambda,f_raw,f_pooled");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);

  cfg.lambdas = {1.0, 0.5};
  CHECK(code_of([&] { lambda_sweep(features, cfg); }) == ErrorCode::kInvalidConfig);
  cfg.lambdas = {};
  CHECK(code_of([&] { lambda_sweep(features, cfg); }) == ErrorCode::kInvalidConfig);
}

// ---------------------------------------------------------------------------

namespace {

void two_clouds(int n, std::uint64_t seed, Eigen::MatrixXd* x, std::vector<int>* y) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  x->resize(2, n);
  y->resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    (*y)[static_cast<std::size_t>(i)] = c;
    (*x)(0, i) = (c ? 2.0 : -2.0) + noise(rng);
    (*x)(1, i) = (c ? 1.0 : -1.0) + noise(rng);
  }
}

}  // namespace

TEST_CASE("classifier separates two point clouds") {
  Eigen::MatrixXd x;
  std::vector<int> y;
  two_clouds(200, 1, &x, &y);
  const auto out = train_classifier(x, y, 2, {});
  CHECK(evaluate_classifier(out.classifier, x, y) == 1.0);

  double prev = out.initial_objective;
  for (double o : out.objective_curve) {
    CHECK(o <= prev + 1e-6);
    prev = o;
  }
  CHECK(classifier_objective(out.classifier, x, y, ClassifierTrainConfig{}.regularization) ==
        doctest::Approx(out.objective_curve.back()).epsilon(1e-12));
  CHECK(train_classifier(x, y, 2, {}).classifier.weights() == out.classifier.weights());
}

TEST_CASE("untrained classifier sits at chance on balanced data") {
  // Zero weights predict class 0 everywhere; relabelling the classes at
  // random keeps the accuracy at the share of whatever class maps to 0.
  const int n_classes = 10, per_class = 100;
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, n_classes * per_class).cwiseAbs();
  std::vector<int> y(static_cast<std::size_t>(n_classes * per_class));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % n_classes);
  ClassifierTrainConfig cfg;
  cfg.epochs = 0;
  std::mt19937_64 rng(3);
  for (int t = 0; t < 5; ++t) {
    std::vector<int> relabel(n_classes);
    std::iota(relabel.begin(), relabel.end(), 0);
    std::shuffle(relabel.begin(), relabel.end(), rng);
    std::vector<int> ry(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) ry[i] = relabel[static_cast<std::size_t>(y[i])];
    const auto out = train_classifier(x, ry, n_classes, cfg);
    CHECK(out.classifier.weights().isZero(0.0));
    const double acc = evaluate_classifier(out.classifier, x, ry);
    CHECK(std::abs(acc - 0.10) <= 0.02);
  }
}

TEST_CASE("classifier accuracy equals a per-example recount") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd x = oracle::uniform(6, 150, rng);
  std::vector<int> y(150);
  for (auto& l : y) l = static_cast<int>(rng() % 3);
  ClassifierTrainConfig cfg;
  cfg.epochs = 30;
  const auto clf = train_classifier(x, y, 3, cfg).classifier;
  const Eigen::MatrixXd s = clf.scores(x);
  int correct = 0;
  for (int i = 0; i < 150; ++i) {
    int best = 0;
    for (int c = 1; c < 3; ++c)
      if (s(c, i) > s(best, i)) best = c;
    correct += best == y[static_cast<std::size_t>(i)];
  }
  CHECK(evaluate_classifier(clf, x, y) == correct / 150.0);
}

TEST_CASE("adding a constant to every class score leaves predictions unchanged") {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd x = oracle::uniform(4, 60, rng);
  std::vector<int> y(60);
  for (auto& l : y) l = static_cast<int>(rng() % 4);
  const auto clf = train_classifier(x, y, 4, {}).classifier;
  for (double shift : {-3.0, 0.5, 100.0}) {
    const LinearClassifier moved(clf.weights(), (clf.bias().array() + shift).matrix(), clf.mean(), clf.scale());
    CHECK(moved.predict(x) == clf.predict(x));
  }
  // Ties resolve to the lowest class index.
  const LinearClassifier tied(Eigen::MatrixXd::Zero(3, 4), Eigen::Vector3d(0.5, 0.5, 0.5), Eigen::VectorXd::Zero(4),
                              Eigen::VectorXd::Ones(4));
  for (int p : tied.predict(x)) CHECK(p == 0);
}

TEST_CASE("classifier error paths") {
  Eigen::MatrixXd x;
  std::vector<int> y;
  two_clouds(20, 1, &x, &y);
  std::vector<int> single(20, 1);
  CHECK(code_of([&] { train_classifier(x, single, 2, {}); }) == ErrorCode::kSingleClass);
  CHECK(code_of([&] { train_classifier(x, y, 1, {}); }) == ErrorCode::kSingleClass);
  CHECK(code_of([&] { train_classifier(Eigen::MatrixXd(2, 0), {}, 2, {}); }) == ErrorCode::kEmptySet);
  std::vector<int> bad = y;
  bad[3] = 5;
  CHECK(code_of([&] { train_classifier(x, bad, 2, {}); }) == ErrorCode::kLabelOutOfRange);

  const auto clf = train_classifier(x, y, 2, {}).classifier;
  CHECK(code_of([&] { evaluate_classifier(clf, Eigen::MatrixXd(2, 0), {}); }) == ErrorCode::kEmptySet);
  CHECK(code_of([&] { evaluate_classifier(clf, Eigen::MatrixXd::Zero(3, 4), {0, 0, 0, 0}); }) ==
        ErrorCode::kDimensionMismatch);
}

TEST_CASE("classifier and labeled feature files round trip") {
  Eigen::MatrixXd x;
  std::vector<int> y;
  two_clouds(30, 2, &x, &y);
  const auto clf = train_classifier(x, y, 2, {}).classifier;
  const auto path = oracle::temp_path("clf.aplc");
  save_classifier(clf, path);
  const auto back = load_classifier(path);
  CHECK(back.weights() == clf.weights());
  CHECK(back.bias() == clf.bias());
  CHECK(back.mean() == clf.mean());
  CHECK(back.scale() == clf.scale());

  const LabeledFeatures set{x, y, 2};
  const auto fpath = oracle::temp_path("set.aplf");
  save_labeled_features(set, fpath);
  const auto loaded = load_labeled_features(fpath);
  CHECK(loaded.features == x);
  CHECK(loaded.labels == y);
  CHECK(loaded.n_classes == 2);
}
