#include "autopool/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "autopool/binary_io.hpp"

namespace autopool {

namespace {

constexpr char kLabeledMagic[] = "APLF";
constexpr char kClassifierMagic[] = "APLC";
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<Index> derangement(Index n, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  if (n < 2) return perm;
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::shuffle(perm.begin(), perm.end(), rng);
    bool fixed = false;
    for (Index i = 0; i < n && !fixed; ++i) fixed = perm[i] == i;
    if (!fixed) return perm;
  }
  for (Index i = 0; i < n; ++i) perm[i] = (i + 1) % n;
  return perm;
}

// ---------------------------------------------------------------------------

SweepResult lambda_sweep(const FeaturePairs<double>& features, const SweepConfig& cfg) {
  require(!cfg.lambdas.empty(), ErrorCode::kInvalidConfig, "no lambda values");
  for (std::size_t i = 1; i < cfg.lambdas.size(); ++i)
    require(cfg.lambdas[i] > cfg.lambdas[i - 1], ErrorCode::kInvalidConfig, "lambda values must increase");
  require(cfg.holdout_fraction > 0 && cfg.holdout_fraction < 1, ErrorCode::kInvalidConfig,
          "holdout fraction must lie in (0,1)");
  const Index n = features.size();
  require(n >= 3, ErrorCode::kTooFewPairs, "need at least 3 pairs to split train and held-out");
  const Index held = std::clamp<Index>(std::llround(cfg.holdout_fraction * double(n)), 2, n - 1);
  const Index train_n = n - held;

  const FeaturePairs<double> train{features.first.leftCols(train_n), features.second.leftCols(train_n)};
  const FeaturePairs<double> test{features.first.rightCols(held), features.second.rightCols(held)};
  const double f_raw = invariance_score(test, cfg.score_seed).f_score;

  SweepResult out;
  out.train_pairs = train_n;
  out.heldout_pairs = held;
  for (double lambda : cfg.lambdas) {
    PoolTrainConfig tc = cfg.base;
    tc.lambda = lambda;
    const auto trained = train_autopool(train, cfg.clusters, tc);
    const auto& p = trained.pooling.matrix();
    SweepPoint pt{lambda, f_raw, std::numeric_limits<double>::quiet_NaN()};
    try {
      pt.f_pooled = invariance_score(p * test.first, p * test.second, cfg.score_seed).f_score;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUndefined) throw;
    }
    out.points.push_back(pt);
  }
  return out;
}

SweepResult lambda_sweep(const PatchPairSet& pairs, const FeatureFunction& f, const SweepConfig& cfg) {
  return lambda_sweep(extract_pairs(pairs, f), cfg);
}

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIoFailure, "cannot open " + path.string());
  out << "lambda,f_raw,f_pooled\n";
  char line[128];
  for (const auto& p : result.points) {
    std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g\n", p.lambda, p.f_raw, p.f_pooled);
    out << line;
  }
  require(static_cast<bool>(out), ErrorCode::kIoFailure, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------

double cluster_purity(const std::vector<int>& assignment, const std::vector<int>& groups) {
  require(!assignment.empty(), ErrorCode::kEmptySet, "no features");
  require(assignment.size() == groups.size(), ErrorCode::kDimensionMismatch,
          "assignment and ground truth differ in length");
  const int k = *std::max_element(assignment.begin(), assignment.end()) + 1;
  const int g = *std::max_element(groups.begin(), groups.end()) + 1;
  require(g <= 20, ErrorCode::kInvalidConfig, "purity matching supports at most 20 groups");
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(k, g);
  for (std::size_t j = 0; j < assignment.size(); ++j) {
    require(assignment[j] >= 0 && groups[j] >= 0, ErrorCode::kValueOutOfRange, "negative index");
    ++counts(assignment[j], groups[j]);
  }
  // best[mask]: best matched count using clusters processed so far and the groups in mask.
  const std::size_t masks = std::size_t{1} << g;
  std::vector<int> best(masks, -1);
  best[0] = 0;
  for (int c = 0; c < k; ++c) {
    std::vector<int> next = best;
    for (std::size_t mask = 0; mask < masks; ++mask) {
      if (best[mask] < 0) continue;
      for (int grp = 0; grp < g; ++grp) {
        if (mask & (std::size_t{1} << grp)) continue;
        const std::size_t m2 = mask | (std::size_t{1} << grp);
        next[m2] = std::max(next[m2], best[mask] + counts(c, grp));
      }
    }
    best = std::move(next);
  }
  return static_cast<double>(*std::max_element(best.begin(), best.end())) /
         static_cast<double>(assignment.size());
}

// ---------------------------------------------------------------------------

void save_labeled_features(const LabeledFeatures& set, const std::filesystem::path& path) {
  require(static_cast<Index>(set.labels.size()) == set.size(), ErrorCode::kDimensionMismatch,
          "label count differs from example count");
  io::Writer out;
  out.magic({kLabeledMagic, 4});
  out.put<std::uint32_t>(kVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(set.size()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(set.features.rows()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(set.n_classes));
  for (int l : set.labels) out.put<std::uint32_t>(static_cast<std::uint32_t>(l));
  out.put_array(set.features.data(), static_cast<std::size_t>(set.features.size()));
  out.write_file(path);
}

LabeledFeatures load_labeled_features(const std::filesystem::path& path) {
  auto in = io::Reader::from_file(path);
  in.expect_magic({kLabeledMagic, 4});
  const auto version = in.get<std::uint32_t>();
  require(version == kVersion, ErrorCode::kUnsupportedVersion, "APLF version " + std::to_string(version));
  const Index n = in.get<std::uint32_t>();
  const Index dim = in.get<std::uint32_t>();
  LabeledFeatures out;
  out.n_classes = static_cast<int>(in.get<std::uint32_t>());
  require(n >= 1 && dim >= 1 && out.n_classes >= 1, ErrorCode::kModelParse, "APLF header has a zero dimension");
  out.labels.resize(static_cast<std::size_t>(n));
  for (auto& l : out.labels) {
    l = static_cast<int>(in.get<std::uint32_t>());
    require(l < out.n_classes, ErrorCode::kLabelOutOfRange, "label " + std::to_string(l));
  }
  out.features.resize(dim, n);
  in.get_array(out.features.data(), static_cast<std::size_t>(out.features.size()));
  in.expect_end();
  return out;
}

// ---------------------------------------------------------------------------

LinearClassifier::LinearClassifier(Eigen::MatrixXd weights, Eigen::VectorXd bias, Eigen::VectorXd mean,
                                   Eigen::VectorXd scale)
    : weights_(std::move(weights)), bias_(std::move(bias)), mean_(std::move(mean)), scale_(std::move(scale)) {
  require(bias_.size() == weights_.rows() && mean_.size() == weights_.cols() && scale_.size() == weights_.cols(),
          ErrorCode::kDimensionMismatch, "classifier parameter shapes disagree");
  require(weights_.allFinite() && bias_.allFinite() && mean_.allFinite() && scale_.allFinite(),
          ErrorCode::kDivergedLoss, "classifier parameters are not finite");
}

namespace {

Eigen::MatrixXd standardized(const LinearClassifier& clf, const Eigen::MatrixXd& features) {
  require(features.rows() == clf.feature_dim(), ErrorCode::kDimensionMismatch,
          "feature dim " + std::to_string(features.rows()) + " but classifier expects " +
              std::to_string(clf.feature_dim()));
  return clf.scale().asDiagonal() * (features.colwise() - clf.mean());
}

// Mean squared-hinge loss over classes; fills the score-gradient if non-null.
double hinge_loss(const Eigen::MatrixXd& scores, const std::vector<int>& labels, Eigen::MatrixXd* dscores) {
  const Index n = scores.cols();
  double loss = 0;
  if (dscores) dscores->setZero(scores.rows(), n);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < scores.rows(); ++c) {
      const double t = (labels[static_cast<std::size_t>(i)] == c) ? 1.0 : -1.0;
      const double margin = 1.0 - t * scores(c, i);
      if (margin > 0) {
        loss += margin * margin;
        if (dscores) (*dscores)(c, i) = -2.0 * t * margin / double(n);
      }
    }
  return loss / double(n);
}

}  // namespace

Eigen::MatrixXd LinearClassifier::scores(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd s = weights_ * standardized(*this, features);
  s.colwise() += bias_;
  return s;
}

std::vector<int> LinearClassifier::predict(const Eigen::MatrixXd& features) const {
  const Eigen::MatrixXd s = scores(features);
  std::vector<int> out(static_cast<std::size_t>(s.cols()));
  for (Index i = 0; i < s.cols(); ++i) {
    Index best = 0;
    s.col(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double classifier_objective(const LinearClassifier& clf, const Eigen::MatrixXd& features,
                            const std::vector<int>& labels, double regularization) {
  return hinge_loss(clf.scores(features), labels, nullptr) + 0.5 * regularization * clf.weights().squaredNorm();
}

ClassifierTrainResult train_classifier(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                       int n_classes, const ClassifierTrainConfig& cfg) {
  cfg.validate();
  const Index n = features.cols(), dim = features.rows();
  require(n >= 1, ErrorCode::kEmptySet, "no training examples");
  require(static_cast<Index>(labels.size()) == n, ErrorCode::kDimensionMismatch, "label count differs");
  require(n_classes >= 2, ErrorCode::kSingleClass, "need at least two classes");
  std::vector<int> seen(static_cast<std::size_t>(n_classes), 0);
  for (int l : labels) {
    require(l >= 0 && l < n_classes, ErrorCode::kLabelOutOfRange, "label " + std::to_string(l));
    seen[static_cast<std::size_t>(l)] = 1;
  }
  require(std::accumulate(seen.begin(), seen.end(), 0) >= 2, ErrorCode::kSingleClass,
          "training labels contain a single class");

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(dim);
  if (cfg.standardize) {
    mean = features.rowwise().mean();
    const Eigen::VectorXd var = (features.colwise() - mean).array().square().rowwise().mean();
    scale = (var.array() + 1e-8).rsqrt().matrix();
  }
  const Eigen::MatrixXd x = scale.asDiagonal() * (features.colwise() - mean);
  const double rate0 = cfg.learning_rate / (2.0 * (x.colwise().squaredNorm().mean() + 1.0));

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_classes, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n_classes);
  auto objective = [&](const Eigen::MatrixXd& wc, const Eigen::VectorXd& bc, Eigen::MatrixXd* ds) {
    Eigen::MatrixXd s = wc * x;
    s.colwise() += bc;
    return hinge_loss(s, labels, ds) + 0.5 * cfg.regularization * wc.squaredNorm();
  };

  ClassifierTrainResult out;
  Eigen::MatrixXd dscores;
  double current = objective(w, b, nullptr);
  out.initial_objective = current;
  double rate = rate0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    objective(w, b, &dscores);
    const Eigen::MatrixXd gw = dscores * x.transpose() + cfg.regularization * w;
    const Eigen::VectorXd gb = dscores.rowwise().sum();
    Eigen::MatrixXd w_next = w - rate * gw;
    Eigen::VectorXd b_next = b - rate * gb;
    const double candidate = objective(w_next, b_next, nullptr);
    if (std::isfinite(candidate) && candidate <= current) {
      w = std::move(w_next);
      b = std::move(b_next);
      current = candidate;
    } else {
      rate *= 0.5;
    }
    out.objective_curve.push_back(current);
  }
  require(std::isfinite(current), ErrorCode::kDivergedLoss, "classifier objective is not finite");
  out.classifier = LinearClassifier(std::move(w), std::move(b), std::move(mean), std::move(scale));
  return out;
}

double evaluate_classifier(const LinearClassifier& clf, const Eigen::MatrixXd& features,
                           const std::vector<int>& labels) {
  require(features.cols() >= 1, ErrorCode::kEmptySet, "empty test set");
  require(static_cast<Index>(labels.size()) == features.cols(), ErrorCode::kDimensionMismatch,
          "label count differs from example count");
  const auto predicted = clf.predict(features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

void save_classifier(const LinearClassifier& clf, const std::filesystem::path& path) {
  io::Writer out;
  out.magic({kClassifierMagic, 4});
  out.put<std::uint32_t>(kVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(clf.n_classes()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(clf.feature_dim()));
  out.put_array(clf.mean().data(), static_cast<std::size_t>(clf.mean().size()));
  out.put_array(clf.scale().data(), static_cast<std::size_t>(clf.scale().size()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = clf.weights();
  out.put_array(rm.data(), static_cast<std::size_t>(rm.size()));
  out.put_array(clf.bias().data(), static_cast<std::size_t>(clf.bias().size()));
  out.write_file(path);
}

LinearClassifier load_classifier(const std::filesystem::path& path) {
  auto in = io::Reader::from_file(path);
  in.expect_magic({kClassifierMagic, 4});
  const auto version = in.get<std::uint32_t>();
  require(version == kVersion, ErrorCode::kUnsupportedVersion, "APLC version " + std::to_string(version));
  const Index c = in.get<std::uint32_t>();
  const Index dim = in.get<std::uint32_t>();
  require(c >= 1 && dim >= 1, ErrorCode::kModelParse, "APLC header has a zero dimension");
  Eigen::VectorXd mean(dim), scale(dim), bias(c);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w(c, dim);
  in.get_array(mean.data(), static_cast<std::size_t>(dim));
  in.get_array(scale.data(), static_cast<std::size_t>(dim));
  in.get_array(w.data(), static_cast<std::size_t>(w.size()));
  in.get_array(bias.data(), static_cast<std::size_t>(c));
  in.expect_end();
  return LinearClassifier(Eigen::MatrixXd(w), std::move(bias), std::move(mean), std::move(scale));
}

}  // namespace autopool
