#ifndef AUTOPOOL_EVALUATION_HPP
#define AUTOPOOL_EVALUATION_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "autopool/error.hpp"
#include "autopool/features.hpp"
#include "autopool/pooling.hpp"

namespace autopool {

// ---------------------------------------------------------------------------
// Invariance score

inline constexpr double kDegenerateDistance = 1e-12;

struct InvarianceReport {
  double g_mean = 0;  // mean distance between the two frames of a pair
  double h_mean = 0;  // mean distance between frame n and the second frame of pair sigma(n)
  double f_score = 0; // h_mean / g_mean; +inf when only g_mean degenerates
  std::uint64_t permutation_seed = 0;
  std::vector<Index> permutation;

  bool infinite() const { return std::isinf(f_score); }
};

/// Seeded uniform permutation of [0, n) with no fixed point: resampled up to
/// 100 times, then rotation by one.
std::vector<Index> derangement(Index n, std::uint64_t seed);

/// Scores outputs g(x_n) (columns of `first`) against g(x'_n) (columns of `second`).
template <typename D1, typename D2>
InvarianceReport invariance_score(const Eigen::MatrixBase<D1>& first, const Eigen::MatrixBase<D2>& second,
                                  std::uint64_t permutation_seed) {
  const Index n = first.cols();
  require(n >= 2, ErrorCode::kTooFewPairs, "invariance score needs at least two pairs");
  require(second.cols() == n && second.rows() == first.rows(), ErrorCode::kDimensionMismatch,
          "output pairs differ in shape");
  InvarianceReport r;
  r.permutation_seed = permutation_seed;
  r.permutation = derangement(n, permutation_seed);
  double g = 0, h = 0;
  for (Index i = 0; i < n; ++i) {
    g += (first.col(i) - second.col(i)).template cast<double>().norm();
    h += (first.col(i) - second.col(r.permutation[i])).template cast<double>().norm();
  }
  r.g_mean = g / static_cast<double>(n);
  r.h_mean = h / static_cast<double>(n);
  if (r.g_mean < kDegenerateDistance) {
    require(r.h_mean >= kDegenerateDistance, ErrorCode::kUndefined,
            "outputs are constant: both G and H vanish");
    r.f_score = std::numeric_limits<double>::infinity();
  } else {
    r.f_score = r.h_mean / r.g_mean;
  }
  return r;
}

template <typename Scalar>
InvarianceReport invariance_score(const FeaturePairs<Scalar>& outputs, std::uint64_t permutation_seed) {
  return invariance_score(outputs.first, outputs.second, permutation_seed);
}

// ---------------------------------------------------------------------------
// Lambda sweep

struct SweepConfig {
  std::vector<double> lambdas;
  Index clusters = 2;
  PoolTrainConfig base;            // lambda is overwritten per point
  double holdout_fraction = 0.3;   // trailing share of pairs used only for scoring
  std::uint64_t score_seed = 1;
};

struct SweepPoint {
  double lambda = 0;
  double f_raw = 0;
  double f_pooled = 0;  // NaN when the pooled outputs are constant (G = H = 0)
};

struct SweepResult {
  std::vector<SweepPoint> points;
  Index train_pairs = 0;
  Index heldout_pairs = 0;
};

/// For every lambda, trains a fresh model with the base seed on the leading
/// pairs and scores raw and pooled features on the held-out tail.
SweepResult lambda_sweep(const FeaturePairs<double>& features, const SweepConfig& cfg);
SweepResult lambda_sweep(const PatchPairSet& pairs, const FeatureFunction& f, const SweepConfig& cfg);

/// Columns: lambda, f_raw, f_pooled.
void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Cluster purity

/// Fraction of features whose assigned cluster maps to their true group under
/// the best one-to-one cluster-to-group matching.
double cluster_purity(const std::vector<int>& assignment, const std::vector<int>& groups);

// ---------------------------------------------------------------------------
// Linear classification

struct LabeledFeatures {
  Eigen::MatrixXd features;  // one column per example
  std::vector<int> labels;
  int n_classes = 0;

  Index size() const { return features.cols(); }
};

/// APLF files: "APLF", u32 version, u32 N, u32 dim, u32 n_classes, N u32
/// labels, then N columns of dim f64.
void save_labeled_features(const LabeledFeatures& set, const std::filesystem::path& path);
LabeledFeatures load_labeled_features(const std::filesystem::path& path);

struct ClassifierTrainConfig {
  double regularization = 1e-4;
  double learning_rate = 1.0;  // relative to 1 / (2 (mean |x|^2 + 1)) after standardisation
  int epochs = 200;
  bool standardize = true;

  void validate() const {
    require(regularization >= 0, ErrorCode::kInvalidConfig, "regularisation must be >= 0");
    require(learning_rate > 0, ErrorCode::kInvalidConfig, "learning rate must be > 0");
    require(epochs >= 0, ErrorCode::kInvalidConfig, "epochs must be >= 0");
  }
};

/// One-vs-rest linear model over (optionally) standardised features.
class LinearClassifier {
 public:
  LinearClassifier() = default;
  LinearClassifier(Eigen::MatrixXd weights, Eigen::VectorXd bias, Eigen::VectorXd mean, Eigen::VectorXd scale);

  int n_classes() const { return static_cast<int>(weights_.rows()); }
  Index feature_dim() const { return weights_.cols(); }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& bias() const { return bias_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& scale() const { return scale_; }

  /// n_classes x N class scores.
  Eigen::MatrixXd scores(const Eigen::MatrixXd& features) const;
  /// Argmax of the scores; ties go to the lowest class index.
  std::vector<int> predict(const Eigen::MatrixXd& features) const;

 private:
  Eigen::MatrixXd weights_;
  Eigen::VectorXd bias_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
};

struct ClassifierTrainResult {
  LinearClassifier classifier;
  double initial_objective = 0;
  std::vector<double> objective_curve;
};

/// Full-batch gradient descent on the L2-regularised one-vs-rest squared hinge
/// loss, starting from zero weights; rate halves on any epoch that would
/// raise the objective.
ClassifierTrainResult train_classifier(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                       int n_classes, const ClassifierTrainConfig& cfg);

/// Regularised objective of `clf` on standardised inputs (as minimised by training).
double classifier_objective(const LinearClassifier& clf, const Eigen::MatrixXd& features,
                            const std::vector<int>& labels, double regularization);

double evaluate_classifier(const LinearClassifier& clf, const Eigen::MatrixXd& features,
                           const std::vector<int>& labels);

/// APLC files: "APLC", u32 version, u32 n_classes, u32 dim, then mean, scale
/// (dim each), weights (row-major), bias as f64.
void save_classifier(const LinearClassifier& clf, const std::filesystem::path& path);
LinearClassifier load_classifier(const std::filesystem::path& path);

}  // namespace autopool

#endif  // AUTOPOOL_EVALUATION_HPP
