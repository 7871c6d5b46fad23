#ifndef AUTOPOOL_FEATURES_HPP
#define AUTOPOOL_FEATURES_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "autopool/dataset.hpp"
#include "autopool/error.hpp"
#include "autopool/parallel.hpp"

namespace autopool {

using Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Feature vectors of both frames of N pairs, one column per pair.
template <typename Scalar>
struct FeaturePairs {
  MatrixX<Scalar> first;
  MatrixX<Scalar> second;

  Index dim() const { return first.rows(); }
  Index size() const { return first.cols(); }
};

// ---------------------------------------------------------------------------
// Sparse autoencoder

/// One hidden layer with logistic units and a linear decoder.
template <typename Scalar>
struct SparseAutoencoder {
  MatrixX<Scalar> w_enc;  // hidden x input
  VectorX<Scalar> b_enc;
  MatrixX<Scalar> w_dec;  // input x hidden
  VectorX<Scalar> b_dec;

  Index input_dim() const { return w_enc.cols(); }
  Index hidden_dim() const { return w_enc.rows(); }

  static SparseAutoencoder zeros(Index input, Index hidden) {
    return {MatrixX<Scalar>::Zero(hidden, input), VectorX<Scalar>::Zero(hidden),
            MatrixX<Scalar>::Zero(input, hidden), VectorX<Scalar>::Zero(input)};
  }
};

struct SaeTrainConfig {
  double sparsity_target = 0.05;
  double sparsity_weight = 3.0;
  double weight_decay = 0.003;
  double learning_rate = 0.1;
  int epochs = 100;
  int batch_size = 0;  // 0 = full batch
  bool halve_on_increase = true;
  std::uint64_t seed = 0;

  void validate() const {
    require(sparsity_target > 0 && sparsity_target < 1, ErrorCode::kInvalidConfig,
            "sparsity target must lie in (0,1)");
    require(sparsity_weight >= 0 && weight_decay >= 0, ErrorCode::kInvalidConfig,
            "sparsity and decay weights must be >= 0");
    require(learning_rate > 0, ErrorCode::kInvalidConfig, "learning rate must be > 0");
    require(epochs >= 0 && batch_size >= 0, ErrorCode::kInvalidConfig,
            "epochs and batch size must be >= 0");
  }
};

template <typename Scalar>
struct SaeLoss {
  Scalar reconstruction = 0;
  Scalar sparsity = 0;
  Scalar decay = 0;
  Scalar total() const { return reconstruction + sparsity + decay; }
};

/// Weights uniform in [-r, r] with r = sqrt(6 / (D + M + 1)); biases zero.
template <typename Scalar>
SparseAutoencoder<Scalar> init_sae(Index input, Index hidden, std::uint64_t seed) {
  auto sae = SparseAutoencoder<Scalar>::zeros(input, hidden);
  const double r = std::sqrt(6.0 / static_cast<double>(input + hidden + 1));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-r, r);
  for (Index j = 0; j < input; ++j)
    for (Index i = 0; i < hidden; ++i) sae.w_enc(i, j) = static_cast<Scalar>(u(rng));
  for (Index j = 0; j < hidden; ++j)
    for (Index i = 0; i < input; ++i) sae.w_dec(i, j) = static_cast<Scalar>(u(rng));
  return sae;
}

namespace detail {

template <typename Derived>
auto logistic(const Eigen::ArrayBase<Derived>& z) {
  using S = typename Derived::Scalar;
  return (S(1) + (-z).exp()).inverse();
}

}  // namespace detail

/// Hidden activations for a batch (one column per input).
template <typename Scalar, typename Derived>
MatrixX<Scalar> encode_batch(const SparseAutoencoder<Scalar>& sae, const Eigen::MatrixBase<Derived>& x) {
  require(x.rows() == sae.input_dim(), ErrorCode::kDimensionMismatch,
          "input has " + std::to_string(x.rows()) + " rows, autoencoder expects " +
              std::to_string(sae.input_dim()));
  MatrixX<Scalar> z = sae.w_enc * x;
  z.colwise() += sae.b_enc;
  return detail::logistic(z.array()).matrix();
}

template <typename Scalar, typename Derived>
VectorX<Scalar> encode(const SparseAutoencoder<Scalar>& sae, const Eigen::MatrixBase<Derived>& x) {
  require(x.cols() == 1, ErrorCode::kDimensionMismatch, "encode takes a single column vector");
  return encode_batch(sae, x).col(0);
}

/// Loss of `sae` on the columns of `x`; fills `grad` (same shapes) if non-null.
template <typename Scalar, typename Derived>
SaeLoss<Scalar> sae_loss(const SparseAutoencoder<Scalar>& sae, const Eigen::MatrixBase<Derived>& x,
                         const SaeTrainConfig& cfg, SparseAutoencoder<Scalar>* grad = nullptr) {
  const Index n = x.cols();
  require(n >= 1, ErrorCode::kEmptyInput, "no patches");
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  const Scalar rho = static_cast<Scalar>(cfg.sparsity_target);
  const Scalar beta = static_cast<Scalar>(cfg.sparsity_weight);
  const Scalar alpha = static_cast<Scalar>(cfg.weight_decay);

  const MatrixX<Scalar> act = encode_batch(sae, x);
  MatrixX<Scalar> resid = sae.w_dec * act;
  resid.colwise() += sae.b_dec;
  resid -= x;
  const VectorX<Scalar> rho_hat = act.rowwise().mean();

  SaeLoss<Scalar> loss;
  loss.reconstruction = Scalar(0.5) * inv_n * resid.squaredNorm();
  loss.sparsity = beta * (rho * (rho / rho_hat.array()).log() +
                          (1 - rho) * ((1 - rho) / (1 - rho_hat.array())).log())
                             .sum();
  loss.decay = Scalar(0.5) * alpha * (sae.w_enc.squaredNorm() + sae.w_dec.squaredNorm());

  if (grad) {
    const MatrixX<Scalar> delta_out = resid * inv_n;
    grad->w_dec = delta_out * act.transpose() + alpha * sae.w_dec;
    grad->b_dec = delta_out.rowwise().sum();
    const VectorX<Scalar> kl_slope =
        beta * inv_n * (-rho / rho_hat.array() + (1 - rho) / (1 - rho_hat.array())).matrix();
    MatrixX<Scalar> delta_hidden = sae.w_dec.transpose() * delta_out;
    delta_hidden.colwise() += kl_slope;
    delta_hidden.array() *= act.array() * (1 - act.array());
    grad->w_enc = delta_hidden * x.transpose() + alpha * sae.w_enc;
    grad->b_enc = delta_hidden.rowwise().sum();
  }
  return loss;
}

template <typename Scalar>
struct SaeTrainResult {
  SparseAutoencoder<Scalar> model;
  Scalar initial_loss = 0;
  std::vector<Scalar> loss_curve;  // full-batch loss after each epoch
};

/// Mini-batch gradient descent from the seeded initialisation. An epoch that
/// raises the full-batch loss is rolled back and the rate halved.
template <typename Scalar, typename Derived>
SaeTrainResult<Scalar> train_sae(const Eigen::MatrixBase<Derived>& patches, Index hidden,
                                 const SaeTrainConfig& cfg) {
  cfg.validate();
  require(patches.cols() >= 1, ErrorCode::kEmptyInput, "no patches");
  require(hidden >= 1, ErrorCode::kInvalidConfig, "hidden_dim must be >= 1");
  const MatrixX<Scalar> x = patches.template cast<Scalar>();
  const Index n = x.cols();

  SaeTrainResult<Scalar> out{init_sae<Scalar>(x.rows(), hidden, cfg.seed), 0, {}};
  Scalar current = sae_loss(out.model, x, cfg).total();
  require(std::isfinite(static_cast<double>(current)), ErrorCode::kDivergedLoss,
          "initial loss is not finite");
  out.initial_loss = current;

  const Index batch = (cfg.batch_size == 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  Scalar rate = static_cast<Scalar>(cfg.learning_rate);
  auto grad = SparseAutoencoder<Scalar>::zeros(x.rows(), hidden);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    SparseAutoencoder<Scalar> next = out.model;
    if (batch < n) {
      auto rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(epoch) + 1);
      std::shuffle(order.begin(), order.end(), rng);
    }
    for (Index start = 0; start < n; start += batch) {
      const Index len = std::min(batch, n - start);
      if (batch < n) {
        const std::vector<Index> cols(order.begin() + start, order.begin() + start + len);
        sae_loss(next, x(Eigen::all, cols), cfg, &grad);
      } else {
        sae_loss(next, x, cfg, &grad);
      }
      next.w_enc -= rate * grad.w_enc;
      next.b_enc -= rate * grad.b_enc;
      next.w_dec -= rate * grad.w_dec;
      next.b_dec -= rate * grad.b_dec;
    }
    const Scalar candidate = sae_loss(next, x, cfg).total();
    const bool finite = std::isfinite(static_cast<double>(candidate));
    if (!cfg.halve_on_increase) {
      require(finite, ErrorCode::kDivergedLoss, "loss became non-finite at epoch " + std::to_string(epoch));
      out.model = std::move(next);
      current = candidate;
    } else if (finite && candidate <= current) {
      out.model = std::move(next);
      current = candidate;
    } else {
      rate *= Scalar(0.5);
    }
    out.loss_curve.push_back(current);
  }
  return out;
}

void save_sae(const SparseAutoencoder<double>& sae, const std::filesystem::path& path);
SparseAutoencoder<double> load_sae(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Convolutional layout

struct MapLocation {
  int map = 0;
  int row = 0;
  int col = 0;
  friend bool operator==(const MapLocation&, const MapLocation&) = default;
};

/// Stride-1 sliding-window layout. Flat feature index = map * map_size +
/// row * map_cols + col, so each map's indices S_k are one contiguous block.
struct ConvLayout {
  int image_height = 0;
  int image_width = 0;
  int channels = 1;
  int patch = 1;
  int n_maps = 1;

  int map_rows() const { return image_height - patch + 1; }
  int map_cols() const { return image_width - patch + 1; }
  Index map_size() const { return Index(map_rows()) * map_cols(); }
  Index feature_dim() const { return map_size() * n_maps; }
  Index patch_dim() const { return Index(patch) * patch * channels; }

  Index flat_index(const MapLocation& loc) const {
    return Index(loc.map) * map_size() + Index(loc.row) * map_cols() + loc.col;
  }
  MapLocation location(Index flat) const {
    const Index ms = map_size();
    const Index in_map = flat % ms;
    return {static_cast<int>(flat / ms), static_cast<int>(in_map / map_cols()),
            static_cast<int>(in_map % map_cols())};
  }

  void validate() const {
    require(image_height >= 1 && image_width >= 1 && channels >= 1 && n_maps >= 1 && patch >= 1,
            ErrorCode::kInvalidConfig, "layout dimensions must be positive");
    require(map_rows() >= 1 && map_cols() >= 1, ErrorCode::kInvalidConfig,
            "patch larger than image");
  }
};

/// Layout for running `sae` over images of the given shape.
ConvLayout conv_layout_for(const SparseAutoencoder<double>& sae, int image_height, int image_width,
                           int channels);

/// The p x p patch whose top-left corner is (row, col), channel-last row-major.
Eigen::VectorXd extract_patch(const ImageView& image, int row, int col, int patch);

/// Every encoder unit applied at every location of `image`.
Eigen::VectorXd conv_extract(const SparseAutoencoder<double>& sae, const ImageView& image,
                             const ConvLayout& layout);

/// `count` patches from random images at random locations, one per column.
Eigen::MatrixXd sample_patches(const std::vector<ImageView>& images, int patch, int count,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Fixed feature bank

/// Rectified centre-surround line detectors: for each orientation, one
/// detector per integer offset across the frame. Detectors sharing an
/// orientation are shifted copies of each other, so `group(j)` is known.
class OrientedLineBank {
 public:
  OrientedLineBank(int size, int n_orientations);

  int size() const { return size_; }
  int n_orientations() const { return n_orientations_; }
  Index feature_dim() const { return templates_.rows(); }
  int group(Index j) const { return groups_[j]; }
  const std::vector<int>& groups() const { return groups_; }
  /// One unit-norm template per row, over a size x size grey frame.
  const Eigen::MatrixXd& templates() const { return templates_; }

  /// Multi-channel frames are averaged to grey first.
  Eigen::VectorXd operator()(const ImageView& image) const;

 private:
  int size_;
  int n_orientations_;
  Eigen::MatrixXd templates_;
  std::vector<int> groups_;
};

using FeatureFunction = std::function<Eigen::VectorXd(const ImageView&)>;

FeaturePairs<double> extract_pairs(const PatchPairSet& pairs, const FeatureFunction& f);

/// APFP feature-pair files: "APFP", u32 version, u32 N, u32 M, then per pair
/// the M first-frame features and M second-frame features as f64.
void save_feature_pairs(const FeaturePairs<double>& pairs, const std::filesystem::path& path);
FeaturePairs<double> load_feature_pairs(const std::filesystem::path& path);

}  // namespace autopool

#endif  // AUTOPOOL_FEATURES_HPP
