#ifndef AUTOPOOL_POOLING_HPP
#define AUTOPOOL_POOLING_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "autopool/error.hpp"
#include "autopool/features.hpp"
#include "autopool/parallel.hpp"

namespace autopool {

/// K x M matrix with non-negative finite entries. Row i is the soft
/// membership of every feature in cluster i.
template <typename Scalar>
class PoolingMatrix {
 public:
  PoolingMatrix() = default;
  explicit PoolingMatrix(MatrixX<Scalar> entries) : m_(std::move(entries)) {
    require(m_.rows() >= 1 && m_.cols() >= 1, ErrorCode::kDimensionMismatch,
            "pooling matrix must be at least 1x1");
    require(m_.allFinite(), ErrorCode::kValueOutOfRange, "pooling matrix has non-finite entries");
    require((m_.array() >= Scalar(0)).all(), ErrorCode::kValueOutOfRange,
            "pooling matrix has negative entries");
  }

  static PoolingMatrix identity(Index m) { return PoolingMatrix(MatrixX<Scalar>::Identity(m, m)); }
  static PoolingMatrix zeros(Index k, Index m) { return PoolingMatrix(MatrixX<Scalar>::Zero(k, m)); }

  Index clusters() const { return m_.rows(); }
  Index feature_dim() const { return m_.cols(); }
  const MatrixX<Scalar>& matrix() const { return m_; }
  Scalar operator()(Index i, Index j) const { return m_(i, j); }

 private:
  MatrixX<Scalar> m_;
};

template <typename Scalar>
struct CostBreakdown {
  Scalar j1 = 0;
  Scalar j2 = 0;
  Scalar lambda = 0;
  Scalar total() const { return lambda * j1 + j2; }
};

namespace detail {

template <typename Scalar, typename Derived>
void check_features(const PoolingMatrix<Scalar>& p, const Eigen::MatrixBase<Derived>& y) {
  require(y.rows() == p.feature_dim(), ErrorCode::kDimensionMismatch,
          "feature length " + std::to_string(y.rows()) + " but pooling matrix has " +
              std::to_string(p.feature_dim()) + " columns");
}

template <typename Scalar, typename D1, typename D2>
void check_pairs(const PoolingMatrix<Scalar>& p, const Eigen::MatrixBase<D1>& first,
                 const Eigen::MatrixBase<D2>& second) {
  require(first.cols() >= 1, ErrorCode::kEmptyPairs, "no pairs");
  require(first.cols() == second.cols() && first.rows() == second.rows(), ErrorCode::kDimensionMismatch,
          "first and second frames differ in shape");
  check_features(p, first);
}

}  // namespace detail

/// z = P y, column by column. Every entry is accumulated over features in
/// ascending index order, so the result is bitwise independent of blocking,
/// thread count and SIMD width, and a 0/1 matrix gives plain in-order sums.
template <typename Scalar, typename Derived>
MatrixX<Scalar> pool(const PoolingMatrix<Scalar>& p, const Eigen::MatrixBase<Derived>& y) {
  detail::check_features(p, y);
  require((y.array() >= Scalar(0)).all(), ErrorCode::kNegativeInput, "pooling input has negative entries");
  const MatrixX<Scalar> ye = y;
  const auto& pm = p.matrix();
  MatrixX<Scalar> z = MatrixX<Scalar>::Zero(pm.rows(), ye.cols());
  constexpr Index kBlock = 16;
  const Index blocks = (ye.cols() + kBlock - 1) / kBlock;
  parallel_for(static_cast<std::size_t>(blocks), [&](std::size_t b) {
    const Index c0 = static_cast<Index>(b) * kBlock;
    const Index width = std::min(kBlock, ye.cols() - c0);
    auto zb = z.middleCols(c0, width);
    for (Index j = 0; j < pm.cols(); ++j) zb.noalias() += pm.col(j) * ye.block(j, c0, 1, width);
  });
  return z;
}

/// y_hat = P^T z, column by column.
template <typename Scalar, typename Derived>
MatrixX<Scalar> reconstruct(const PoolingMatrix<Scalar>& p, const Eigen::MatrixBase<Derived>& z) {
  require(z.rows() == p.clusters(), ErrorCode::kDimensionMismatch,
          "pooled length " + std::to_string(z.rows()) + " but pooling matrix has " +
              std::to_string(p.clusters()) + " rows");
  return p.matrix().transpose() * z;
}

/// Mean temporal-coherence cost j1 and mean reconstruction cost j2 over the
/// pairs (columns of `first`, `second`); optionally the gradient of
/// lambda * j1 + j2 with respect to P.
template <typename Scalar, typename D1, typename D2>
CostBreakdown<Scalar> cost(const PoolingMatrix<Scalar>& p, const Eigen::MatrixBase<D1>& first,
                           const Eigen::MatrixBase<D2>& second, Scalar lambda,
                           MatrixX<Scalar>* gradient = nullptr) {
  detail::check_pairs(p, first, second);
  const auto& pm = p.matrix();
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(first.cols());

  const MatrixX<Scalar> diff = first - second;
  const MatrixX<Scalar> pooled_diff = pm * diff;
  const MatrixX<Scalar> z1 = pm * first;
  const MatrixX<Scalar> z2 = pm * second;
  const MatrixX<Scalar> e1 = pm.transpose() * z1 - first;
  const MatrixX<Scalar> e2 = pm.transpose() * z2 - second;

  CostBreakdown<Scalar> c;
  c.lambda = lambda;
  c.j1 = Scalar(0.5) * inv_n * pooled_diff.squaredNorm();
  c.j2 = Scalar(0.5) * inv_n * (e1.squaredNorm() + e2.squaredNorm());

  if (gradient) {
    // d/dP of 1/2|P d|^2 is P d d^T; of 1/2|P^T P y - y|^2 is P (e y^T + y e^T).
    *gradient = lambda * (pooled_diff * diff.transpose());
    gradient->noalias() += (pm * e1) * first.transpose() + z1 * e1.transpose();
    gradient->noalias() += (pm * e2) * second.transpose() + z2 * e2.transpose();
    *gradient *= inv_n;
  }
  return c;
}

template <typename Scalar>
CostBreakdown<Scalar> cost(const PoolingMatrix<Scalar>& p, const FeaturePairs<Scalar>& pairs, Scalar lambda) {
  return cost(p, pairs.first, pairs.second, lambda);
}

template <typename Scalar, typename D1, typename D2>
MatrixX<Scalar> cost_gradient(const PoolingMatrix<Scalar>& p, const Eigen::MatrixBase<D1>& first,
                              const Eigen::MatrixBase<D2>& second, Scalar lambda) {
  MatrixX<Scalar> g;
  cost(p, first, second, lambda, &g);
  return g;
}

// ---------------------------------------------------------------------------
// Training

struct PoolTrainConfig {
  double lambda = 1.0;
  double learning_rate = 0.05;
  int epochs = 200;
  int batch_size = 0;       // 0 = full batch
  double init_scale = 0.0;  // 0 = 0.01 / sqrt(M)
  double tolerance = 0.0;   // stop once an epoch improves J by less than this (relative); 0 = never
  bool halve_on_increase = true;
  std::uint64_t seed = 0;

  void validate() const {
    require(lambda >= 0, ErrorCode::kInvalidConfig, "lambda must be >= 0");
    require(learning_rate > 0, ErrorCode::kInvalidConfig, "learning rate must be > 0");
    require(epochs >= 0 && batch_size >= 0, ErrorCode::kInvalidConfig, "epochs and batch size must be >= 0");
    require(init_scale >= 0 && tolerance >= 0, ErrorCode::kInvalidConfig,
            "init scale and tolerance must be >= 0");
  }
};

template <typename Scalar>
struct PoolTrainResult {
  PoolingMatrix<Scalar> pooling;
  CostBreakdown<Scalar> initial;
  std::vector<CostBreakdown<Scalar>> curve;  // full-dataset cost after each epoch
  Scalar final_learning_rate = 0;
};

/// Entries i.i.d. uniform in (0, scale]; strictly positive because P = 0 is a
/// stationary point of the cost.
template <typename Scalar>
PoolingMatrix<Scalar> init_pooling(Index k, Index m, double scale, std::uint64_t seed) {
  if (scale == 0.0) scale = 0.01 / std::sqrt(static_cast<double>(m));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixX<Scalar> p(k, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < k; ++i) p(i, j) = static_cast<Scalar>(scale * (1.0 - u(rng)));
  return PoolingMatrix<Scalar>(std::move(p));
}

/// Projected gradient descent on lambda * j1 + j2: after every step negative
/// entries are clamped to zero. With halving enabled, an epoch whose
/// full-dataset cost exceeds the previous one is discarded and the rate halved,
/// so the recorded curve never increases.
template <typename Scalar>
PoolTrainResult<Scalar> train_autopool(const FeaturePairs<Scalar>& pairs, Index k, const PoolTrainConfig& cfg) {
  cfg.validate();
  require(pairs.size() >= 1, ErrorCode::kEmptyPairs, "no pairs");
  require(k >= 1, ErrorCode::kInvalidConfig, "need at least one cluster");
  require((pairs.first.array() >= Scalar(0)).all() && (pairs.second.array() >= Scalar(0)).all(),
          ErrorCode::kNegativeInput, "training features must be non-negative");

  const Index n = pairs.size();
  const Scalar lambda = static_cast<Scalar>(cfg.lambda);
  PoolTrainResult<Scalar> out;
  out.pooling = init_pooling<Scalar>(k, pairs.dim(), cfg.init_scale, cfg.seed);
  out.initial = cost(out.pooling, pairs, lambda);
  require(std::isfinite(static_cast<double>(out.initial.total())), ErrorCode::kDivergedLoss,
          "initial cost is not finite");

  const Index batch = (cfg.batch_size == 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  Scalar rate = static_cast<Scalar>(cfg.learning_rate);
  CostBreakdown<Scalar> current = out.initial;
  MatrixX<Scalar> grad;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    MatrixX<Scalar> next = out.pooling.matrix();
    if (batch < n) {
      auto rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(epoch) + 1);
      std::shuffle(order.begin(), order.end(), rng);
    }
    for (Index start = 0; start < n; start += batch) {
      const PoolingMatrix<Scalar> at(next);
      if (batch < n) {
        const std::vector<Index> cols(order.begin() + start, order.begin() + std::min(n, start + batch));
        cost(at, pairs.first(Eigen::all, cols), pairs.second(Eigen::all, cols), lambda, &grad);
      } else {
        cost(at, pairs.first, pairs.second, lambda, &grad);
      }
      next = (next - rate * grad).cwiseMax(Scalar(0));
      if (!next.allFinite()) break;
    }

    const bool finite = next.allFinite();
    if (!finite && !cfg.halve_on_increase)
      throw Error(ErrorCode::kDivergedLoss, "pooling matrix became non-finite at epoch " + std::to_string(epoch));
    CostBreakdown<Scalar> candidate = current;
    if (finite) candidate = cost(PoolingMatrix<Scalar>(next), pairs, lambda);
    const bool ok = finite && std::isfinite(static_cast<double>(candidate.total()));
    if (!cfg.halve_on_increase) {
      require(ok, ErrorCode::kDivergedLoss, "cost became non-finite at epoch " + std::to_string(epoch));
    }

    bool converged = false;
    if (ok && (!cfg.halve_on_increase || candidate.total() <= current.total())) {
      const Scalar drop = current.total() - candidate.total();
      converged = cfg.tolerance > 0 &&
                  drop <= static_cast<Scalar>(cfg.tolerance) * std::max(Scalar(1), std::abs(current.total()));
      out.pooling = PoolingMatrix<Scalar>(std::move(next));
      current = candidate;
    } else {
      rate *= Scalar(0.5);
    }
    out.curve.push_back(current);
    if (converged) break;
  }
  out.final_learning_rate = rate;
  return out;
}

// ---------------------------------------------------------------------------
// Spatial pooling baseline

/// Square grids applied to every feature map, outputs concatenated in list order.
struct SpatialGridSpec {
  std::vector<int> grids;

  Index cells() const {
    Index c = 0;
    for (int g : grids) c += Index(g) * g;
    return c;
  }
  void validate(const ConvLayout& layout) const {
    require(!grids.empty(), ErrorCode::kInvalidConfig, "no grids given");
    for (int g : grids) {
      require(g >= 1, ErrorCode::kInvalidConfig, "grid side must be >= 1");
      require(g <= layout.map_rows() && g <= layout.map_cols(), ErrorCode::kGridLargerThanMap,
              "grid " + std::to_string(g) + " exceeds feature map side");
    }
  }
};

/// Cell `a` of a side-`s` axis split into `g` parts covers [first, second).
inline std::pair<int, int> grid_cell_bounds(int s, int g, int a) {
  return {static_cast<int>(std::int64_t(a) * s / g), static_cast<int>(std::int64_t(a + 1) * s / g)};
}

/// 0/1 matrix that sums each grid cell of each map. Rows are ordered by grid,
/// then map, then cell row, then cell column.
PoolingMatrix<double> spatial_pool_matrix(const ConvLayout& layout, const SpatialGridSpec& spec);

/// Direct evaluation of pool(spatial_pool_matrix(layout, spec), maps).
template <typename Derived>
VectorX<typename Derived::Scalar> spatial_pool(const Eigen::MatrixBase<Derived>& maps, const ConvLayout& layout,
                                               const SpatialGridSpec& spec) {
  using Scalar = typename Derived::Scalar;
  layout.validate();
  spec.validate(layout);
  require(maps.cols() == 1 && maps.rows() == layout.feature_dim(), ErrorCode::kDimensionMismatch,
          "maps vector length differs from layout feature dim");
  VectorX<Scalar> out(layout.n_maps * spec.cells());
  Index row = 0;
  for (int g : spec.grids)
    for (int k = 0; k < layout.n_maps; ++k) {
      const Index base = Index(k) * layout.map_size();
      for (int a = 0; a < g; ++a) {
        const auto [r0, r1] = grid_cell_bounds(layout.map_rows(), g, a);
        for (int b = 0; b < g; ++b) {
          const auto [c0, c1] = grid_cell_bounds(layout.map_cols(), g, b);
          // Ascending flat index, the same order pool() accumulates in.
          Scalar s(0);
          for (int r = r0; r < r1; ++r)
            for (int c = c0; c < c1; ++c) s += maps(base + Index(r) * layout.map_cols() + c);
          out(row++) = s;
        }
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Inspection

/// For each cluster, the features j with P_ij > eps.
std::vector<std::vector<Index>> clusters_above_threshold(const PoolingMatrix<double>& p, double eps);

/// Hard assignment of each feature to its largest-weight cluster (ties to the lowest row).
std::vector<int> feature_assignment(const PoolingMatrix<double>& p);

/// K x n_maps matrix of per-map pooling areas sum_{j in S_k} P_ij.
Eigen::MatrixXd pool_area(const PoolingMatrix<double>& p, const ConvLayout& layout);

/// Per cluster, up to `t` map indices by descending pool area, ties to lower index.
std::vector<std::vector<int>> top_maps_by_pool_area(const PoolingMatrix<double>& p, const ConvLayout& layout,
                                                    int t);

/// APPM files: "APPM", u32 version, u32 K, u32 M, then K*M row-major f64.
void save_pooling(const PoolingMatrix<double>& p, const std::filesystem::path& path);
PoolingMatrix<double> load_pooling(const std::filesystem::path& path);

}  // namespace autopool

#endif  // AUTOPOOL_POOLING_HPP
