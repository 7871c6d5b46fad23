#include "autopool/pooling.hpp"

#include "autopool/binary_io.hpp"

namespace autopool {

namespace {

constexpr char kPoolingMagic[] = "APPM";
constexpr std::uint32_t kVersion = 1;

}  // namespace

PoolingMatrix<double> spatial_pool_matrix(const ConvLayout& layout, const SpatialGridSpec& spec) {
  layout.validate();
  spec.validate(layout);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(layout.n_maps * spec.cells(), layout.feature_dim());
  Index row = 0;
  for (int g : spec.grids)
    for (int k = 0; k < layout.n_maps; ++k)
      for (int a = 0; a < g; ++a) {
        const auto [r0, r1] = grid_cell_bounds(layout.map_rows(), g, a);
        for (int b = 0; b < g; ++b) {
          const auto [c0, c1] = grid_cell_bounds(layout.map_cols(), g, b);
          for (int r = r0; r < r1; ++r)
            for (int c = c0; c < c1; ++c) p(row, layout.flat_index({k, r, c})) = 1.0;
          ++row;
        }
      }
  return PoolingMatrix<double>(std::move(p));
}

std::vector<std::vector<Index>> clusters_above_threshold(const PoolingMatrix<double>& p, double eps) {
  require(eps >= 0, ErrorCode::kBadThreshold, "threshold must be >= 0");
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(p.clusters()));
  for (Index i = 0; i < p.clusters(); ++i)
    for (Index j = 0; j < p.feature_dim(); ++j)
      if (p(i, j) > eps) out[static_cast<std::size_t>(i)].push_back(j);
  return out;
}

std::vector<int> feature_assignment(const PoolingMatrix<double>& p) {
  std::vector<int> out(static_cast<std::size_t>(p.feature_dim()));
  for (Index j = 0; j < p.feature_dim(); ++j) {
    Index best = 0;
    p.matrix().col(j).maxCoeff(&best);
    out[static_cast<std::size_t>(j)] = static_cast<int>(best);
  }
  return out;
}

Eigen::MatrixXd pool_area(const PoolingMatrix<double>& p, const ConvLayout& layout) {
  require(layout.feature_dim() == p.feature_dim(), ErrorCode::kDimensionMismatch,
          "layout feature dim differs from pooling matrix columns");
  Eigen::MatrixXd area(p.clusters(), layout.n_maps);
  for (int k = 0; k < layout.n_maps; ++k)
    area.col(k) = p.matrix().middleCols(Index(k) * layout.map_size(), layout.map_size()).rowwise().sum();
  return area;
}

std::vector<std::vector<int>> top_maps_by_pool_area(const PoolingMatrix<double>& p, const ConvLayout& layout,
                                                    int t) {
  require(t >= 0, ErrorCode::kInvalidConfig, "t must be >= 0");
  const Eigen::MatrixXd area = pool_area(p, layout);
  std::vector<std::vector<int>> out(static_cast<std::size_t>(p.clusters()));
  for (Index i = 0; i < p.clusters(); ++i) {
    std::vector<int> maps(static_cast<std::size_t>(layout.n_maps));
    std::iota(maps.begin(), maps.end(), 0);
    std::stable_sort(maps.begin(), maps.end(), [&](int a, int b) { return area(i, a) > area(i, b); });
    maps.resize(std::min<std::size_t>(maps.size(), static_cast<std::size_t>(t)));
    out[static_cast<std::size_t>(i)] = std::move(maps);
  }
  return out;
}

void save_pooling(const PoolingMatrix<double>& p, const std::filesystem::path& path) {
  io::Writer out;
  out.magic({kPoolingMagic, 4});
  out.put<std::uint32_t>(kVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(p.clusters()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(p.feature_dim()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = p.matrix();
  out.put_array(rm.data(), static_cast<std::size_t>(rm.size()));
  out.write_file(path);
}

PoolingMatrix<double> load_pooling(const std::filesystem::path& path) {
  auto in = io::Reader::from_file(path);
  in.expect_magic({kPoolingMagic, 4});
  const auto version = in.get<std::uint32_t>();
  require(version == kVersion, ErrorCode::kUnsupportedVersion, "APPM version " + std::to_string(version));
  const Index k = in.get<std::uint32_t>();
  const Index m = in.get<std::uint32_t>();
  require(k >= 1 && m >= 1, ErrorCode::kModelParse, "APPM header has a zero dimension");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(k, m);
  in.get_array(rm.data(), static_cast<std::size_t>(rm.size()));
  in.expect_end();
  return PoolingMatrix<double>(Eigen::MatrixXd(rm));
}

}  // namespace autopool
