#include "autopool/features.hpp"

#include <numbers>
#include <string>

#include "autopool/binary_io.hpp"

namespace autopool {

namespace {

constexpr char kSaeMagic[] = "APSE";
constexpr char kFeaturePairsMagic[] = "APFP";
constexpr std::uint32_t kVersion = 1;

// Eigen is column-major; the files are row-major.
void put_row_major(io::Writer& out, const Eigen::MatrixXd& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  out.put_array(rm.data(), static_cast<std::size_t>(rm.size()));
}

Eigen::MatrixXd get_row_major(io::Reader& in, Index rows, Index cols) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  in.get_array(rm.data(), static_cast<std::size_t>(rm.size()));
  return rm;
}

}  // namespace

void save_sae(const SparseAutoencoder<double>& sae, const std::filesystem::path& path) {
  io::Writer out;
  out.magic({kSaeMagic, 4});
  out.put<std::uint32_t>(kVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(sae.input_dim()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(sae.hidden_dim()));
  put_row_major(out, sae.w_enc);
  out.put_array(sae.b_enc.data(), static_cast<std::size_t>(sae.b_enc.size()));
  put_row_major(out, sae.w_dec);
  out.put_array(sae.b_dec.data(), static_cast<std::size_t>(sae.b_dec.size()));
  out.write_file(path);
}

SparseAutoencoder<double> load_sae(const std::filesystem::path& path) {
  auto in = io::Reader::from_file(path);
  in.expect_magic({kSaeMagic, 4});
  const auto version = in.get<std::uint32_t>();
  require(version == kVersion, ErrorCode::kUnsupportedVersion, "APSE version " + std::to_string(version));
  const Index d = in.get<std::uint32_t>();
  const Index m = in.get<std::uint32_t>();
  require(d >= 1 && m >= 1, ErrorCode::kModelParse, "APSE header has a zero dimension");
  auto sae = SparseAutoencoder<double>::zeros(d, m);
  sae.w_enc = get_row_major(in, m, d);
  in.get_array(sae.b_enc.data(), static_cast<std::size_t>(m));
  sae.w_dec = get_row_major(in, d, m);
  in.get_array(sae.b_dec.data(), static_cast<std::size_t>(d));
  in.expect_end();
  return sae;
}

// ---------------------------------------------------------------------------

ConvLayout conv_layout_for(const SparseAutoencoder<double>& sae, int image_height, int image_width,
                           int channels) {
  require(channels >= 1 && sae.input_dim() % channels == 0, ErrorCode::kDimensionMismatch,
          "autoencoder input is not a whole number of channels");
  const Index area = sae.input_dim() / channels;
  const int patch = static_cast<int>(std::lround(std::sqrt(static_cast<double>(area))));
  require(Index(patch) * patch == area, ErrorCode::kDimensionMismatch,
          "autoencoder input is not a square patch");
  ConvLayout layout{image_height, image_width, channels, patch, static_cast<int>(sae.hidden_dim())};
  layout.validate();
  return layout;
}

Eigen::VectorXd extract_patch(const ImageView& image, int row, int col, int patch) {
  Eigen::VectorXd out(Index(patch) * patch * image.channels);
  Index k = 0;
  for (int r = 0; r < patch; ++r)
    for (int c = 0; c < patch; ++c)
      for (int ch = 0; ch < image.channels; ++ch) out(k++) = image.at(row + r, col + c, ch);
  return out;
}

Eigen::VectorXd conv_extract(const SparseAutoencoder<double>& sae, const ImageView& image,
                             const ConvLayout& layout) {
  layout.validate();
  require(sae.input_dim() == layout.patch_dim(), ErrorCode::kDimensionMismatch,
          "autoencoder input dim differs from patch^2 * channels");
  require(sae.hidden_dim() == layout.n_maps, ErrorCode::kDimensionMismatch,
          "layout map count differs from autoencoder hidden dim");
  require(image.height == layout.image_height && image.width == layout.image_width &&
              image.channels == layout.channels,
          ErrorCode::kDimensionMismatch, "image shape differs from layout");

  Eigen::MatrixXd cols(layout.patch_dim(), layout.map_size());
  for (int r = 0; r < layout.map_rows(); ++r)
    for (int c = 0; c < layout.map_cols(); ++c)
      cols.col(Index(r) * layout.map_cols() + c) = extract_patch(image, r, c, layout.patch);

  // Row k of the activations is feature map k; a row-major copy puts each
  // map's block contiguously.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> maps =
      encode_batch(sae, cols);
  return Eigen::Map<const Eigen::VectorXd>(maps.data(), maps.size());
}

Eigen::MatrixXd sample_patches(const std::vector<ImageView>& images, int patch, int count,
                               std::uint64_t seed) {
  require(!images.empty(), ErrorCode::kEmptyInput, "no images to sample from");
  require(count >= 1, ErrorCode::kInvalidConfig, "patch count must be >= 1");
  const auto& first = images.front();
  require(patch >= 1 && patch <= first.height && patch <= first.width, ErrorCode::kInvalidConfig,
          "patch size does not fit the images");
  Eigen::MatrixXd out(Index(patch) * patch * first.channels, count);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_image(0, images.size() - 1);
  for (int i = 0; i < count; ++i) {
    const auto& img = images[pick_image(rng)];
    std::uniform_int_distribution<int> pick_row(0, img.height - patch);
    std::uniform_int_distribution<int> pick_col(0, img.width - patch);
    const int r = pick_row(rng);
    const int c = pick_col(rng);
    out.col(i) = extract_patch(img, r, c, patch);
  }
  return out;
}

// ---------------------------------------------------------------------------

OrientedLineBank::OrientedLineBank(int size, int n_orientations)
    : size_(size), n_orientations_(n_orientations) {
  require(size >= 8, ErrorCode::kInvalidConfig, "line bank needs frames of at least 8x8");
  require(n_orientations >= 1, ErrorCode::kInvalidConfig, "need at least one orientation");
  constexpr int kSurround = 3;
  const int reach = size / 2 - 3;
  const int per_group = 2 * reach + 1;
  templates_.resize(Index(n_orientations) * per_group, Index(size) * size);
  Index row = 0;
  for (int g = 0; g < n_orientations; ++g) {
    const double theta = g * std::numbers::pi / n_orientations;
    for (int off = -reach; off <= reach; ++off) {
      const auto centre = render_bar(size, theta, off);
      const auto before = render_bar(size, theta, off - kSurround);
      const auto after = render_bar(size, theta, off + kSurround);
      for (Index p = 0; p < templates_.cols(); ++p)
        templates_(row, p) = double(centre[p]) - 0.5 * (double(before[p]) + double(after[p]));
      templates_.row(row).normalize();
      groups_.push_back(g);
      ++row;
    }
  }
}

Eigen::VectorXd OrientedLineBank::operator()(const ImageView& image) const {
  require(image.height == size_ && image.width == size_, ErrorCode::kDimensionMismatch,
          "frame size differs from the line bank");
  Eigen::VectorXd grey(Index(size_) * size_);
  for (int r = 0; r < size_; ++r)
    for (int c = 0; c < size_; ++c) {
      double s = 0;
      for (int ch = 0; ch < image.channels; ++ch) s += image.at(r, c, ch);
      grey(Index(r) * size_ + c) = s / image.channels;
    }
  return (templates_ * grey).cwiseMax(0.0);
}

FeaturePairs<double> extract_pairs(const PatchPairSet& pairs, const FeatureFunction& f) {
  const auto n = static_cast<std::size_t>(pairs.n_pairs());
  std::vector<Eigen::VectorXd> a(n), b(n);
  parallel_for(n, [&](std::size_t i) {
    a[i] = f(pairs.first(static_cast<int>(i)));
    b[i] = f(pairs.second(static_cast<int>(i)));
  });
  const Index m = a.front().size();
  FeaturePairs<double> out{Eigen::MatrixXd(m, Index(n)), Eigen::MatrixXd(m, Index(n))};
  for (std::size_t i = 0; i < n; ++i) {
    require(a[i].size() == m && b[i].size() == m, ErrorCode::kDimensionMismatch,
            "feature function returned vectors of varying length");
    out.first.col(Index(i)) = a[i];
    out.second.col(Index(i)) = b[i];
  }
  return out;
}

void save_feature_pairs(const FeaturePairs<double>& pairs, const std::filesystem::path& path) {
  io::Writer out;
  out.magic({kFeaturePairsMagic, 4});
  out.put<std::uint32_t>(kVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(pairs.size()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(pairs.dim()));
  for (Index i = 0; i < pairs.size(); ++i) {
    out.put_array(pairs.first.col(i).data(), static_cast<std::size_t>(pairs.dim()));
    out.put_array(pairs.second.col(i).data(), static_cast<std::size_t>(pairs.dim()));
  }
  out.write_file(path);
}

FeaturePairs<double> load_feature_pairs(const std::filesystem::path& path) {
  auto in = io::Reader::from_file(path);
  in.expect_magic({kFeaturePairsMagic, 4});
  const auto version = in.get<std::uint32_t>();
  require(version == kVersion, ErrorCode::kUnsupportedVersion, "APFP version " + std::to_string(version));
  const Index n = in.get<std::uint32_t>();
  const Index m = in.get<std::uint32_t>();
  require(n >= 1 && m >= 1, ErrorCode::kModelParse, "APFP header has a zero dimension");
  FeaturePairs<double> out{Eigen::MatrixXd(m, n), Eigen::MatrixXd(m, n)};
  for (Index i = 0; i < n; ++i) {
    in.get_array(out.first.col(i).data(), static_cast<std::size_t>(m));
    in.get_array(out.second.col(i).data(), static_cast<std::size_t>(m));
  }
  in.expect_end();
  return out;
}

}  // namespace autopool
