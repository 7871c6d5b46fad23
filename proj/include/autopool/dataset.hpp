#ifndef AUTOPOOL_DATASET_HPP
#define AUTOPOOL_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace autopool {

/// Non-owning view of one channel-last, row-major image.
struct ImageView {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::span<const float> pixels;

  float at(int row, int col, int ch = 0) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  std::size_t size() const { return pixels.size(); }
};

struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c), pixels(std::size_t(h) * w * c, 0.f) {}

  ImageView view() const { return {height, width, channels, pixels}; }
  float& at(int row, int col, int ch = 0) {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
};

/// Pairs of temporally adjacent frames. Storage is pair-interleaved: frame t
/// of pair i, then frame t+1 of pair i, each channel-last row-major.
class PatchPairSet {
 public:
  PatchPairSet(int n_pairs, int height, int width, int channels, std::vector<float> data);

  int n_pairs() const { return n_pairs_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t frame_size() const { return std::size_t(height_) * width_ * channels_; }

  ImageView first(int pair) const { return frame(pair, 0); }
  ImageView second(int pair) const { return frame(pair, 1); }
  const std::vector<float>& data() const { return data_; }

  friend bool operator==(const PatchPairSet&, const PatchPairSet&) = default;

 private:
  ImageView frame(int pair, int which) const;

  int n_pairs_;
  int height_;
  int width_;
  int channels_;
  std::vector<float> data_;
};

class LabeledImageSet {
 public:
  LabeledImageSet(int height, int width, int channels, int n_classes, std::vector<float> pixels,
                  std::vector<int> labels);

  int size() const { return static_cast<int>(labels_.size()); }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  int n_classes() const { return n_classes_; }
  std::size_t image_size() const { return std::size_t(height_) * width_ * channels_; }

  ImageView image(int i) const;
  int label(int i) const { return labels_[i]; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<float>& pixels() const { return pixels_; }

  friend bool operator==(const LabeledImageSet&, const LabeledImageSet&) = default;

 private:
  int height_;
  int width_;
  int channels_;
  int n_classes_;
  std::vector<float> pixels_;
  std::vector<int> labels_;
};

// ---------------------------------------------------------------------------
// APPD pair files

PatchPairSet load_pairs(const std::filesystem::path& path);
void save_pairs(const PatchPairSet& set, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic pairs

enum class PatternKind { kBar, kBlob };
enum class TransformKind { kTranslate, kRotate, kBoth };

struct SynthConfig {
  int n_pairs = 400;
  int size = 16;
  int channels = 1;
  PatternKind pattern = PatternKind::kBar;
  TransformKind transform = TransformKind::kTranslate;
  double shift_px = 2.0;    // translation length per frame step
  double rotate_deg = 0.0;  // rotation per frame step
  int n_groups = 2;
  double noise_stddev = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Displacement applied to produce the second frame of a pair.
struct Motion {
  double dx = 0;
  double dy = 0;
  double angle_deg = 0;
};

struct SyntheticPairs {
  PatchPairSet pairs;
  std::vector<int> groups;  // prototype group of each pair
  std::vector<Motion> motions;
};

/// Pair i's second frame is its first frame moved by motions[i] (before noise).
/// Per-pair randomness is derived from (seed, i) only.
SyntheticPairs generate_synthetic(const SynthConfig& cfg);

/// Anti-aliased full-length bar, two pixels thick, through a size x size frame.
/// `theta` is the bar direction (0 = horizontal); `offset` its signed distance
/// from the frame centre along the normal.
std::vector<float> render_bar(int size, double theta, double offset);

/// Moves an image by `motion` (rotation about the centre, then translation)
/// with bilinear sampling. Pixels sampled from outside the source are 0.
Image transform_image(const ImageView& src, const Motion& motion);

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches

inline constexpr int kCifarSide = 32;
inline constexpr int kCifarClasses = 10;
inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * 32 * 32;

enum class CifarSplit { kTrain, kTest };

LabeledImageSet load_cifar10_batch(const std::filesystem::path& file);
/// kTrain reads data_batch_1.bin .. data_batch_5.bin, kTest reads test_batch.bin.
LabeledImageSet load_cifar10(const std::filesystem::path& dir, CifarSplit split = CifarSplit::kTrain);
/// Writes a 32x32x3 set in the CIFAR-10 record layout.
void save_cifar10_batch(const LabeledImageSet& set, const std::filesystem::path& file);

/// Exactly k images per class, chosen by a seeded shuffle; output is grouped by
/// class in ascending label order.
LabeledImageSet subsample_per_class(const LabeledImageSet& set, int k, std::uint64_t seed);

}  // namespace autopool

#endif  // AUTOPOOL_DATASET_HPP
