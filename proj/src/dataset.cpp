#include "autopool/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "autopool/binary_io.hpp"
#include "autopool/error.hpp"
#include "autopool/parallel.hpp"

namespace autopool {

namespace {

constexpr char kPairsMagic[] = "APPD";
constexpr std::uint32_t kPairsVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

bool in_unit_range(float v) { return v >= 0.f && v <= 1.f; }

}  // namespace

PatchPairSet::PatchPairSet(int n_pairs, int height, int width, int channels, std::vector<float> data)
    : n_pairs_(n_pairs), height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  require(n_pairs >= 1, ErrorCode::kInvalidConfig, "a pair set needs at least one pair");
  require(height >= 1 && width >= 1 && channels >= 1, ErrorCode::kInvalidConfig,
          "frame dimensions must be positive");
  require(data_.size() == std::size_t(n_pairs) * 2 * frame_size(), ErrorCode::kDimensionMismatch,
          "pixel buffer does not match N x 2 x H x W x C");
  for (std::size_t i = 0; i < data_.size(); ++i)
    require(in_unit_range(data_[i]), ErrorCode::kValueOutOfRange,
            "pixel " + std::to_string(i) + " outside [0,1]");
}

ImageView PatchPairSet::frame(int pair, int which) const {
  const std::size_t fs = frame_size();
  return {height_, width_, channels_,
          std::span<const float>(data_).subspan((std::size_t(pair) * 2 + which) * fs, fs)};
}

LabeledImageSet::LabeledImageSet(int height, int width, int channels, int n_classes,
                                 std::vector<float> pixels, std::vector<int> labels)
    : height_(height),
      width_(width),
      channels_(channels),
      n_classes_(n_classes),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)) {
  require(n_classes >= 1, ErrorCode::kInvalidConfig, "n_classes must be positive");
  require(pixels_.size() == labels_.size() * image_size(), ErrorCode::kDimensionMismatch,
          "pixel buffer does not match label count");
  for (int l : labels_)
    require(l >= 0 && l < n_classes, ErrorCode::kLabelOutOfRange,
            "label " + std::to_string(l) + " outside [0," + std::to_string(n_classes) + ")");
  for (float v : pixels_) require(in_unit_range(v), ErrorCode::kValueOutOfRange, "pixel outside [0,1]");
}

ImageView LabeledImageSet::image(int i) const {
  const std::size_t is = image_size();
  return {height_, width_, channels_, std::span<const float>(pixels_).subspan(std::size_t(i) * is, is)};
}

// ---------------------------------------------------------------------------

PatchPairSet load_pairs(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorCode::kIoFailure, "no such file " + path.string());
  auto in = io::Reader::from_file(path);
  in.expect_magic({kPairsMagic, 4});
  const auto version = in.get<std::uint32_t>();
  require(version == kPairsVersion, ErrorCode::kUnsupportedVersion,
          "APPD version " + std::to_string(version));
  const auto n = in.get<std::uint32_t>();
  const auto h = in.get<std::uint16_t>();
  const auto w = in.get<std::uint16_t>();
  const auto c = in.get<std::uint8_t>();
  const auto dtype = in.get<std::uint8_t>();
  require(dtype == kDtypeF32, ErrorCode::kUnsupportedVersion,
          "APPD dtype " + std::to_string(dtype) + " (only 0 = f32 is defined)");
  require(n >= 1 && h >= 1 && w >= 1 && c >= 1, ErrorCode::kValueOutOfRange,
          "APPD header has a zero dimension");
  const std::size_t count = std::size_t(n) * 2 * h * w * c;
  if (in.remaining() < count * sizeof(float))
    throw Error(ErrorCode::kTruncatedFile, "APPD payload shorter than header implies");
  std::vector<float> data(count);
  in.get_array(data.data(), count);
  in.expect_end();
  return PatchPairSet(static_cast<int>(n), h, w, c, std::move(data));
}

void save_pairs(const PatchPairSet& set, const std::filesystem::path& path) {
  require(set.height() <= 0xffff && set.width() <= 0xffff && set.channels() <= 0xff,
          ErrorCode::kValueOutOfRange, "frame dimensions exceed APPD header fields");
  io::Writer out;
  out.magic({kPairsMagic, 4});
  out.put<std::uint32_t>(kPairsVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(set.n_pairs()));
  out.put<std::uint16_t>(static_cast<std::uint16_t>(set.height()));
  out.put<std::uint16_t>(static_cast<std::uint16_t>(set.width()));
  out.put<std::uint8_t>(static_cast<std::uint8_t>(set.channels()));
  out.put<std::uint8_t>(kDtypeF32);
  out.put_array(set.data().data(), set.data().size());
  out.write_file(path);
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  require(n_pairs >= 1, ErrorCode::kInvalidConfig, "n_pairs must be >= 1");
  require(size >= 4, ErrorCode::kInvalidConfig, "frame size must be >= 4");
  require(channels == 1 || channels == 3, ErrorCode::kInvalidConfig, "channels must be 1 or 3");
  require(shift_px >= 0 && rotate_deg >= 0, ErrorCode::kInvalidConfig,
          "transformation magnitude must be >= 0");
  require(n_groups >= 1, ErrorCode::kInvalidConfig, "n_groups must be >= 1");
  require(noise_stddev >= 0, ErrorCode::kInvalidConfig, "noise stddev must be >= 0");
}

std::vector<float> render_bar(int size, double theta, double offset) {
  constexpr double kHalfWidth = 1.0;
  const double c = (size - 1) / 2.0;
  const double nx = -std::sin(theta), ny = std::cos(theta);
  std::vector<float> out(std::size_t(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double d = (x - c) * nx + (y - c) * ny - offset;
      out[std::size_t(y) * size + x] =
          static_cast<float>(std::clamp(kHalfWidth + 0.5 - std::abs(d), 0.0, 1.0));
    }
  return out;
}

namespace {

std::vector<float> render_blob(int size, double theta, double cx, double cy) {
  const double major = size / 6.0, minor = size / 16.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  std::vector<float> out(std::size_t(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = (x - cx) * ct + (y - cy) * st;
      const double v = -(x - cx) * st + (y - cy) * ct;
      out[std::size_t(y) * size + x] =
          static_cast<float>(std::exp(-0.5 * (u * u / (major * major) + v * v / (minor * minor))));
    }
  return out;
}

float sample_or_zero(const ImageView& src, int row, int col, int ch) {
  if (row < 0 || col < 0 || row >= src.height || col >= src.width) return 0.f;
  return src.at(row, col, ch);
}

}  // namespace

Image transform_image(const ImageView& src, const Motion& motion) {
  Image out(src.height, src.width, src.channels);
  const double cx = (src.width - 1) / 2.0, cy = (src.height - 1) / 2.0;
  const double rad = motion.angle_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      double sx = x - motion.dx, sy = y - motion.dy;
      if (motion.angle_deg != 0.0) {
        const double rx = sx - cx, ry = sy - cy;
        sx = cx + ca * rx + sa * ry;
        sy = cy - sa * rx + ca * ry;
      }
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const double fx = sx - fx0, fy = sy - fy0;
      const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
      for (int ch = 0; ch < src.channels; ++ch) {
        double v = (1 - fx) * (1 - fy) * sample_or_zero(src, y0, x0, ch);
        if (fx != 0) v += fx * (1 - fy) * sample_or_zero(src, y0, x0 + 1, ch);
        if (fy != 0) v += (1 - fx) * fy * sample_or_zero(src, y0 + 1, x0, ch);
        if (fx != 0 && fy != 0) v += fx * fy * sample_or_zero(src, y0 + 1, x0 + 1, ch);
        out.at(y, x, ch) = static_cast<float>(v);
      }
    }
  return out;
}

SyntheticPairs generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const int s = cfg.size;
  const std::size_t fs = std::size_t(s) * s * cfg.channels;
  std::vector<float> data(std::size_t(cfg.n_pairs) * 2 * fs);
  std::vector<int> groups(cfg.n_pairs);
  std::vector<Motion> motions(cfg.n_pairs);

  parallel_for(static_cast<std::size_t>(cfg.n_pairs), [&](std::size_t i) {
    auto rng = stream_rng(cfg.seed, i);
    std::uniform_int_distribution<int> pick_group(0, cfg.n_groups - 1);
    std::uniform_int_distribution<int> pick_dir(0, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int group = pick_group(rng);
    const double theta = group * std::numbers::pi / cfg.n_groups;
    std::vector<float> gray;
    if (cfg.pattern == PatternKind::kBar) {
      const double reach = s / 2.0 - 3.0;
      gray = render_bar(s, theta, (2 * unit(rng) - 1) * reach);
    } else {
      const double cx = s / 4.0 + unit(rng) * s / 2.0;
      const double cy = s / 4.0 + unit(rng) * s / 2.0;
      gray = render_blob(s, theta, cx, cy);
    }

    Motion m;
    if (cfg.transform != TransformKind::kRotate) {
      static constexpr int kDirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      const int d = pick_dir(rng);
      m.dx = kDirs[d][0] * cfg.shift_px;
      m.dy = kDirs[d][1] * cfg.shift_px;
    }
    if (cfg.transform != TransformKind::kTranslate)
      m.angle_deg = (unit(rng) < 0.5 ? -1.0 : 1.0) * cfg.rotate_deg;

    Image first(s, s, cfg.channels);
    double color[3] = {1.0, 1.0, 1.0};
    if (cfg.channels == 3)
      for (double& c : color) c = 0.4 + 0.6 * unit(rng);
    for (int p = 0; p < s * s; ++p)
      for (int ch = 0; ch < cfg.channels; ++ch)
        first.pixels[std::size_t(p) * cfg.channels + ch] = static_cast<float>(gray[p] * color[ch]);
    Image second = transform_image(first.view(), m);

    float* dst = data.data() + i * 2 * fs;
    for (const Image* frame : {&first, &second}) {
      for (std::size_t k = 0; k < fs; ++k) {
        double v = frame->pixels[k];
        if (cfg.noise_stddev > 0) v += cfg.noise_stddev * gauss(rng);
        dst[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      dst += fs;
    }
    groups[i] = group;
    motions[i] = m;
  });

  return {PatchPairSet(cfg.n_pairs, s, s, cfg.channels, std::move(data)), std::move(groups),
          std::move(motions)};
}

// ---------------------------------------------------------------------------

LabeledImageSet load_cifar10_batch(const std::filesystem::path& file) {
  require(std::filesystem::exists(file), ErrorCode::kMissingFiles, "missing " + file.string());
  const auto bytes = io::read_file_bytes(file);
  require(!bytes.empty() && bytes.size() % kCifarRecordBytes == 0, ErrorCode::kRecordSizeMismatch,
          file.string() + " is " + std::to_string(bytes.size()) + " bytes, not a multiple of 3073");
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  constexpr int kPlane = kCifarSide * kCifarSide;
  std::vector<float> pixels(n * 3 * kPlane);
  std::vector<int> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
    require(rec[0] < kCifarClasses, ErrorCode::kLabelOutOfRange,
            "record " + std::to_string(r) + " has label " + std::to_string(rec[0]));
    labels[r] = rec[0];
    float* dst = pixels.data() + r * 3 * kPlane;
    for (int p = 0; p < kPlane; ++p)
      for (int ch = 0; ch < 3; ++ch) dst[p * 3 + ch] = rec[1 + ch * kPlane + p] / 255.0f;
  }
  return LabeledImageSet(kCifarSide, kCifarSide, 3, kCifarClasses, std::move(pixels), std::move(labels));
}

LabeledImageSet load_cifar10(const std::filesystem::path& dir, CifarSplit split) {
  std::vector<std::filesystem::path> files;
  if (split == CifarSplit::kTrain) {
    for (int b = 1; b <= 5; ++b) files.push_back(dir / ("data_batch_" + std::to_string(b) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  for (const auto& f : files)
    require(std::filesystem::exists(f), ErrorCode::kMissingFiles, "missing " + f.string());
  std::vector<float> pixels;
  std::vector<int> labels;
  for (const auto& f : files) {
    auto batch = load_cifar10_batch(f);
    pixels.insert(pixels.end(), batch.pixels().begin(), batch.pixels().end());
    labels.insert(labels.end(), batch.labels().begin(), batch.labels().end());
  }
  return LabeledImageSet(kCifarSide, kCifarSide, 3, kCifarClasses, std::move(pixels), std::move(labels));
}

void save_cifar10_batch(const LabeledImageSet& set, const std::filesystem::path& file) {
  require(set.height() == kCifarSide && set.width() == kCifarSide && set.channels() == 3,
          ErrorCode::kDimensionMismatch, "CIFAR-10 records are 32x32x3");
  constexpr int kPlane = kCifarSide * kCifarSide;
  io::Writer out;
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (int i = 0; i < set.size(); ++i) {
    require(set.label(i) < 256, ErrorCode::kLabelOutOfRange, "label does not fit in a byte");
    rec[0] = static_cast<unsigned char>(set.label(i));
    const auto img = set.image(i);
    for (int p = 0; p < kPlane; ++p)
      for (int ch = 0; ch < 3; ++ch)
        rec[1 + ch * kPlane + p] = static_cast<unsigned char>(std::lround(img.pixels[p * 3 + ch] * 255.0f));
    out.put_array(rec.data(), rec.size());
  }
  out.write_file(file);
}

LabeledImageSet subsample_per_class(const LabeledImageSet& set, int k, std::uint64_t seed) {
  require(k >= 1, ErrorCode::kInvalidConfig, "k must be >= 1");
  std::vector<std::vector<int>> by_class(set.n_classes());
  for (int i = 0; i < set.size(); ++i) by_class[set.label(i)].push_back(i);
  for (int c = 0; c < set.n_classes(); ++c)
    require(static_cast<int>(by_class[c].size()) >= k, ErrorCode::kInsufficientClassCount,
            "class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                " examples, need " + std::to_string(k));

  const std::size_t is = set.image_size();
  std::vector<float> pixels;
  pixels.reserve(std::size_t(k) * set.n_classes() * is);
  std::vector<int> labels;
  for (int c = 0; c < set.n_classes(); ++c) {
    auto rng = stream_rng(seed, static_cast<std::uint64_t>(c));
    auto& idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int j = 0; j < k; ++j) {
      const auto img = set.image(idx[j]);
      pixels.insert(pixels.end(), img.pixels.begin(), img.pixels.end());
      labels.push_back(c);
    }
  }
  return LabeledImageSet(set.height(), set.width(), set.channels(), set.n_classes(), std::move(pixels),
                         std::move(labels));
}

}  // namespace autopool
