#include "autopool/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "autopool/binary_io.hpp"
#include "autopool/error.hpp"

namespace autopool {

void write_pnm(const Raster& image, const std::filesystem::path& path) {
  require(image.channels == 1 || image.channels == 3, ErrorCode::kInvalidConfig, "PNM needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIoFailure, "cannot open " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
  require(static_cast<bool>(out), ErrorCode::kIoFailure, "write failed for " + path.string());
}

Raster read_pnm(const std::filesystem::path& path) {
  const auto bytes = io::read_file_bytes(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  const std::string magic = token();
  require(magic == "P5" || magic == "P6", ErrorCode::kBadMagic, "not a binary PGM/PPM: " + magic);
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  const int maxval = std::stoi(token());
  require(maxval == 255, ErrorCode::kUnsupportedVersion, "only maxval 255 is supported");
  ++pos;  // single whitespace before the raster
  Raster img(w, h, magic == "P5" ? 1 : 3);
  require(bytes.size() - pos == img.data.size(), ErrorCode::kTruncatedFile, "raster size mismatch");
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), img.data.begin());
  return img;
}

Raster weight_tile(std::span<const double> values, int height, int width, int channels) {
  require(values.size() == std::size_t(height) * width * channels, ErrorCode::kDimensionMismatch,
          "tile size mismatch");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  Raster out(width, height, channels);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = range > 0 ? (values[i] - *lo) / range : 0.5;
    out.data[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return out;
}

Raster heatmap_tile(std::span<const double> values, int height, int width, double vmax) {
  require(values.size() == std::size_t(height) * width, ErrorCode::kDimensionMismatch, "heatmap size mismatch");
  Raster out(width, height, 1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = vmax > 0 ? std::clamp(values[i] / vmax, 0.0, 1.0) : 0.0;
    out.data[i] = static_cast<std::uint8_t>(128 + std::lround(127.0 * v));
  }
  return out;
}

Raster upscale(const Raster& tile, int factor) {
  require(factor >= 1, ErrorCode::kInvalidConfig, "upscale factor must be >= 1");
  Raster out(tile.width * factor, tile.height * factor, tile.channels);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c)
      for (int ch = 0; ch < tile.channels; ++ch) out.at(r, c, ch) = tile.at(r / factor, c / factor, ch);
  return out;
}

Montage::Montage(int rows, int cols, int cell_height, int cell_width, int channels)
    : cell_height_(cell_height),
      cell_width_(cell_width),
      canvas_(std::max(1, cols * (cell_width + 1) + 1), std::max(1, rows * (cell_height + 1) + 1), channels) {}

void Montage::place(int row, int col, const Raster& tile) {
  const int top = 1 + row * (cell_height_ + 1);
  const int left = 1 + col * (cell_width_ + 1);
  for (int r = 0; r < std::min(tile.height, cell_height_); ++r)
    for (int c = 0; c < std::min(tile.width, cell_width_); ++c)
      for (int ch = 0; ch < canvas_.channels; ++ch)
        canvas_.at(top + r, left + c, ch) = tile.at(r, c, tile.channels == 1 ? 0 : ch);
}

}  // namespace autopool
