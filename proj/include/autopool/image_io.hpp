#ifndef AUTOPOOL_IMAGE_IO_HPP
#define AUTOPOOL_IMAGE_IO_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace autopool {

/// 8-bit raster, 1 (grey) or 3 (RGB) interleaved channels, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  Raster() = default;
  Raster(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill) {}

  std::uint8_t& at(int row, int col, int ch = 0) {
    return data[(std::size_t(row) * width + col) * channels + ch];
  }
  std::uint8_t at(int row, int col, int ch = 0) const {
    return data[(std::size_t(row) * width + col) * channels + ch];
  }
};

/// Binary P5 for one channel, P6 for three; maxval 255.
void write_pnm(const Raster& image, const std::filesystem::path& path);
Raster read_pnm(const std::filesystem::path& path);

/// Min-max normalised rendering of a channel-last h x w x c weight vector.
Raster weight_tile(std::span<const double> values, int height, int width, int channels);

/// Heatmap of non-negative values: 0 is mid-grey (128), `vmax` is white.
Raster heatmap_tile(std::span<const double> values, int height, int width, double vmax);

Raster upscale(const Raster& tile, int factor);

/// Grid of equally sized cells separated by one-pixel black gutters.
class Montage {
 public:
  Montage(int rows, int cols, int cell_height, int cell_width, int channels);

  /// Copies `tile` into the cell's top-left corner (grey tiles are
  /// replicated across colour channels).
  void place(int row, int col, const Raster& tile);
  const Raster& image() const { return canvas_; }

 private:
  int cell_height_;
  int cell_width_;
  Raster canvas_;
};

}  // namespace autopool

#endif  // AUTOPOOL_IMAGE_IO_HPP
