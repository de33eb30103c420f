#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace floeseg {

/// Row-major 8-bit image with 1 (gray/mask) or 3 (RGB) interleaved channels.
class Raster {
 public:
  using PlaneMap = Eigen::Map<const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Raster() = default;
  Raster(int width, int height, int channels, std::uint8_t fill = 0);
  Raster(int width, int height, int channels, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_); }

  std::span<const std::uint8_t> data() const { return data_; }
  const std::vector<std::uint8_t>& bytes() const { return data_; }

  std::uint8_t at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  /// Single-channel raster as a [height, width] matrix.
  PlaneMap plane() const;

  /// Copy of the sub-rectangle [x0, x0+w) x [y0, y0+h).
  Raster crop(int x0, int y0, int w, int h) const;

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

/// HSV triples on the 8-bit half-angle scale: H in [0,180], S and V in [0,255].
class HsvRaster {
 public:
  HsvRaster() = default;
  HsvRaster(int width, int height, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_); }
  std::span<const std::uint8_t> data() const { return data_; }

  std::uint8_t h(std::size_t i) const { return data_[3 * i]; }
  std::uint8_t s(std::size_t i) const { return data_[3 * i + 1]; }
  std::uint8_t v(std::size_t i) const { return data_[3 * i + 2]; }

  /// The V channel as a gray raster.
  Raster value_channel() const;

  friend bool operator==(const HsvRaster&, const HsvRaster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

struct Hsv {
  std::uint8_t h = 0;
  std::uint8_t s = 0;
  std::uint8_t v = 0;
  friend bool operator==(const Hsv&, const Hsv&) = default;
};

/// Exact integer conversion of one pixel (round half up on the rational value).
Hsv rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);
HsvRaster rgb_to_hsv(const Raster& rgb);

/// Reads an 8-bit gray or RGB PNG. Palettes and sub-byte gray are expanded;
/// alpha is dropped.
Raster load_png(const std::filesystem::path& path);
void save_png(const Raster& raster, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Raster& raster);
Raster decode_png(std::span<const std::uint8_t> bytes);

/// Luma 0.299R + 0.587G + 0.114B (gray rasters pass through), as doubles.
Eigen::ArrayXd luma(const Raster& raster);

/// Integer box-average downscale by `factor` (remainder rows/cols dropped).
Raster downscale(const Raster& raster, int factor);

}  // namespace floeseg
