#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "floeseg/raster.hpp"

namespace floeseg {

/// Single-channel mask whose samples are exactly 0 or 255.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool value = false);
  BinaryMask(int width, int height, std::vector<std::uint8_t> data);
  /// Validates that every sample of a gray raster is 0 or 255.
  explicit BinaryMask(const Raster& gray);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return data_.size(); }
  const std::vector<std::uint8_t>& data() const { return data_; }
  bool test(std::size_t i) const { return data_[i] != 0; }
  std::size_t count() const;

  Raster to_raster() const { return Raster(width_, height_, 1, data_); }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

enum class ThresholdMode { Binary, BinaryInv, Truncate };
enum class SmoothMode { Median, Box, Min, Max };
enum class BitwiseOp { And, Or, Not };

/// Comparisons are strict: a sample counts as "above" only when g > t.
Raster threshold(const Raster& gray, ThresholdMode mode, int t, int maxval = 255);

/// Otsu level maximizing between-class variance, where class 0 holds samples
/// <= t. Ties go to the smallest t; a constant image returns its own value.
int otsu_level(const Raster& gray);
/// Same rule on a histogram (256 bins).
int otsu_level(const std::vector<std::uint64_t>& histogram);

Raster minmax_normalize(const Raster& gray, int lo, int hi);
/// Normalizes only the pixels inside `region`, using the min/max over the
/// region; other pixels are copied. An empty region returns the input.
Raster minmax_normalize(const Raster& gray, int lo, int hi, const BinaryMask& region);

Raster abs_diff(const Raster& a, const Raster& b);

/// k x k median, rounded box mean, minimum or maximum with edge replication
/// at the borders. Min and Max are grey erosion and dilation.
Raster smooth(const Raster& gray, SmoothMode mode, int k);

BinaryMask bitwise(const BinaryMask& a, const std::optional<BinaryMask>& b, BitwiseOp op);
inline BinaryMask bitwise_and(const BinaryMask& a, const BinaryMask& b) { return bitwise(a, b, BitwiseOp::And); }
inline BinaryMask bitwise_or(const BinaryMask& a, const BinaryMask& b) { return bitwise(a, b, BitwiseOp::Or); }
inline BinaryMask bitwise_not(const BinaryMask& a) { return bitwise(a, std::nullopt, BitwiseOp::Not); }

std::vector<std::uint64_t> histogram(const Raster& gray);

}  // namespace floeseg
