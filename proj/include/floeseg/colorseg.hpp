#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "floeseg/imgproc.hpp"
#include "floeseg/raster.hpp"

namespace floeseg {

/// Class ids are fixed globally: they index confusion-matrix axes and one-hot
/// channels.
enum class IceClass : std::uint8_t { Thick = 0, Thin = 1, Water = 2 };
inline constexpr int kClassCount = 3;
inline constexpr std::array<const char*, kClassCount> kClassNames{"thick", "thin", "water"};

/// Label palette: thick red, thin blue, water green.
inline constexpr std::array<std::array<std::uint8_t, 3>, kClassCount> kPalette{{{255, 0, 0}, {0, 0, 255}, {0, 255, 0}}};

/// HSV bound triple; H may reach 185 so that an upper bound of 185 means
/// "every hue".
struct HsvBound {
  int h = 0;
  int s = 0;
  int v = 0;
  friend bool operator==(const HsvBound&, const HsvBound&) = default;
};

struct ClassRange {
  HsvBound lo;
  HsvBound hi;
  bool contains(const Hsv& p) const {
    return p.h >= lo.h && p.h <= hi.h && p.s >= lo.s && p.s <= hi.s && p.v >= lo.v && p.v <= hi.v;
  }
  friend bool operator==(const ClassRange&, const ClassRange&) = default;
};

struct ThresholdProfile {
  std::string name;
  std::string season;
  std::string region;
  std::array<ClassRange, kClassCount> classes;

  const ClassRange& range(IceClass c) const { return classes[static_cast<int>(c)]; }

  friend bool operator==(const ThresholdProfile&, const ThresholdProfile&) = default;
};

/// Ross Sea summer ranges: thick V 205-255, thin V 31-204, water V 0-30,
/// with H and S unrestricted.
ThresholdProfile default_profile();

/// Per-pixel class ids in {0,1,2}.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int width, int height, IceClass fill = IceClass::Thick);
  LabelMap(int width, int height, std::vector<std::uint8_t> ids);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return ids_.size(); }
  const std::vector<std::uint8_t>& ids() const { return ids_; }
  std::uint8_t operator[](std::size_t i) const { return ids_[i]; }
  std::array<std::size_t, kClassCount> histogram() const;
  LabelMap crop(int x0, int y0, int w, int h) const;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> ids_;
};

/// 255 where lo <= (H,S,V) <= hi componentwise, inclusive.
BinaryMask in_range(const HsvRaster& hsv, const HsvBound& lo, const HsvBound& hi);

struct SegmentResult {
  LabelMap labels;
  /// Pixels that matched no class and were assigned by nearest V distance.
  std::size_t unmatched = 0;
};

/// Overlaps resolve thick > thin > water; pixels matching nothing take the
/// class whose V interval is nearest (ties to the lower id).
SegmentResult segment_with_stats(const HsvRaster& hsv, const ThresholdProfile& profile);
LabelMap segment(const HsvRaster& hsv, const ThresholdProfile& profile);

/// rgb_to_hsv followed by segment.
LabelMap autolabel(const Raster& rgb, const ThresholdProfile& profile);

Raster render_labels(const LabelMap& labels);
/// Inverse of render_labels; any off-palette pixel is an error naming its coordinate.
LabelMap parse_labels(const Raster& rgb);

struct VGap {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const VGap&, const VGap&) = default;
};

struct ProfileReport {
  bool disjoint = true;
  bool covering = true;
  /// Uncovered V intervals (exact mode) or uncovered V values found by
  /// sampling, merged into intervals.
  std::vector<VGap> gaps;
  /// V intervals matched by more than one class.
  std::vector<VGap> overlaps;
  bool exact = true;
};

ProfileReport validate_profile(const ThresholdProfile& profile);

/// Throws InvalidProfile naming the offending field if lo > hi anywhere or a
/// bound lies outside its channel range.
void check_profile_bounds(const ThresholdProfile& profile);

nlohmann::json profile_to_json(const ThresholdProfile& profile);
ThresholdProfile profile_from_json(const nlohmann::json& j);
ThresholdProfile load_profile(const std::filesystem::path& path);
void save_profile(const ThresholdProfile& profile, const std::filesystem::path& path);

}  // namespace floeseg
