#include "floeseg/cloudfilter.hpp"

#include <algorithm>
#include <cmath>

#include "floeseg/error.hpp"

namespace floeseg {

namespace {

// Floors this far above the clear reference are thick cloud or bright
// surface. Thin haze over water cannot lift the floor that high without
// saturating, so such regions are neither flagged nor corrected.
constexpr int kThinCloudCeiling = 100;

void require_rgb(const Raster& r) {
  if (r.channels() != 3) throw Error(ErrorCode::WrongChannelCount, "cloud filter needs an RGB raster");
}

// Local dark floor: grey erosion followed by a box mean. Haze lifts the floor
// of a whole region while ice only lifts it where a window holds no water.
Raster dark_floor(const Raster& g, int min_kernel, int box_kernel) {
  return smooth(smooth(g, SmoothMode::Min, min_kernel), SmoothMode::Box, box_kernel);
}

// Rounded mean of the Otsu class at or below the level, capped at the margin:
// a clear-sky dark floor never sits above it.
int clear_reference(const Raster& floor, int margin) {
  const auto hist = histogram(floor);
  const int t = otsu_level(hist);
  std::uint64_t n = 0, sum = 0;
  for (int v = 0; v <= t; ++v) {
    n += hist[v];
    sum += hist[v] * static_cast<std::uint64_t>(v);
  }
  const auto mean = static_cast<int>((2 * sum + n) / (2 * n));
  return std::min(mean, margin);
}

}  // namespace

void validate(const CloudFilterParams& p) {
  auto odd = [](int k) { return k >= 1 && k % 2 == 1; };
  if (!odd(p.noise_kernel)) throw Error(ErrorCode::BadConfig, "noise_kernel must be odd and >= 1");
  if (!odd(p.background_kernel)) throw Error(ErrorCode::BadConfig, "background_kernel must be odd and >= 1");
  if (p.mask_margin < 0 || p.mask_margin > 128) throw Error(ErrorCode::BadConfig, "mask_margin must be in 0..128");
  if (!(p.blend >= 0.0 && p.blend <= 1.0)) throw Error(ErrorCode::BadConfig, "blend must be in [0, 1]");
}

nlohmann::json cloud_params_to_json(const CloudFilterParams& p) {
  return {{"noise_kernel", p.noise_kernel},
          {"background_kernel", p.background_kernel},
          {"mask_margin", p.mask_margin},
          {"blend", p.blend}};
}

CloudFilterParams cloud_params_from_json(const nlohmann::json& j, CloudFilterParams base) {
  try {
    base.noise_kernel = j.value("noise_kernel", base.noise_kernel);
    base.background_kernel = j.value("background_kernel", base.background_kernel);
    base.mask_margin = j.value("mask_margin", base.mask_margin);
    base.blend = j.value("blend", base.blend);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("cloud filter params: ") + e.what());
  }
  validate(base);
  return base;
}

int detection_kernel(const CloudFilterParams& p) { return p.background_kernel + 2 * (p.background_kernel / 4); }

int growth_kernel(const CloudFilterParams& p) { return detection_kernel(p); }

CloudFilterTrace trace_cloud_filter(const Raster& rgb, const CloudFilterParams& p) {
  require_rgb(rgb);
  validate(p);
  CloudFilterTrace t;
  t.denoised = smooth(rgb_to_hsv(rgb).value_channel(), SmoothMode::Median, p.noise_kernel);
  t.detect_floor = dark_floor(t.denoised, detection_kernel(p), p.background_kernel);
  t.correct_floor = dark_floor(t.denoised, p.background_kernel, p.background_kernel);
  t.reference = clear_reference(t.detect_floor, p.mask_margin);

  const Raster ref(rgb.width(), rgb.height(), 1, static_cast<std::uint8_t>(t.reference));
  Raster core = threshold(abs_diff(t.detect_floor, ref), ThresholdMode::Binary, p.mask_margin);
  std::vector<std::uint8_t> band = core.bytes();
  const auto f = t.detect_floor.data();
  for (std::size_t i = 0; i < band.size(); ++i) {
    if (f[i] - t.reference > kThinCloudCeiling) band[i] = 0;
  }
  t.core = BinaryMask(Raster(rgb.width(), rgb.height(), 1, std::move(band)));
  t.mask = t.core.count() == 0 ? t.core
                               : BinaryMask(smooth(t.core.to_raster(), SmoothMode::Max, growth_kernel(p)));
  return t;
}

BinaryMask cloud_shadow_mask(const Raster& rgb, const CloudFilterParams& p) { return trace_cloud_filter(rgb, p).mask; }

Raster filter_thin_clouds_shadows(const Raster& rgb, const CloudFilterParams& p) {
  const auto t = trace_cloud_filter(rgb, p);
  if (t.mask.count() == 0) return rgb;

  // corrected = g - lift, truncated to [0, 255]; lift never brightens.
  // Bright surface caught by the grown mask keeps its level.
  std::vector<std::uint8_t> out = rgb.bytes();
  const auto g = t.denoised.data();
  const auto f = t.correct_floor.data();
  for (std::size_t i = 0; i < rgb.pixel_count(); ++i) {
    if (!t.mask.test(i) || g[i] == 0) continue;
    int lift = std::max(0, static_cast<int>(f[i]) - t.reference);
    if (lift > kThinCloudCeiling) lift = 0;
    const double ratio = static_cast<double>(std::clamp(static_cast<int>(g[i]) - lift, 0, 255)) / g[i];
    for (int c = 0; c < 3; ++c) {
      const double src = out[3 * i + c];
      const double scaled = std::min(255.0, std::floor(src * ratio + 0.5));
      out[3 * i + c] = static_cast<std::uint8_t>(std::floor(src + p.blend * (scaled - src) + 0.5));
    }
  }
  return Raster(rgb.width(), rgb.height(), 3, std::move(out));
}

double cloud_shadow_fraction(const Raster& rgb, const CloudFilterParams& p) {
  const auto mask = cloud_shadow_mask(rgb, p);
  return mask.pixel_count() == 0 ? 0.0 : static_cast<double>(mask.count()) / static_cast<double>(mask.pixel_count());
}

}  // namespace floeseg
