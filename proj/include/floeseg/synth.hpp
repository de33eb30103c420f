#pragma once

#include <cstdint>

#include "json.hpp"

#include "floeseg/colorseg.hpp"
#include "floeseg/imgproc.hpp"
#include "floeseg/raster.hpp"

namespace floeseg {

struct VRange {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const VRange&, const VRange&) = default;
};

/// Brightness ranges must sit inside the default profile's class intervals
/// (thick 205-255, thin 31-204, water 0-30) so the generating class is also
/// the auto-label of every clean pixel.
struct SynthConfig {
  int size = 256;
  int n_floes = 30;
  int n_sheets = 4;
  VRange floe_v_range{215, 250};
  VRange thin_ice_v_range{60, 170};
  VRange water_v_range{4, 20};
  int haze_amplitude = 0;
  double haze_coverage = 0.0;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

struct SynthScene {
  Raster clean;
  Raster hazed;
  LabelMap truth;
  /// Pixels receiving any haze.
  BinaryMask haze_mask;
};

/// Water background, blobby thin-ice sheets and bright floes, near-gray with
/// a slight blue cast (B carries V). The hazed copy adds a smooth
/// low-frequency brightness field of the configured amplitude to the
/// covered fraction of pixels, clamped at 255.
SynthScene generate(const SynthConfig& cfg);

/// Smooth random field in [0, 1] (sum of wide Gaussian bumps), row-major.
std::vector<double> smooth_field(int size, std::uint64_t seed);

nlohmann::json synth_to_json(const SynthConfig& cfg);
SynthConfig synth_from_json(const nlohmann::json& j);

}  // namespace floeseg
