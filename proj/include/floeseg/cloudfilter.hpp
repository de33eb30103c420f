#pragma once

#include "json.hpp"

#include "floeseg/imgproc.hpp"
#include "floeseg/raster.hpp"

namespace floeseg {

struct CloudFilterParams {
  int noise_kernel = 5;
  int background_kernel = 65;
  /// Brightness offset a background level must exceed before it counts as
  /// haze or shadow. Also the highest level a clear-sky reference may take.
  int mask_margin = 20;
  /// 0 leaves the input untouched, 1 applies the full correction.
  double blend = 1.0;

  friend bool operator==(const CloudFilterParams&, const CloudFilterParams&) = default;
};

/// Throws BadConfig: kernels must be odd and >= 1, margin in 0..128, blend in [0, 1].
void validate(const CloudFilterParams& p);
nlohmann::json cloud_params_to_json(const CloudFilterParams& p);
CloudFilterParams cloud_params_from_json(const nlohmann::json& j, CloudFilterParams base = {});

/// Intermediate planes of the filter, exposed for inspection and tests.
struct CloudFilterTrace {
  Raster denoised;         // median of V
  Raster detect_floor;     // box(min(denoised)) at the wider detection window
  Raster correct_floor;    // box(min(denoised)) at background_kernel
  int reference = 0;       // clear-sky floor level
  BinaryMask core;         // |detect_floor - reference| > margin
  BinaryMask mask;         // core grown back by the detection window
};

/// Kernel of the wider local-minimum window used for detection.
int detection_kernel(const CloudFilterParams& p);
/// Side of the square the detected core is grown by. Equal to the detection
/// window, so the growth undoes the erosion that detection applied.
int growth_kernel(const CloudFilterParams& p);

CloudFilterTrace trace_cloud_filter(const Raster& rgb, const CloudFilterParams& p = {});

/// Detected cloud/shadow mask. Throws WrongChannelCount for non-RGB input.
BinaryMask cloud_shadow_mask(const Raster& rgb, const CloudFilterParams& p = {});

/// Flat-field style correction: inside the mask the local dark floor is pulled
/// back to the clear-sky reference and R, G, B are scaled by the same ratio,
/// so hue and saturation survive. Pixels outside the mask are copied.
Raster filter_thin_clouds_shadows(const Raster& rgb, const CloudFilterParams& p = {});

/// Share of pixels inside cloud_shadow_mask, in [0, 1].
double cloud_shadow_fraction(const Raster& rgb, const CloudFilterParams& p = {});

}  // namespace floeseg
