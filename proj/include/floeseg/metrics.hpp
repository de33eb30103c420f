#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "floeseg/colorseg.hpp"
#include "floeseg/raster.hpp"

namespace floeseg {

double pixel_accuracy(const LabelMap& pred, const LabelMap& truth);

using CountMatrix = Eigen::Matrix<std::uint64_t, kClassCount, kClassCount>;

struct ConfusionMatrix {
  /// counts(a, b): pixels predicted a whose truth is b.
  CountMatrix counts = CountMatrix::Zero();
  /// Each column divided by its truth total; empty columns stay zero.
  Eigen::Matrix3d normalized = Eigen::Matrix3d::Zero();
  std::array<bool, kClassCount> empty_column{};

  std::uint64_t total() const { return counts.sum(); }
  std::uint64_t correct() const { return counts.trace(); }
  double accuracy() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& truth);
/// Recomputes `normalized` and `empty_column` from `counts`.
void normalize(ConfusionMatrix& m);

enum class SsimWindow { Block8, Gaussian11 };

struct SsimParams {
  SsimWindow window = SsimWindow::Block8;
  double c1 = (0.01 * 255) * (0.01 * 255);
  double c2 = (0.03 * 255) * (0.03 * 255);
  double sigma = 1.5;
};

/// Mean SSIM over windows. Block8 tiles the image with non-overlapping 8x8
/// blocks (partial edge blocks dropped); Gaussian11 slides an 11x11
/// Gaussian window over every fully inside position. Images smaller than one
/// window are scored as a single window. RGB inputs are compared on luma.
double ssim(const Raster& a, const Raster& b, const SsimParams& p = {});

/// Fractions above this are "cloudy"; equal counts as clear.
inline constexpr double kCloudyCutoff = 0.10;

struct StratumReport {
  std::size_t tiles = 0;
  ConfusionMatrix confusion;
};

struct EvalReport {
  StratumReport overall;
  StratumReport cloudy;
  StratumReport clear;
  double ssim_mean = 0.0;
  std::vector<std::string> tile_ids;
};

struct TileEval {
  std::string id;
  LabelMap pred;
  LabelMap truth;
  double cloud_fraction = 0.0;
};

EvalReport evaluate_tiles(const std::vector<TileEval>& tiles, const SsimParams& p = {});

/// Pairs label PNGs by file name across the two directories; the tile id is
/// the file stem without a trailing "_label". Throws
/// MissingPair when a name exists on one side only. Tiles missing from
/// `cloud_fractions` count as clear.
EvalReport evaluate_run(const std::filesystem::path& pred_dir, const std::filesystem::path& truth_dir,
                        const std::map<std::string, double>& cloud_fractions, const SsimParams& p = {});

nlohmann::json report_to_json(const EvalReport& r);

}  // namespace floeseg
