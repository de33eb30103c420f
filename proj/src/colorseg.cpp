#include "floeseg/colorseg.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "floeseg/error.hpp"

namespace floeseg {

namespace {

constexpr int kHueAxisMax = 180;
constexpr int kHueBoundMax = 185;

bool full_hs(const ClassRange& r) {
  return r.lo.h <= 0 && r.hi.h >= kHueAxisMax && r.lo.s <= 0 && r.hi.s >= 255;
}

int v_distance(const ClassRange& r, int v) {
  if (v < r.lo.v) return r.lo.v - v;
  if (v > r.hi.v) return v - r.hi.v;
  return 0;
}

std::vector<VGap> merge_values(const std::vector<bool>& flags) {
  std::vector<VGap> out;
  for (int v = 0; v < static_cast<int>(flags.size()); ++v) {
    if (!flags[v]) continue;
    if (!out.empty() && out.back().hi == v - 1) {
      out.back().hi = v;
    } else {
      out.push_back({v, v});
    }
  }
  return out;
}

nlohmann::json bound_to_json(const HsvBound& b) { return nlohmann::json::array({b.h, b.s, b.v}); }

HsvBound bound_from_json(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ParseError, field + " must be an [h,s,v] array");
  for (const auto& e : j) {
    if (!e.is_number_integer()) throw Error(ErrorCode::ParseError, field + " entries must be integers");
  }
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

}  // namespace

ThresholdProfile default_profile() {
  ThresholdProfile p;
  p.name = "ross-sea-summer";
  p.season = "summer";
  p.region = "Ross Sea, Antarctica";
  p.classes[0] = {{0, 0, 205}, {185, 255, 255}};
  p.classes[1] = {{0, 0, 31}, {185, 255, 204}};
  p.classes[2] = {{0, 0, 0}, {185, 255, 30}};
  return p;
}

LabelMap::LabelMap(int width, int height, IceClass fill)
    : width_(width), height_(height),
      ids_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), static_cast<std::uint8_t>(fill)) {
  if (width < 1 || height < 1) throw Error(ErrorCode::BadDimensions, "label map must be at least 1x1");
}

LabelMap::LabelMap(int width, int height, std::vector<std::uint8_t> ids)
    : width_(width), height_(height), ids_(std::move(ids)) {
  if (width < 1 || height < 1) throw Error(ErrorCode::BadDimensions, "label map must be at least 1x1");
  if (ids_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::DimensionMismatch, "label data length != width*height");
  }
  for (auto id : ids_) {
    if (id >= kClassCount) throw Error(ErrorCode::BadRange, "class id outside {0,1,2}");
  }
}

std::array<std::size_t, kClassCount> LabelMap::histogram() const {
  std::array<std::size_t, kClassCount> h{};
  for (auto id : ids_) ++h[id];
  return h;
}

LabelMap LabelMap::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > width_ || y0 + h > height_) {
    throw Error(ErrorCode::BadDimensions, "crop rectangle outside label map");
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    std::copy_n(ids_.data() + static_cast<std::size_t>(y0 + y) * width_ + x0, w, out.data() + static_cast<std::size_t>(y) * w);
  }
  return LabelMap(w, h, std::move(out));
}

BinaryMask in_range(const HsvRaster& hsv, const HsvBound& lo, const HsvBound& hi) {
  if (lo.h > hi.h || lo.s > hi.s || lo.v > hi.v) throw Error(ErrorCode::BadRange, "in_range needs lo <= hi componentwise");
  const ClassRange range{lo, hi};
  std::vector<std::uint8_t> out(hsv.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = range.contains({hsv.h(i), hsv.s(i), hsv.v(i)}) ? 255 : 0;
  return BinaryMask(hsv.width(), hsv.height(), std::move(out));
}

void check_profile_bounds(const ThresholdProfile& p) {
  for (int c = 0; c < kClassCount; ++c) {
    const auto& r = p.classes[c];
    const std::string base = std::string("classes.") + kClassNames[c];
    const std::array<std::pair<const char*, std::pair<int, int>>, 3> axes{
        {{"h", {r.lo.h, r.hi.h}}, {"s", {r.lo.s, r.hi.s}}, {"v", {r.lo.v, r.hi.v}}}};
    for (const auto& [axis, bounds] : axes) {
      const int limit = axis[0] == 'h' ? kHueBoundMax : 255;
      if (bounds.first < 0 || bounds.first > limit) {
        throw Error(ErrorCode::InvalidProfile, base + ".lo." + axis + " outside 0.." + std::to_string(limit));
      }
      if (bounds.second < 0 || bounds.second > limit) {
        throw Error(ErrorCode::InvalidProfile, base + ".hi." + axis + " outside 0.." + std::to_string(limit));
      }
      if (bounds.first > bounds.second) {
        throw Error(ErrorCode::InvalidProfile, base + ".lo." + axis + " > " + base + ".hi." + axis);
      }
    }
  }
}

SegmentResult segment_with_stats(const HsvRaster& hsv, const ThresholdProfile& profile) {
  check_profile_bounds(profile);
  std::vector<std::uint8_t> ids(hsv.pixel_count());
  std::size_t unmatched = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Hsv p{hsv.h(i), hsv.s(i), hsv.v(i)};
    int label = -1;
    for (int c = 0; c < kClassCount && label < 0; ++c) {
      if (profile.classes[c].contains(p)) label = c;
    }
    if (label < 0) {
      ++unmatched;
      int best = std::numeric_limits<int>::max();
      for (int c = 0; c < kClassCount; ++c) {
        const int d = v_distance(profile.classes[c], p.v);
        if (d < best) {
          best = d;
          label = c;
        }
      }
    }
    ids[i] = static_cast<std::uint8_t>(label);
  }
  return {LabelMap(hsv.width(), hsv.height(), std::move(ids)), unmatched};
}

LabelMap segment(const HsvRaster& hsv, const ThresholdProfile& profile) {
  return segment_with_stats(hsv, profile).labels;
}

LabelMap autolabel(const Raster& rgb, const ThresholdProfile& profile) { return segment(rgb_to_hsv(rgb), profile); }

Raster render_labels(const LabelMap& labels) {
  std::vector<std::uint8_t> out(labels.pixel_count() * 3);
  for (std::size_t i = 0; i < labels.pixel_count(); ++i) {
    const auto& color = kPalette[labels[i]];
    std::copy(color.begin(), color.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return Raster(labels.width(), labels.height(), 3, std::move(out));
}

LabelMap parse_labels(const Raster& rgb) {
  if (rgb.channels() != 3) throw Error(ErrorCode::WrongChannelCount, "label images must be RGB");
  std::vector<std::uint8_t> ids(rgb.pixel_count());
  const auto d = rgb.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    int match = -1;
    for (int c = 0; c < kClassCount; ++c) {
      if (d[3 * i] == kPalette[c][0] && d[3 * i + 1] == kPalette[c][1] && d[3 * i + 2] == kPalette[c][2]) match = c;
    }
    if (match < 0) {
      const auto x = i % static_cast<std::size_t>(rgb.width());
      const auto y = i / static_cast<std::size_t>(rgb.width());
      throw Error(ErrorCode::OffPaletteColor, "pixel (" + std::to_string(x) + "," + std::to_string(y) + ") = (" +
                                                  std::to_string(d[3 * i]) + "," + std::to_string(d[3 * i + 1]) + "," +
                                                  std::to_string(d[3 * i + 2]) + ") is not a label color");
    }
    ids[i] = static_cast<std::uint8_t>(match);
  }
  return LabelMap(rgb.width(), rgb.height(), std::move(ids));
}

ProfileReport validate_profile(const ThresholdProfile& profile) {
  for (const auto& r : profile.classes) {
    if (r.lo.h > r.hi.h || r.lo.s > r.hi.s || r.lo.v > r.hi.v) {
      throw Error(ErrorCode::BadRange, "profile class has lo > hi");
    }
  }
  ProfileReport report;
  report.exact = std::all_of(profile.classes.begin(), profile.classes.end(), full_hs);

  std::vector<bool> uncovered(256, false);
  std::vector<bool> shared(256, false);
  if (report.exact) {
    // H and S are unrestricted, so membership depends on V alone.
    for (int v = 0; v < 256; ++v) {
      int matches = 0;
      for (const auto& r : profile.classes) matches += (v >= r.lo.v && v <= r.hi.v) ? 1 : 0;
      uncovered[v] = matches == 0;
      shared[v] = matches > 1;
    }
  } else {
    // 181 x 16 x 256 lattice over H, S, V.
    for (int h = 0; h <= kHueAxisMax; ++h) {
      for (int si = 0; si < 16; ++si) {
        const int s = si * 17;
        for (int v = 0; v < 256; ++v) {
          const Hsv p{static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(s), static_cast<std::uint8_t>(v)};
          int matches = 0;
          for (const auto& r : profile.classes) matches += r.contains(p) ? 1 : 0;
          if (matches == 0) uncovered[v] = true;
          if (matches > 1) shared[v] = true;
        }
      }
    }
  }
  report.gaps = merge_values(uncovered);
  report.overlaps = merge_values(shared);
  report.covering = report.gaps.empty();
  report.disjoint = report.overlaps.empty();
  return report;
}

nlohmann::json profile_to_json(const ThresholdProfile& p) {
  nlohmann::json j;
  j["name"] = p.name;
  j["season"] = p.season;
  j["region"] = p.region;
  for (int c = 0; c < kClassCount; ++c) {
    j["classes"][kClassNames[c]] = {{"lo", bound_to_json(p.classes[c].lo)}, {"hi", bound_to_json(p.classes[c].hi)}};
  }
  return j;
}

ThresholdProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "profile must be a JSON object");
  ThresholdProfile p;
  auto text = [&](const char* key) -> std::string {
    if (!j.contains(key)) return {};
    if (!j[key].is_string()) throw Error(ErrorCode::ParseError, std::string(key) + " must be a string");
    return j[key].get<std::string>();
  };
  p.name = text("name");
  p.season = text("season");
  p.region = text("region");
  if (!j.contains("classes") || !j["classes"].is_object()) throw Error(ErrorCode::ParseError, "missing classes object");
  for (int c = 0; c < kClassCount; ++c) {
    const std::string field = std::string("classes.") + kClassNames[c];
    if (!j["classes"].contains(kClassNames[c])) throw Error(ErrorCode::ParseError, "missing " + field);
    const auto& cls = j["classes"][kClassNames[c]];
    if (!cls.is_object() || !cls.contains("lo") || !cls.contains("hi")) {
      throw Error(ErrorCode::ParseError, field + " needs lo and hi");
    }
    p.classes[c] = {bound_from_json(cls["lo"], field + ".lo"), bound_from_json(cls["hi"], field + ".hi")};
  }
  return p;
}

ThresholdProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return profile_from_json(j);
}

void save_profile(const ThresholdProfile& profile, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << profile_to_json(profile).dump(2) << "\n";
}

}  // namespace floeseg
