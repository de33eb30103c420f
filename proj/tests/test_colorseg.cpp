#include <gtest/gtest.h>

#include "floeseg/colorseg.hpp"
#include "floeseg/error.hpp"
#include "test_util.hpp"

using namespace floeseg;
using floeseg::testing::TempDir;

namespace {

HsvRaster single(int h, int s, int v) {
  return HsvRaster(1, 1, {static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(s), static_cast<std::uint8_t>(v)});
}

int label_of(const ThresholdProfile& p, int h, int s, int v) { return segment(single(h, s, v), p)[0]; }

}  // namespace

TEST(Profile, DefaultValues) {
  const auto p = default_profile();
  EXPECT_EQ(p.range(IceClass::Thick).lo.v, 205);
  EXPECT_EQ(p.range(IceClass::Thick).hi.v, 255);
  EXPECT_EQ(p.range(IceClass::Thin).lo.v, 31);
  EXPECT_EQ(p.range(IceClass::Thin).hi.v, 204);
  EXPECT_EQ(p.range(IceClass::Water).lo.v, 0);
  EXPECT_EQ(p.range(IceClass::Water).hi.v, 30);
}

TEST(Profile, DefaultPartitionsEveryValue) {
  const auto p = default_profile();
  for (int v = 0; v < 256; ++v)
    for (int h = 0; h <= 180; h += 15)
      for (int s = 0; s <= 255; s += 51) {
        const Hsv px{static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(s), static_cast<std::uint8_t>(v)};
        int matches = 0;
        for (const auto& r : p.classes) matches += r.contains(px) ? 1 : 0;
        ASSERT_EQ(matches, 1) << h << "," << s << "," << v;
      }
  const auto rep = validate_profile(p);
  EXPECT_TRUE(rep.disjoint);
  EXPECT_TRUE(rep.covering);
  EXPECT_TRUE(rep.exact);
}

TEST(Profile, BoundaryValues) {
  const auto p = default_profile();
  EXPECT_EQ(label_of(p, 0, 0, 30), 2);
  EXPECT_EQ(label_of(p, 0, 0, 31), 1);
  EXPECT_EQ(label_of(p, 0, 0, 204), 1);
  EXPECT_EQ(label_of(p, 0, 0, 205), 0);
}

TEST(Profile, ReportsGapsAndOverlaps) {
  auto p = default_profile();
  p.classes[2].hi.v = 20;  // water 0-20 leaves 21-30 uncovered
  auto rep = validate_profile(p);
  EXPECT_FALSE(rep.covering);
  ASSERT_EQ(rep.gaps.size(), 1u);
  EXPECT_EQ(rep.gaps[0], (VGap{21, 30}));

  p = default_profile();
  p.classes[1].lo.v = 25;  // thin reaches into water
  rep = validate_profile(p);
  EXPECT_FALSE(rep.disjoint);
  ASSERT_EQ(rep.overlaps.size(), 1u);
  EXPECT_EQ(rep.overlaps[0], (VGap{25, 30}));
}

TEST(Profile, SampledReportWhenHueRestricted) {
  auto p = default_profile();
  p.classes[0].hi.h = 90;
  const auto rep = validate_profile(p);
  EXPECT_FALSE(rep.exact);
  EXPECT_FALSE(rep.covering);
  ASSERT_FALSE(rep.gaps.empty());
  EXPECT_EQ(rep.gaps.front().lo, 205);
}

TEST(Segment, OverlapPriorityAndNearestFallback) {
  auto p = default_profile();
  p.classes[1].lo.v = 25;
  EXPECT_EQ(label_of(p, 0, 0, 27), 1);  // thin beats water
  p.classes[0].lo.v = 150;
  EXPECT_EQ(label_of(p, 0, 0, 160), 0);  // thick beats thin

  p = default_profile();
  p.classes[2].hi.v = 20;
  p.classes[1].lo.v = 40;
  const auto r = segment_with_stats(HsvRaster(3, 1, {0, 0, 25, 0, 0, 30, 0, 0, 35}), p);
  EXPECT_EQ(r.unmatched, 3u);
  EXPECT_EQ(r.labels[0], 2);  // 5 from water, 15 from thin
  EXPECT_EQ(r.labels[1], 1);  // 10 from each; the tie goes to the lower id
  EXPECT_EQ(r.labels[2], 1);
}

TEST(Segment, AutolabelUsesValue) {
  const Raster rgb(3, 1, 3, std::vector<std::uint8_t>{250, 250, 250, 0, 0, 100, 5, 10, 20});
  const auto l = autolabel(rgb, default_profile());
  EXPECT_EQ(l.ids(), (std::vector<std::uint8_t>{0, 1, 2}));
}

TEST(Labels, RenderParseRoundTrip) {
  std::mt19937_64 rng(5);
  std::vector<std::uint8_t> ids(40 * 30);
  for (auto& i : ids) i = static_cast<std::uint8_t>(rng() % 3);
  const LabelMap l(40, 30, ids);
  const auto img = render_labels(l);
  EXPECT_EQ(img.at(0, 0, 0), kPalette[ids[0]][0]);
  EXPECT_EQ(parse_labels(img), l);
}

TEST(Labels, OffPaletteNamesCoordinate) {
  const Raster img(2, 2, 3, std::vector<std::uint8_t>{255, 0, 0, 0, 255, 0, 0, 0, 255, 9, 9, 9});
  try {
    parse_labels(img);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OffPaletteColor);
    EXPECT_NE(std::string(e.what()).find("(1,1)"), std::string::npos);
  }
  EXPECT_THROW(parse_labels(Raster(2, 2, 1)), Error);
}

TEST(Labels, MapValidation) {
  EXPECT_THROW(LabelMap(2, 1, std::vector<std::uint8_t>{0, 3}), Error);
  EXPECT_THROW(LabelMap(2, 1, std::vector<std::uint8_t>{0}), Error);
  const LabelMap l(3, 2, std::vector<std::uint8_t>{0, 1, 2, 2, 2, 1});
  EXPECT_EQ(l.histogram(), (std::array<std::size_t, 3>{1, 2, 3}));
  EXPECT_EQ(l.crop(1, 1, 2, 1).ids(), (std::vector<std::uint8_t>{2, 1}));
}

TEST(InRange, Inclusive) {
  const HsvRaster hsv(3, 1, {10, 10, 10, 20, 20, 20, 30, 30, 30});
  const auto m = in_range(hsv, {10, 10, 10}, {20, 20, 20});
  EXPECT_EQ(m.data(), (std::vector<std::uint8_t>{255, 255, 0}));
  EXPECT_THROW(in_range(hsv, {21, 0, 0}, {20, 255, 255}), Error);
}

TEST(ProfileJson, RoundTripAndFile) {
  TempDir dir("prof");
  auto p = default_profile();
  p.classes[1].lo = {3, 4, 40};
  EXPECT_EQ(profile_from_json(profile_to_json(p)), p);
  save_profile(p, dir / "p.json");
  EXPECT_EQ(load_profile(dir / "p.json"), p);
}

TEST(ProfileJson, Errors) {
  EXPECT_THROW(profile_from_json(nlohmann::json::array()), Error);
  auto j = profile_to_json(default_profile());
  j["classes"].erase("thin");
  EXPECT_THROW(profile_from_json(j), Error);
  j = profile_to_json(default_profile());
  j["classes"]["water"]["lo"] = {0, 0};
  EXPECT_THROW(profile_from_json(j), Error);
  try {
    load_profile("/nonexistent/p.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FileNotFound);
  }
}

TEST(ProfileBounds, NamesTheField) {
  auto p = default_profile();
  p.classes[2].hi.v = 300;
  try {
    check_profile_bounds(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidProfile);
    EXPECT_NE(std::string(e.what()).find("classes.water.hi.v"), std::string::npos);
  }
  p = default_profile();
  p.classes[0].lo.s = 200;
  p.classes[0].hi.s = 100;
  EXPECT_THROW(check_profile_bounds(p), Error);
  EXPECT_NO_THROW(check_profile_bounds(default_profile()));
}
