#include <gtest/gtest.h>

#include "floeseg/colorseg.hpp"
#include "floeseg/error.hpp"
#include "floeseg/synth.hpp"

using namespace floeseg;

TEST(Synth, Validation) {
  EXPECT_NO_THROW(validate(SynthConfig{}));
  auto bad = [](auto mutate) {
    SynthConfig c;
    mutate(c);
    EXPECT_THROW(validate(c), Error);
    EXPECT_THROW(generate(c), Error);
  };
  bad([](SynthConfig& c) { c.size = 4; });
  bad([](SynthConfig& c) { c.n_floes = -1; });
  bad([](SynthConfig& c) { c.floe_v_range = {200, 250}; });
  bad([](SynthConfig& c) { c.thin_ice_v_range = {20, 100}; });
  bad([](SynthConfig& c) { c.water_v_range = {0, 31}; });
  bad([](SynthConfig& c) { c.haze_amplitude = 81; });
  bad([](SynthConfig& c) { c.haze_coverage = 1.5; });
}

TEST(Synth, TruthIsTheAutoLabelOfTheCleanScene) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig c;
    c.seed = seed;
    const auto s = generate(c);
    EXPECT_EQ(autolabel(s.clean, default_profile()), s.truth) << seed;
    const auto hist = s.truth.histogram();
    for (int k = 0; k < kClassCount; ++k) EXPECT_GT(hist[k], 0u) << "class " << k << " seed " << seed;
  }
}

TEST(Synth, Deterministic) {
  SynthConfig c;
  c.seed = 9;
  c.haze_amplitude = 30;
  c.haze_coverage = 0.3;
  const auto a = generate(c), b = generate(c);
  EXPECT_EQ(a.clean, b.clean);
  EXPECT_EQ(a.hazed, b.hazed);
  EXPECT_EQ(a.truth, b.truth);
  c.seed = 10;
  EXPECT_NE(generate(c).clean, a.clean);
}

TEST(Synth, HazeOnlyBrightensCoveredPixels) {
  SynthConfig c;
  c.seed = 3;
  c.haze_amplitude = 40;
  c.haze_coverage = 0.5;
  const auto s = generate(c);
  const double frac = static_cast<double>(s.haze_mask.count()) / static_cast<double>(s.haze_mask.pixel_count());
  EXPECT_NEAR(frac, 0.5, 0.01);
  for (std::size_t i = 0; i < s.clean.pixel_count(); ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      const int before = s.clean.bytes()[3 * i + ch], after = s.hazed.bytes()[3 * i + ch];
      if (s.haze_mask.test(i)) {
        ASSERT_TRUE(after > before || after == 255);
        ASSERT_LE(after - before, 40);
      } else {
        ASSERT_EQ(after, before);
      }
    }
  }
  c.haze_amplitude = 0;
  const auto none = generate(c);
  EXPECT_EQ(none.hazed, none.clean);
  EXPECT_EQ(none.haze_mask.count(), 0u);
  c.haze_amplitude = 20;
  c.haze_coverage = 1.0;
  EXPECT_EQ(generate(c).haze_mask.count(), generate(c).haze_mask.pixel_count());
}

TEST(Synth, SmoothFieldRange) {
  const auto f = smooth_field(64, 5);
  ASSERT_EQ(f.size(), 64u * 64u);
  for (double v : f) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  EXPECT_EQ(f, smooth_field(64, 5));
  // Low frequency: neighbours differ far less than the full range.
  double worst = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 1; x < 64; ++x) worst = std::max(worst, std::abs(f[y * 64 + x] - f[y * 64 + x - 1]));
  EXPECT_LT(worst, 0.2);
}

TEST(Synth, JsonRoundTrip) {
  SynthConfig c;
  c.size = 128;
  c.n_floes = 7;
  c.haze_amplitude = 25;
  c.haze_coverage = 0.25;
  c.seed = 77;
  c.thin_ice_v_range = {50, 150};
  const auto back = synth_from_json(synth_to_json(c));
  EXPECT_EQ(synth_to_json(back), synth_to_json(c));
  EXPECT_EQ(back.thin_ice_v_range, c.thin_ice_v_range);
  EXPECT_EQ(synth_from_json({{"size", 64}}).n_floes, SynthConfig{}.n_floes);
}
