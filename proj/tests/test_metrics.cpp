#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "floeseg/error.hpp"
#include "floeseg/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace floeseg;
using floeseg::testing::random_raster;
using floeseg::testing::TempDir;

namespace {

LabelMap random_labels(int w, int h, std::mt19937_64& rng) {
  std::vector<std::uint8_t> ids(static_cast<std::size_t>(w) * h);
  for (auto& v : ids) v = static_cast<std::uint8_t>(rng() % 3);
  return LabelMap(w, h, ids);
}

Raster shifted(const Raster& r, int by) {
  std::vector<std::uint8_t> d(r.bytes());
  for (auto& v : d) v = static_cast<std::uint8_t>(v + by);
  return Raster(r.width(), r.height(), r.channels(), d);
}

}  // namespace

TEST(Accuracy, Examples) {
  const LabelMap truth(2, 2, std::vector<std::uint8_t>{0, 0, 2, 2});
  EXPECT_EQ(pixel_accuracy(truth, truth), 1.0);
  EXPECT_EQ(pixel_accuracy(LabelMap(2, 2, IceClass::Thick), truth), 0.5);
  EXPECT_EQ(pixel_accuracy(LabelMap(2, 2, std::vector<std::uint8_t>{0, 0, 2, 1}), truth), 0.75);
  try {
    pixel_accuracy(LabelMap(2, 1), truth);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Confusion, PerfectIsIdentity) {
  std::mt19937_64 rng(1);
  const auto l = random_labels(20, 20, rng);
  const auto m = confusion(l, l);
  EXPECT_EQ(m.normalized, Eigen::Matrix3d::Identity());
  EXPECT_EQ(m.accuracy(), 1.0);
}

TEST(Confusion, AllThickPredictedThin) {
  const LabelMap truth(3, 1, std::vector<std::uint8_t>{0, 0, 2});
  const LabelMap pred(3, 1, std::vector<std::uint8_t>{1, 1, 2});
  const auto m = confusion(pred, truth);
  EXPECT_EQ(m.normalized(1, 0), 1.0);
  EXPECT_EQ(m.normalized(0, 0), 0.0);
  EXPECT_TRUE(m.empty_column[1]);
  EXPECT_FALSE(m.empty_column[0]);
  EXPECT_EQ(m.normalized.col(1).sum(), 0.0);
}

TEST(Confusion, MatchesTallyAndAccuracy) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_labels(10, 10, rng), t = random_labels(10, 10, rng);
    const auto m = confusion(p, t);
    const auto o = oracle::confusion_counts(p, t);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) ASSERT_EQ(m.counts(a, b), o[a][b]);
    EXPECT_EQ(m.accuracy(), pixel_accuracy(p, t));
    for (int b = 0; b < 3; ++b) {
      if (!m.empty_column[b]) {
        EXPECT_NEAR(m.normalized.col(b).sum(), 1.0, 1e-9);
      }
    }
  }
}

TEST(Confusion, AccumulationRenormalizes) {
  const LabelMap a(1, 1, std::vector<std::uint8_t>{0}), b(1, 1, std::vector<std::uint8_t>{1});
  auto m = confusion(a, a);
  m += confusion(b, a);
  EXPECT_EQ(m.counts(0, 0), 1u);
  EXPECT_EQ(m.counts(1, 0), 1u);
  EXPECT_DOUBLE_EQ(m.normalized(0, 0), 0.5);
}

TEST(Ssim, IdentityIsExactlyOne) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto a = random_raster(33, 21, i % 2 ? 3 : 1, rng);
    EXPECT_EQ(ssim(a, a), 1.0);
    EXPECT_EQ(ssim(a, a, {SsimWindow::Gaussian11}), 1.0);
  }
}

TEST(Ssim, ConstantImages) {
  const Raster a(16, 16, 1, 0), b(16, 16, 1, 255);
  const SsimParams p;
  const double expected = p.c1 * p.c2 / ((255.0 * 255.0 + p.c1) * p.c2);
  EXPECT_NEAR(ssim(a, b), expected, 1e-15);
  EXPECT_NEAR(expected, 1e-4, 1e-5);
}

TEST(Ssim, MatchesDirectFormula) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const int ch = i % 2 ? 3 : 1;
    const int w = i < 90 ? 32 : 5 + i % 7, h = i < 90 ? 32 : 3 + i % 5;
    const auto a = random_raster(w, h, ch, rng), b = random_raster(w, h, ch, rng);
    ASSERT_NEAR(ssim(a, b), oracle::ssim_block8(a, b), 1e-9) << i;
  }
}

TEST(Ssim, SymmetricAndShiftStable) {
  std::mt19937_64 rng(5);
  const auto a = random_raster(64, 64, 1, rng, 40, 200);
  std::vector<std::uint8_t> noisy(a.bytes());
  for (auto& v : noisy) v = static_cast<std::uint8_t>(std::clamp<int>(v + static_cast<int>(rng() % 21) - 10, 0, 255));
  const Raster b(64, 64, 1, noisy);
  for (auto win : {SsimWindow::Block8, SsimWindow::Gaussian11}) {
    const SsimParams p{win};
    EXPECT_EQ(ssim(a, b, p), ssim(b, a, p));
    EXPECT_LE(std::abs(ssim(shifted(a, 30), shifted(b, 30), p) - ssim(a, b, p)), 1e-3);
    EXPECT_LT(ssim(a, b, p), 1.0);
  }
}

TEST(Ssim, Errors) {
  EXPECT_THROW(ssim(Raster(8, 8, 1), Raster(8, 9, 1)), Error);
  SsimParams p;
  p.c1 = 0;
  EXPECT_THROW(ssim(Raster(8, 8, 1), Raster(8, 8, 1), p), Error);
}

TEST(Evaluate, StrataAndCutoff) {
  const LabelMap t(2, 2, std::vector<std::uint8_t>{0, 1, 2, 2});
  const LabelMap half(2, 2, std::vector<std::uint8_t>{0, 1, 0, 0});
  const auto r = evaluate_tiles({{"a", t, t, 0.10}, {"b", half, t, 0.1000001}, {"c", t, t, 0.0}});
  EXPECT_EQ(r.overall.tiles, 3u);
  EXPECT_EQ(r.clear.tiles, 2u);
  EXPECT_EQ(r.cloudy.tiles, 1u);
  EXPECT_EQ(r.clear.confusion.accuracy(), 1.0);
  EXPECT_EQ(r.cloudy.confusion.accuracy(), 0.5);
  EXPECT_DOUBLE_EQ(r.overall.confusion.accuracy(), 10.0 / 12.0);
  EXPECT_EQ(r.tile_ids, (std::vector<std::string>{"a", "b", "c"}));

  const auto j = report_to_json(r);
  EXPECT_EQ(j["overall"]["pixels"], 12);
  EXPECT_EQ(j["strata"]["cloudy"]["tiles"], 1);
  EXPECT_EQ(j["strata"]["cutoff"], 0.10);
  EXPECT_TRUE(j.contains("ssim_mean"));
  EXPECT_EQ(j["strata"]["cloudy"]["empty_truth_classes"].size(), 0u);
  const auto empty = report_to_json(evaluate_tiles({{"a", t, t, 0.0}}));
  EXPECT_TRUE(empty["strata"]["cloudy"]["accuracy"].is_null());
}

TEST(Evaluate, RunPairsFilesByName) {
  TempDir pred("pred"), truth("truth");
  const LabelMap t(8, 8, IceClass::Water);
  std::vector<std::uint8_t> ids(64, 2);
  for (int i = 0; i < 16; ++i) ids[i] = 0;
  const LabelMap p(8, 8, ids);
  save_png(render_labels(p), pred / "x_r0_c0_label.png");
  save_png(render_labels(t), truth / "x_r0_c0_label.png");
  save_png(render_labels(t), pred / "x_r0_c1_label.png");
  save_png(render_labels(t), truth / "x_r0_c1_label.png");

  const auto r = evaluate_run(pred.path(), truth.path(), {{"x_r0_c0", 0.5}});
  EXPECT_EQ(r.tile_ids, (std::vector<std::string>{"x_r0_c0", "x_r0_c1"}));
  EXPECT_EQ(r.cloudy.tiles, 1u);
  EXPECT_DOUBLE_EQ(r.cloudy.confusion.accuracy(), 48.0 / 64.0);
  EXPECT_DOUBLE_EQ(r.overall.confusion.accuracy(), 112.0 / 128.0);
  EXPECT_EQ(r.clear.confusion.accuracy(), 1.0);

  save_png(render_labels(t), truth / "extra_label.png");
  try {
    evaluate_run(pred.path(), truth.path(), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingPair);
  }
  save_png(render_labels(t), pred / "extra_label.png");
  save_png(render_labels(t), pred / "orphan_label.png");
  EXPECT_THROW(evaluate_run(pred.path(), truth.path(), {}), Error);
  EXPECT_THROW(evaluate_run(pred / "nope", truth.path(), {}), Error);
}
