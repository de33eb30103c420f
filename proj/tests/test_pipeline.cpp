#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "floeseg/cli.hpp"
#include "floeseg/error.hpp"
#include "floeseg/parallel.hpp"
#include "floeseg/pipeline.hpp"
#include "test_util.hpp"

using namespace floeseg;
using floeseg::testing::TempDir;

namespace {

std::size_t count_files(const fs::path& dir, const std::string& suffix) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().filename().string().ends_with(suffix);
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "-q");
  return run_cli(args);
}

// Tiny end-to-end config: 64 px scenes, 32 px tiles, a depth-2 net.
RunConfig tiny(const fs::path& scenes, const fs::path& work) {
  RunConfig c;
  c.seed = 5;
  c.scene_dir = scenes;
  c.work_dir = work;
  c.tile_size = 32;
  c.split_ratio = 0.75;
  c.unet.input_size = 32;
  c.unet.depth = 2;
  c.unet.base_width = 4;
  c.unet.dropout_schedule = {0.1, 0.1, 0.1};
  c.unet.epochs = 1;
  c.unet.batch_size = 4;
  return c;
}

void make_scenes(const fs::path& out, int count, int size) {
  SynthConfig s;
  s.size = size;
  s.n_floes = 5;
  s.n_sheets = 1;
  RunConfig c;
  c.seed = 1;
  run_synth(out, count, s, c);
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli({"--help"}), 0);
  EXPECT_EQ(cli({}), 2);
  EXPECT_EQ(cli({"tile", "--bogus"}), 2);
  EXPECT_EQ(cli({"nosuchcommand"}), 2);
  EXPECT_EQ(cli({"tile", "--input", "/nonexistent/x.png", "--out", "/tmp/floeseg_never"}), 1);
  EXPECT_EQ(cli({"--threads", "0", "tile", "--input", "a", "--out", "b"}), 2);
  EXPECT_EQ(cli({"predict", "--model", "m", "--input", "i", "--out", "o", "--split", "val"}), 2);
}

TEST(Cli, TileAndAutolabelCounts) {
  TempDir dir("cli_tile");
  save_png(Raster(2048, 2048, 3, 120), dir / "big.png");
  ASSERT_EQ(cli({"tile", "--input", (dir / "big.png").string(), "--out", (dir / "tiles").string()}), 0);
  EXPECT_EQ(count_files(dir / "tiles", ".png"), 64u);
  EXPECT_TRUE(fs::exists(dir / "tiles" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "tiles" / "big_r7_c7.png"));

  ASSERT_EQ(cli({"autolabel", "--input", (dir / "tiles").string(), "--out", (dir / "labels").string()}), 0);
  EXPECT_EQ(count_files(dir / "labels", "_label.png"), 64u);
  const auto m = load_manifest(dir / "labels" / "manifest.json");
  ASSERT_EQ(m.entries.size(), 64u);
  EXPECT_NO_THROW(check_manifest_files(m));
  EXPECT_EQ(m.config["stage"], "autolabel");
}

TEST(Cli, FlagsOverrideConfigFile) {
  TempDir dir("cli_cfg");
  save_png(Raster(128, 128, 3, 10), dir / "s.png");
  std::ofstream(dir / "cfg.json") << R"({"tile_size": 64, "seed": 3, "cloud_filter": {"mask_margin": 11}})";
  ASSERT_EQ(cli({"--config", (dir / "cfg.json").string(), "tile", "--input", (dir / "s.png").string(), "--out",
                 (dir / "a").string()}),
            0);
  auto m = load_manifest(dir / "a" / "manifest.json");
  EXPECT_EQ(m.tile_size, 64);
  EXPECT_EQ(m.entries.size(), 4u);
  EXPECT_EQ(m.config["seed"], 3);
  EXPECT_EQ(m.config["config"]["cloud_filter"]["mask_margin"], 11);

  ASSERT_EQ(cli({"--config", (dir / "cfg.json").string(), "--seed", "8", "tile", "--input", (dir / "s.png").string(),
                 "--out", (dir / "b").string(), "--size", "32", "--mask-margin", "12"}),
            0);
  m = load_manifest(dir / "b" / "manifest.json");
  EXPECT_EQ(m.tile_size, 32);
  EXPECT_EQ(m.entries.size(), 16u);
  EXPECT_EQ(m.config["seed"], 8);
  EXPECT_EQ(m.config["config"]["cloud_filter"]["mask_margin"], 12);
  EXPECT_FALSE(m.config["config"].contains("threads"));
}

TEST(Pipeline, ConfigJsonRoundTrip) {
  RunConfig c = tiny("scenes", "work");
  c.apply_filter = true;
  c.ssim_window = SsimWindow::Gaussian11;
  c.cloud.blend = 0.5;
  const auto back = run_config_from_json(run_config_to_json(c));
  EXPECT_EQ(run_config_to_json(back), run_config_to_json(c));
  EXPECT_THROW(run_config_from_json({{"ssim_window", "box"}}), Error);
  const auto p = provenance(c, "train");
  EXPECT_EQ(p["tool"], "floeseg");
  EXPECT_EQ(p["stage"], "train");
  EXPECT_EQ(p["config"]["unet"]["seed"], c.seed);
}

TEST(Pipeline, SynthLayout) {
  TempDir dir("synth");
  make_scenes(dir.path(), 3, 64);
  for (const char* sub : {"clean", "hazed", "labels", "haze"}) EXPECT_EQ(count_files(dir / sub, ".png"), 3u) << sub;
  const auto m = load_manifest(dir / "manifest.json");
  EXPECT_EQ(m.entries.size(), 3u);
  EXPECT_NO_THROW(check_manifest_files(m));
}

TEST(Pipeline, TileWithTruthLinksLabels) {
  TempDir dir("truth");
  make_scenes(dir / "syn", 2, 64);
  RunConfig c;
  c.tile_size = 32;
  const auto m = run_tile(dir / "syn" / "clean", dir / "tiles", c, dir / "syn" / "labels");
  ASSERT_EQ(m.entries.size(), 8u);
  for (const auto& e : m.entries) {
    EXPECT_FALSE(e.label_path.empty());
    EXPECT_EQ(e.cloud_fraction, 0.0);
  }
  EXPECT_NO_THROW(check_manifest_files(load_manifest(dir / "tiles" / "manifest.json")));
}

TEST(Pipeline, StageErrorsNameTheStage) {
  TempDir dir("stage");
  fs::create_directories(dir / "empty");
  auto c = tiny(dir / "empty", dir / "work");
  try {
    run_pipeline(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage tile"), std::string::npos) << e.what();
  }
  c.scene_dir.clear();
  EXPECT_THROW(run_pipeline(c), Error);
}

TEST(Pipeline, EndToEndIsByteIdentical) {
  TempDir dir("e2e");
  make_scenes(dir / "syn", 4, 64);
  auto c = tiny(dir / "syn" / "clean", dir / "w1");
  c.apply_filter = true;
  c.truth_dir = dir / "syn" / "labels";
  const auto r1 = run_pipeline(c);
  c.work_dir = dir / "w2";
  c.threads = 2;
  set_thread_count(2);
  const auto r2 = run_pipeline(c);
  set_thread_count(1);
  for (const char* f : {"manifest.json", "model.bin", "report.json", "model.bin.history.json"}) {
    EXPECT_EQ(slurp(dir / "w1" / f), slurp(dir / "w2" / f)) << f;
  }
  EXPECT_EQ(r1, r2);
  EXPECT_EQ(r1["overall"]["pixels"], 4 * 32 * 32);
  EXPECT_EQ(r1["provenance"]["stage"], "evaluate");
  EXPECT_EQ(count_files(dir / "w1" / "predictions", "_label.png"), 4u);
}

TEST(Pipeline, PredictDirectoryAndEvaluate) {
  TempDir dir("pred");
  make_scenes(dir / "syn", 2, 64);
  auto c = tiny(dir / "syn" / "clean", dir / "w");
  run_tile(c.scene_dir, dir / "tiles", c);
  run_autolabel(dir / "tiles", dir / "labels", c);
  const auto m = run_split(dir / "labels" / "manifest.json", dir / "split.json", c);
  EXPECT_EQ(m.count(Split::Train), 6u);
  run_train(dir / "split.json", dir / "model.bin", c);
  EXPECT_TRUE(fs::exists(dir / "model.bin.history.json"));
  run_predict(dir / "model.bin", dir / "tiles", dir / "all_pred", std::nullopt);
  EXPECT_EQ(count_files(dir / "all_pred", "_label.png"), 8u);
  run_predict(dir / "model.bin", dir / "split.json", dir / "test_pred", Split::Test);
  export_labels(dir / "split.json", Split::Test, dir / "test_truth");
  const auto r = run_evaluate(dir / "test_pred", dir / "test_truth", dir / "split.json", dir / "r.json", c);
  EXPECT_EQ(r["overall"]["tiles"], 2);
  EXPECT_TRUE(fs::exists(dir / "r.json"));
}
