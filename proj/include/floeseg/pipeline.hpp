#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "floeseg/cloudfilter.hpp"
#include "floeseg/colorseg.hpp"
#include "floeseg/dataset.hpp"
#include "floeseg/metrics.hpp"
#include "floeseg/synth.hpp"
#include "floeseg/unet.hpp"

namespace floeseg {

namespace fs = std::filesystem;

/// Effective settings of one run: defaults, then a JSON config file, then
/// explicit flags. `threads` and `verbosity` change neither results nor
/// artifacts and are left out of the provenance blob.
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  int verbosity = 1;

  fs::path scene_dir;
  /// Optional ground-truth label images named like the scenes.
  fs::path truth_dir;
  fs::path work_dir = "run";

  int tile_size = 256;
  double split_ratio = 0.8;
  bool split_by_scene = false;
  bool apply_filter = false;
  CloudFilterParams cloud;
  /// Empty means the built-in default profile.
  fs::path profile_path;
  UNetConfig unet;
  SsimWindow ssim_window = SsimWindow::Block8;
};

nlohmann::json run_config_to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const fs::path& path, RunConfig base = {});

/// {"tool", "format", "seed", "config"} embedded into every artifact.
nlohmann::json provenance(const RunConfig& c, const std::string& stage);

using LogFn = std::function<void(const std::string&)>;

ThresholdProfile resolve_profile(const RunConfig& c);

/// Tiles every PNG scene under `input` (a directory, sorted by name, or one
/// file) into `out_dir/<scene>_r<row>_c<col>.png` and writes
/// `out_dir/manifest.json`. With `truth_dir`, the scene's label image of the
/// same name is tiled alongside into `<tile_id>_label.png` files and linked.
DatasetManifest run_tile(const fs::path& input, const fs::path& out_dir, const RunConfig& c,
                         const fs::path& truth_dir = {}, const LogFn& log = {});

/// Filters each tile of the manifest in `input_dir` (or each PNG when there is
/// none) into `out_dir`, carrying the manifest along.
void run_filter(const fs::path& input_dir, const fs::path& out_dir, const RunConfig& c, const LogFn& log = {});

/// Writes `<tile_id>_label.png` auto-labels for the tiles in `input_dir` and,
/// when the input has a manifest, `out_dir/manifest.json` linking them.
void run_autolabel(const fs::path& input_dir, const fs::path& out_dir, const RunConfig& c, const LogFn& log = {});

/// Writes `count` scenes as clean/, hazed/, labels/ PNG triples, a haze/
/// mask per scene and a manifest over the clean scenes.
void run_synth(const fs::path& out_dir, int count, const SynthConfig& scene, const RunConfig& c, const LogFn& log = {});

DatasetManifest run_split(const fs::path& manifest_path, const fs::path& out_path, const RunConfig& c);

/// Trains on the manifest's train split and saves the model plus a
/// `<model>.history.json` with per-epoch loss and accuracy.
TrainResult run_train(const fs::path& manifest_path, const fs::path& model_path, const RunConfig& c,
                      const LogFn& log = {});

/// Predicts every tile of `split` in the manifest, or every PNG in a plain
/// directory, into `out_dir/<tile_id>_label.png`.
void run_predict(const fs::path& model_path, const fs::path& input, const fs::path& out_dir,
                 std::optional<Split> split, const LogFn& log = {});

/// Copies the label files of one split into `out_dir` so that prediction and
/// truth directories pair up file by file.
void export_labels(const fs::path& manifest_path, Split split, const fs::path& out_dir, const fs::path& truth_dir = {});

/// evaluate_run with cloud fractions from an optional manifest; writes the
/// report with provenance to `out_path`.
nlohmann::json run_evaluate(const fs::path& pred_dir, const fs::path& truth_dir, const fs::path& manifest_path,
                            const fs::path& out_path, const RunConfig& c);

/// tile -> (filter) -> autolabel -> split -> train -> predict(test) ->
/// evaluate under work_dir. A failing stage is rethrown with its name.
nlohmann::json run_pipeline(const RunConfig& c, const LogFn& log = {});

}  // namespace floeseg
