#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "floeseg/colorseg.hpp"
#include "floeseg/raster.hpp"
#include "floeseg/tensor.hpp"

namespace floeseg {

struct Tile {
  Raster raster;
  int row = 0;
  int col = 0;
};

/// Non-overlapping size x size tiles in row-major order; right and bottom
/// remainders are discarded. size must be a positive multiple of 32.
std::vector<Tile> tile_scene(const Raster& scene, int size);
std::vector<LabelMap> tile_labels(const LabelMap& labels, int size);

enum class Split { Train, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestEntry {
  std::string tile_id;
  /// Paths are relative to the manifest's directory.
  std::string image_path;
  std::string label_path;
  double cloud_fraction = 0.0;
  Split split = Split::Train;
  std::string scene;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  int tile_size = 256;
  std::vector<std::string> source_scenes;
  /// Effective run configuration, echoed for provenance.
  nlohmann::json config = nlohmann::json::object();
  /// Directory that relative paths resolve against. Not serialized.
  std::filesystem::path root;

  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
  std::size_t count(Split s) const;
};

/// Seeded uniform shuffle; floor(ratio * N) tiles go to train. With
/// by_scene, whole scenes are assigned until the train quota is reached.
DatasetManifest split_dataset(const DatasetManifest& manifest, double ratio, std::uint64_t seed, bool by_scene = false);

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root);
DatasetManifest load_manifest(const std::filesystem::path& path);
/// Writes the manifest; relative entry paths are kept as they are.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
/// Throws MissingFile if any referenced image or label is absent.
void check_manifest_files(const DatasetManifest& m);

/// [3,H,W] tensor, channel c is 1 where the label is c.
TensorF one_hot(const LabelMap& labels, int classes = kClassCount);
/// [3,H,W] RGB tensor scaled to [-1,1].
TensorF image_tensor(const Raster& rgb);

struct Batch {
  TensorF images;   // [B,3,S,S]
  TensorF targets;  // [B,3,S,S] one-hot
  std::vector<std::size_t> entries;  // manifest entry indices
};

/// In-memory sample used by training.
struct LabeledTile {
  Raster image;
  LabelMap labels;
};

Batch make_batch(const std::vector<LabeledTile>& tiles, const std::vector<std::size_t>& order);

/// Deterministic batch order for one epoch. Train order is shuffled with
/// seed ^ epoch; test order is manifest order. The last partial batch is kept.
std::vector<std::vector<std::size_t>> batch_plan(const std::vector<std::size_t>& members, Split split,
                                                 int batch_size, std::uint64_t seed, int epoch);

/// Streams batches of one split from disk in the order fixed by batch_plan.
class BatchStream {
 public:
  BatchStream(const DatasetManifest& manifest, Split split, int batch_size, std::uint64_t seed, int epoch);

  std::size_t batch_count() const { return plan_.size(); }
  bool next(Batch& out);

 private:
  const DatasetManifest& manifest_;
  std::vector<std::vector<std::size_t>> plan_;
  std::size_t cursor_ = 0;
};

std::vector<std::size_t> split_members(const DatasetManifest& m, Split s);
LabeledTile load_entry(const DatasetManifest& m, std::size_t index);

}  // namespace floeseg
