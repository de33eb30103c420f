#include "floeseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "floeseg/error.hpp"
#include "floeseg/rng.hpp"

namespace floeseg {

namespace {

void check_tile_size(int size) {
  if (size < 32 || size % 32 != 0) throw Error(ErrorCode::BadConfig, "tile size must be a positive multiple of 32");
}

}  // namespace

std::vector<Tile> tile_scene(const Raster& scene, int size) {
  check_tile_size(size);
  if (scene.width() < size || scene.height() < size) {
    throw Error(ErrorCode::SceneTooSmall, std::to_string(scene.width()) + "x" + std::to_string(scene.height()) +
                                              " scene is smaller than one " + std::to_string(size) + " tile");
  }
  std::vector<Tile> tiles;
  for (int r = 0; r < scene.height() / size; ++r) {
    for (int c = 0; c < scene.width() / size; ++c) tiles.push_back({scene.crop(c * size, r * size, size, size), r, c});
  }
  return tiles;
}

std::vector<LabelMap> tile_labels(const LabelMap& labels, int size) {
  check_tile_size(size);
  if (labels.width() < size || labels.height() < size) throw Error(ErrorCode::SceneTooSmall, "label map smaller than one tile");
  std::vector<LabelMap> tiles;
  for (int r = 0; r < labels.height() / size; ++r) {
    for (int c = 0; c < labels.width() / size; ++c) tiles.push_back(labels.crop(c * size, r * size, size, size));
  }
  return tiles;
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw Error(ErrorCode::ParseError, "split must be train or test, got " + s);
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [s](const auto& e) { return e.split == s; }));
}

DatasetManifest split_dataset(const DatasetManifest& manifest, double ratio, std::uint64_t seed, bool by_scene) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::BadRange, "split ratio must be in (0, 1)");
  if (manifest.entries.empty()) throw Error(ErrorCode::EmptyManifest, "nothing to split");
  DatasetManifest out = manifest;
  out.seed = seed;
  const std::size_t n = out.entries.size();
  const auto quota = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  Rng rng(derive_seed(seed, {0x5b117}));

  if (!by_scene) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) out.entries[order[i]].split = i < quota ? Split::Train : Split::Test;
    return out;
  }

  std::vector<std::string> scenes;
  std::map<std::string, std::size_t> sizes;
  for (const auto& e : out.entries) {
    if (sizes[e.scene]++ == 0) scenes.push_back(e.scene);
  }
  std::shuffle(scenes.begin(), scenes.end(), rng);
  std::set<std::string> train;
  std::size_t assigned = 0;
  for (const auto& s : scenes) {
    if (assigned >= quota) break;
    train.insert(s);
    assigned += sizes[s];
  }
  for (auto& e : out.entries) e.split = train.count(e.scene) ? Split::Train : Split::Test;
  return out;
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"tile_id", e.tile_id},
                       {"image_path", e.image_path},
                       {"label_path", e.label_path},
                       {"cloud_fraction", e.cloud_fraction},
                       {"split", to_string(e.split)},
                       {"scene", e.scene}});
  }
  return {{"entries", entries},
          {"seed", m.seed},
          {"tile_size", m.tile_size},
          {"source_scenes", m.source_scenes},
          {"config", m.config}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root) {
  DatasetManifest m;
  m.root = root;
  try {
    m.seed = j.value("seed", std::uint64_t{0});
    m.tile_size = j.value("tile_size", 256);
    m.source_scenes = j.value("source_scenes", std::vector<std::string>{});
    m.config = j.value("config", nlohmann::json::object());
    std::set<std::string> ids;
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.tile_id = e.at("tile_id").get<std::string>();
      entry.image_path = e.at("image_path").get<std::string>();
      entry.label_path = e.value("label_path", std::string{});
      entry.cloud_fraction = e.value("cloud_fraction", 0.0);
      entry.split = split_from_string(e.value("split", std::string("train")));
      entry.scene = e.value("scene", std::string{});
      if (!ids.insert(entry.tile_id).second) throw Error(ErrorCode::ParseError, "duplicate tile_id " + entry.tile_id);
      m.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("manifest: ") + e.what());
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << manifest_to_json(m).dump(2) << "\n";
}

void check_manifest_files(const DatasetManifest& m) {
  for (const auto& e : m.entries) {
    if (!std::filesystem::exists(m.resolve(e.image_path))) throw Error(ErrorCode::MissingFile, m.resolve(e.image_path).string());
    if (!e.label_path.empty() && !std::filesystem::exists(m.resolve(e.label_path))) {
      throw Error(ErrorCode::MissingFile, m.resolve(e.label_path).string());
    }
  }
}

TensorF one_hot(const LabelMap& labels, int classes) {
  TensorF t({classes, labels.height(), labels.width()});
  const auto plane = static_cast<Eigen::Index>(labels.pixel_count());
  for (std::size_t i = 0; i < labels.pixel_count(); ++i) t[labels[i] * plane + static_cast<Eigen::Index>(i)] = 1.0f;
  return t;
}

TensorF image_tensor(const Raster& rgb) {
  if (rgb.channels() != 3) throw Error(ErrorCode::WrongChannelCount, "image tensors need RGB rasters");
  TensorF t({3, rgb.height(), rgb.width()});
  const auto plane = static_cast<Eigen::Index>(rgb.pixel_count());
  const auto d = rgb.data();
  for (std::size_t i = 0; i < rgb.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) t[c * plane + static_cast<Eigen::Index>(i)] = static_cast<float>(d[3 * i + c]) / 127.5f - 1.0f;
  }
  return t;
}

Batch make_batch(const std::vector<LabeledTile>& tiles, const std::vector<std::size_t>& order) {
  if (order.empty()) throw Error(ErrorCode::EmptyManifest, "empty batch");
  const auto& first = tiles.at(order.front()).image;
  const Eigen::Index b = static_cast<Eigen::Index>(order.size());
  const Eigen::Index h = first.height(), w = first.width(), per = 3 * h * w;
  Batch batch{TensorF({b, 3, h, w}), TensorF({b, 3, h, w}), order};
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& tile = tiles.at(order[static_cast<std::size_t>(i)]);
    if (tile.image.width() != w || tile.image.height() != h || tile.labels.width() != w || tile.labels.height() != h) {
      throw Error(ErrorCode::BadDimensions, "all tiles in a batch must share one size");
    }
    batch.images.values().segment(i * per, per) = image_tensor(tile.image).values();
    batch.targets.values().segment(i * per, per) = one_hot(tile.labels).values();
  }
  return batch;
}

std::vector<std::vector<std::size_t>> batch_plan(const std::vector<std::size_t>& members, Split split,
                                                 int batch_size, std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw Error(ErrorCode::BadConfig, "batch size must be >= 1");
  if (members.empty()) throw Error(ErrorCode::EmptyManifest, "split has no tiles");
  auto order = members;
  if (split == Split::Train) {
    Rng rng(derive_seed(seed ^ static_cast<std::uint64_t>(epoch), {0xba7c4}));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> plan;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

std::vector<std::size_t> split_members(const DatasetManifest& m, Split s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    if (m.entries[i].split == s) out.push_back(i);
  }
  return out;
}

LabeledTile load_entry(const DatasetManifest& m, std::size_t index) {
  const auto& e = m.entries.at(index);
  const auto image_path = m.resolve(e.image_path);
  const auto label_path = m.resolve(e.label_path);
  if (!std::filesystem::exists(image_path)) throw Error(ErrorCode::MissingFile, image_path.string());
  if (e.label_path.empty() || !std::filesystem::exists(label_path)) throw Error(ErrorCode::MissingFile, label_path.string());
  auto image = load_png(image_path);
  if (image.channels() != 3) throw Error(ErrorCode::WrongChannelCount, image_path.string() + " is not RGB");
  return {std::move(image), parse_labels(load_png(label_path))};
}

BatchStream::BatchStream(const DatasetManifest& manifest, Split split, int batch_size, std::uint64_t seed, int epoch)
    : manifest_(manifest), plan_(batch_plan(split_members(manifest, split), split, batch_size, seed, epoch)) {}

bool BatchStream::next(Batch& out) {
  if (cursor_ >= plan_.size()) return false;
  const auto& indices = plan_[cursor_++];
  std::vector<LabeledTile> tiles;
  tiles.reserve(indices.size());
  for (auto i : indices) tiles.push_back(load_entry(manifest_, i));
  std::vector<std::size_t> local(indices.size());
  std::iota(local.begin(), local.end(), 0);
  out = make_batch(tiles, local);
  out.entries = indices;
  return true;
}

}  // namespace floeseg
