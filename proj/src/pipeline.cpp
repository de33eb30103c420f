#include "floeseg/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "floeseg/error.hpp"
#include "floeseg/parallel.hpp"
#include "floeseg/rng.hpp"

namespace floeseg {

namespace {

constexpr int kFormat = 1;
constexpr const char* kLabelSuffix = "_label";

void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

bool is_label_name(const fs::path& p) {
  const auto stem = p.stem().string();
  return stem.size() > 6 && stem.ends_with(kLabelSuffix);
}

// PNG files of a directory in name order, or the file itself.
std::vector<fs::path> list_pngs(const fs::path& input, bool skip_labels = true) {
  if (fs::is_regular_file(input)) return {input};
  if (!fs::is_directory(input)) throw Error(ErrorCode::FileNotFound, input.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(input)) {
    if (!e.is_regular_file() || e.path().extension() != ".png") continue;
    if (skip_labels && is_label_name(e.path())) continue;
    out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string relative_to(const fs::path& target, const fs::path& base_dir) {
  const auto t = fs::absolute(target).lexically_normal();
  const auto b = fs::absolute(base_dir).lexically_normal();
  return t.lexically_relative(b).generic_string();
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::optional<DatasetManifest> manifest_in(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  if (!fs::is_regular_file(path)) return std::nullopt;
  return load_manifest(path);
}

// Rebases every relative path of `m` onto `new_root`.
DatasetManifest rebase(DatasetManifest m, const fs::path& new_root) {
  for (auto& e : m.entries) {
    e.image_path = relative_to(m.resolve(e.image_path), new_root);
    if (!e.label_path.empty()) e.label_path = relative_to(m.resolve(e.label_path), new_root);
  }
  m.root = new_root;
  return m;
}

std::string label_file(const std::string& id) { return id + kLabelSuffix + ".png"; }

std::string ssim_window_name(SsimWindow w) { return w == SsimWindow::Block8 ? "block8" : "gaussian11"; }

SsimWindow ssim_window_from(const std::string& s) {
  if (s == "block8") return SsimWindow::Block8;
  if (s == "gaussian11") return SsimWindow::Gaussian11;
  throw Error(ErrorCode::ParseError, "ssim_window must be block8 or gaussian11, got " + s);
}

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), "stage " + name + ": " + e.what());
  }
}

}  // namespace

nlohmann::json run_config_to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"scene_dir", c.scene_dir.generic_string()},
          {"truth_dir", c.truth_dir.generic_string()},
          {"tile_size", c.tile_size},
          {"split_ratio", c.split_ratio},
          {"split_by_scene", c.split_by_scene},
          {"apply_filter", c.apply_filter},
          {"cloud_filter", cloud_params_to_json(c.cloud)},
          {"profile", c.profile_path.generic_string()},
          {"unet", unet_config_to_json(c.unet)},
          {"ssim_window", ssim_window_name(c.ssim_window)}};
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  try {
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.verbosity = j.value("verbosity", c.verbosity);
    c.scene_dir = j.value("scene_dir", c.scene_dir.string());
    c.truth_dir = j.value("truth_dir", c.truth_dir.string());
    c.work_dir = j.value("work_dir", c.work_dir.string());
    c.tile_size = j.value("tile_size", c.tile_size);
    c.split_ratio = j.value("split_ratio", c.split_ratio);
    c.split_by_scene = j.value("split_by_scene", c.split_by_scene);
    c.apply_filter = j.value("apply_filter", c.apply_filter);
    if (j.contains("cloud_filter")) c.cloud = cloud_params_from_json(j.at("cloud_filter"), c.cloud);
    c.profile_path = j.value("profile", c.profile_path.string());
    if (j.contains("unet")) c.unet = unet_config_from_json(j.at("unet"), c.unet);
    if (j.contains("ssim_window")) c.ssim_window = ssim_window_from(j.at("ssim_window").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

nlohmann::json provenance(const RunConfig& c, const std::string& stage_name) {
  auto cfg = run_config_to_json(c);
  // The network seed always follows the run seed.
  cfg["unet"]["seed"] = c.seed;
  return {{"tool", "floeseg"}, {"format", kFormat}, {"stage", stage_name}, {"seed", c.seed}, {"config", cfg}};
}

ThresholdProfile resolve_profile(const RunConfig& c) {
  return c.profile_path.empty() ? default_profile() : load_profile(c.profile_path);
}

DatasetManifest run_tile(const fs::path& input, const fs::path& out_dir, const RunConfig& c, const fs::path& truth_dir,
                         const LogFn& log) {
  validate(c.cloud);
  const auto scenes = list_pngs(input);
  if (scenes.empty()) throw Error(ErrorCode::EmptyManifest, "no PNG scenes in " + input.string());
  fs::create_directories(out_dir);

  DatasetManifest m;
  m.root = out_dir;
  m.seed = c.seed;
  m.tile_size = c.tile_size;
  m.config = provenance(c, "tile");
  for (const auto& scene_path : scenes) {
    const auto scene_id = scene_path.stem().string();
    const Raster scene = load_png(scene_path);
    if (scene.channels() != 3) throw Error(ErrorCode::WrongChannelCount, scene_path.string() + " is not RGB");
    const auto tiles = tile_scene(scene, c.tile_size);
    std::vector<LabelMap> truth;
    if (!truth_dir.empty()) {
      const auto truth_path = truth_dir / scene_path.filename();
      if (!fs::exists(truth_path)) throw Error(ErrorCode::MissingFile, truth_path.string());
      const auto labels = parse_labels(load_png(truth_path));
      if (labels.width() != scene.width() || labels.height() != scene.height()) {
        throw Error(ErrorCode::DimensionMismatch, truth_path.string() + " does not match its scene");
      }
      truth = tile_labels(labels, c.tile_size);
    }
    std::vector<ManifestEntry> entries(tiles.size());
    parallel_for(tiles.size(), [&](std::size_t i) {
      const auto& t = tiles[i];
      auto& e = entries[i];
      e.tile_id = scene_id + "_r" + std::to_string(t.row) + "_c" + std::to_string(t.col);
      e.image_path = e.tile_id + ".png";
      e.scene = scene_id;
      e.cloud_fraction = cloud_shadow_fraction(t.raster, c.cloud);
      save_png(t.raster, out_dir / e.image_path);
      if (!truth.empty()) {
        e.label_path = label_file(e.tile_id);
        save_png(render_labels(truth[i]), out_dir / e.label_path);
      }
    });
    m.entries.insert(m.entries.end(), entries.begin(), entries.end());
    m.source_scenes.push_back(scene_path.filename().generic_string());
    say(log, "tiled " + scene_id + " into " + std::to_string(tiles.size()) + " tiles");
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

void run_filter(const fs::path& input_dir, const fs::path& out_dir, const RunConfig& c, const LogFn& log) {
  validate(c.cloud);
  fs::create_directories(out_dir);
  const auto manifest = manifest_in(input_dir);
  std::vector<std::pair<fs::path, std::string>> jobs;  // source, output name
  if (manifest) {
    for (const auto& e : manifest->entries) jobs.emplace_back(manifest->resolve(e.image_path), e.tile_id + ".png");
  } else {
    for (const auto& p : list_pngs(input_dir)) jobs.emplace_back(p, p.filename().string());
  }
  std::vector<double> fractions(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    const Raster in = load_png(jobs[i].first);
    fractions[i] = cloud_shadow_fraction(in, c.cloud);
    save_png(filter_thin_clouds_shadows(in, c.cloud), out_dir / jobs[i].second);
  });
  if (manifest) {
    auto m = rebase(*manifest, out_dir);
    for (std::size_t i = 0; i < m.entries.size(); ++i) m.entries[i].image_path = jobs[i].second;
    m.config = provenance(c, "filter");
    save_manifest(m, out_dir / "manifest.json");
  }
  say(log, "filtered " + std::to_string(jobs.size()) + " tiles");
}

void run_autolabel(const fs::path& input_dir, const fs::path& out_dir, const RunConfig& c, const LogFn& log) {
  const auto profile = resolve_profile(c);
  fs::create_directories(out_dir);
  const auto manifest = manifest_in(input_dir);
  std::vector<std::pair<fs::path, std::string>> jobs;  // image, tile id
  if (manifest) {
    for (const auto& e : manifest->entries) jobs.emplace_back(manifest->resolve(e.image_path), e.tile_id);
  } else {
    for (const auto& p : list_pngs(input_dir)) jobs.emplace_back(p, p.stem().string());
  }
  parallel_for(jobs.size(), [&](std::size_t i) {
    const Raster in = load_png(jobs[i].first);
    if (in.channels() != 3) throw Error(ErrorCode::WrongChannelCount, jobs[i].first.string() + " is not RGB");
    save_png(render_labels(autolabel(in, profile)), out_dir / label_file(jobs[i].second));
  });
  if (manifest) {
    auto m = rebase(*manifest, out_dir);
    for (std::size_t i = 0; i < m.entries.size(); ++i) m.entries[i].label_path = label_file(jobs[i].second);
    m.config = provenance(c, "autolabel");
    m.config["profile"] = profile_to_json(profile);
    save_manifest(m, out_dir / "manifest.json");
  }
  say(log, "auto-labelled " + std::to_string(jobs.size()) + " tiles");
}

void run_synth(const fs::path& out_dir, int count, const SynthConfig& scene, const RunConfig& c, const LogFn& log) {
  if (count < 1) throw Error(ErrorCode::BadConfig, "scene count must be >= 1");
  validate(scene);
  for (const char* sub : {"clean", "hazed", "labels", "haze"}) fs::create_directories(out_dir / sub);
  std::vector<ManifestEntry> entries(static_cast<std::size_t>(count));
  parallel_for(entries.size(), [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03zu", i);
    SynthConfig cfg = scene;
    cfg.seed = derive_seed(c.seed, {0x5c3e, i});
    const auto s = generate(cfg);
    const std::string file = std::string(name) + ".png";
    save_png(s.clean, out_dir / "clean" / file);
    save_png(s.hazed, out_dir / "hazed" / file);
    save_png(render_labels(s.truth), out_dir / "labels" / file);
    save_png(s.haze_mask.to_raster(), out_dir / "haze" / file);
    entries[i] = {name,
                  "clean/" + file,
                  "labels/" + file,
                  static_cast<double>(s.haze_mask.count()) / static_cast<double>(s.haze_mask.pixel_count()),
                  Split::Train,
                  name};
  });
  DatasetManifest m;
  m.entries = std::move(entries);
  m.seed = c.seed;
  m.tile_size = scene.size;
  for (const auto& e : m.entries) m.source_scenes.push_back(e.image_path);
  m.config = provenance(c, "synth");
  m.config["synth"] = synth_to_json(scene);
  m.config["synth"].erase("seed");
  save_manifest(m, out_dir / "manifest.json");
  say(log, "generated " + std::to_string(count) + " scenes");
}

DatasetManifest run_split(const fs::path& manifest_path, const fs::path& out_path, const RunConfig& c) {
  auto m = split_dataset(load_manifest(manifest_path), c.split_ratio, c.seed, c.split_by_scene);
  const auto out_root = out_path.parent_path().empty() ? fs::path(".") : out_path.parent_path();
  m = rebase(std::move(m), out_root);
  m.config = provenance(c, "split");
  save_manifest(m, out_path);
  return m;
}

TrainResult run_train(const fs::path& manifest_path, const fs::path& model_path, const RunConfig& c, const LogFn& log) {
  const auto m = load_manifest(manifest_path);
  check_manifest_files(m);
  UNetConfig cfg = c.unet;
  cfg.seed = c.seed;
  auto result = train(m, cfg, [&](const EpochRecord& r) {
    std::ostringstream s;
    s << "epoch " << r.epoch << " loss " << r.mean_loss << " accuracy " << r.pixel_accuracy << " (" << r.seconds << " s)";
    say(log, s.str());
  });
  if (!model_path.parent_path().empty()) fs::create_directories(model_path.parent_path());
  save_model(result.params, cfg, model_path);
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& r : result.history.epochs) {
    epochs.push_back({{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"pixel_accuracy", r.pixel_accuracy}});
  }
  write_json({{"provenance", provenance(c, "train")}, {"steps", result.history.steps}, {"epochs", epochs}},
             fs::path(model_path.string() + ".history.json"));
  return result;
}

void run_predict(const fs::path& model_path, const fs::path& input, const fs::path& out_dir, std::optional<Split> split,
                 const LogFn& log) {
  const auto model = load_model(model_path);
  fs::create_directories(out_dir);
  std::vector<std::pair<fs::path, std::string>> jobs;  // image, tile id
  const bool is_manifest = fs::is_regular_file(input) && input.extension() == ".json";
  const auto manifest = is_manifest ? std::optional(load_manifest(input)) : manifest_in(input);
  if (manifest) {
    for (const auto& e : manifest->entries) {
      if (!split || e.split == *split) jobs.emplace_back(manifest->resolve(e.image_path), e.tile_id);
    }
  } else {
    for (const auto& p : list_pngs(input)) jobs.emplace_back(p, p.stem().string());
  }
  // predict() parallelises inside the network, so tiles go one at a time.
  for (const auto& [image, id] : jobs) {
    save_png(render_labels(predict(model.params, model.config, load_png(image))), out_dir / label_file(id));
  }
  say(log, "predicted " + std::to_string(jobs.size()) + " tiles");
}

void export_labels(const fs::path& manifest_path, Split split, const fs::path& out_dir, const fs::path& truth_dir) {
  const auto m = load_manifest(manifest_path);
  fs::create_directories(out_dir);
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    const auto src = truth_dir.empty() ? m.resolve(e.label_path) : truth_dir / label_file(e.tile_id);
    if (e.label_path.empty() && truth_dir.empty()) throw Error(ErrorCode::MissingFile, "no label for " + e.tile_id);
    if (!fs::exists(src)) throw Error(ErrorCode::MissingFile, src.string());
    fs::copy_file(src, out_dir / label_file(e.tile_id), fs::copy_options::overwrite_existing);
  }
}

nlohmann::json run_evaluate(const fs::path& pred_dir, const fs::path& truth_dir, const fs::path& manifest_path,
                            const fs::path& out_path, const RunConfig& c) {
  std::map<std::string, double> fractions;
  if (!manifest_path.empty()) {
    for (const auto& e : load_manifest(manifest_path).entries) fractions[e.tile_id] = e.cloud_fraction;
  }
  SsimParams sp;
  sp.window = c.ssim_window;
  auto report = report_to_json(evaluate_run(pred_dir, truth_dir, fractions, sp));
  report["provenance"] = provenance(c, "evaluate");
  if (!out_path.empty()) {
    if (!out_path.parent_path().empty()) fs::create_directories(out_path.parent_path());
    write_json(report, out_path);
  }
  return report;
}

nlohmann::json run_pipeline(const RunConfig& c, const LogFn& log) {
  if (c.scene_dir.empty()) throw Error(ErrorCode::BadConfig, "pipeline needs a scene directory");
  const auto w = c.work_dir;
  fs::create_directories(w);
  stage("tile", [&] { return run_tile(c.scene_dir, w / "tiles", c, c.truth_dir, log); });
  auto images = w / "tiles";
  if (c.apply_filter) {
    stage("filter", [&] {
      run_filter(images, w / "filtered", c, log);
      return 0;
    });
    images = w / "filtered";
  }
  stage("autolabel", [&] {
    run_autolabel(images, w / "labels", c, log);
    return 0;
  });
  stage("split", [&] { return run_split(w / "labels" / "manifest.json", w / "manifest.json", c); });
  stage("train", [&] { return run_train(w / "manifest.json", w / "model.bin", c, log); });
  stage("predict", [&] {
    run_predict(w / "model.bin", w / "manifest.json", w / "predictions", Split::Test, log);
    return 0;
  });
  return stage("evaluate", [&] {
    export_labels(w / "manifest.json", Split::Test, w / "test_truth", c.truth_dir.empty() ? fs::path{} : w / "tiles");
    return run_evaluate(w / "predictions", w / "test_truth", w / "manifest.json", w / "report.json", c);
  });
}

}  // namespace floeseg
