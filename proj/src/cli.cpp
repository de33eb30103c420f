#include "floeseg/cli.hpp"

#include <csignal>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <thread>

#include "CLI11.hpp"

#include "floeseg/calibserver.hpp"
#include "floeseg/error.hpp"
#include "floeseg/parallel.hpp"
#include "floeseg/pipeline.hpp"

namespace floeseg {

namespace {

// Flags that may override the config file. Unset optionals leave it alone.
struct Overrides {
  std::optional<int> size;
  std::optional<double> ratio;
  bool by_scene = false;
  std::optional<std::string> profile;
  std::optional<int> noise_kernel, background_kernel, mask_margin;
  std::optional<double> blend;
  std::optional<int> epochs, batch_size, base_width, depth, input_size;
  std::optional<double> lr;
  std::vector<double> dropout;
  std::optional<std::string> ssim_window;

  void filter_options(CLI::App* sub) {
    sub->add_option("--noise-kernel", noise_kernel, "Median kernel for noise filtering (odd)");
    sub->add_option("--background-kernel", background_kernel, "Background window (odd)");
    sub->add_option("--mask-margin", mask_margin, "Brightness margin for the cloud/shadow mask");
    sub->add_option("--blend", blend, "Correction strength in [0, 1]");
  }
  void train_options(CLI::App* sub) {
    sub->add_option("--epochs", epochs, "Training epochs");
    sub->add_option("--batch-size", batch_size, "Batch size");
    sub->add_option("--base-width", base_width, "Channels of the first encoder level");
    sub->add_option("--depth", depth, "Pooling stages");
    sub->add_option("--input-size", input_size, "Network input size in pixels");
    sub->add_option("--lr", lr, "Adam learning rate");
    sub->add_option("--dropout", dropout, "Dropout rate per encoder level plus bottleneck");
  }

  void apply(RunConfig& c) const {
    if (size) c.tile_size = *size;
    if (ratio) c.split_ratio = *ratio;
    if (by_scene) c.split_by_scene = true;
    if (profile) c.profile_path = *profile;
    if (noise_kernel) c.cloud.noise_kernel = *noise_kernel;
    if (background_kernel) c.cloud.background_kernel = *background_kernel;
    if (mask_margin) c.cloud.mask_margin = *mask_margin;
    if (blend) c.cloud.blend = *blend;
    if (epochs) c.unet.epochs = *epochs;
    if (batch_size) c.unet.batch_size = *batch_size;
    if (base_width) c.unet.base_width = *base_width;
    if (depth) c.unet.depth = *depth;
    if (input_size) c.unet.input_size = *input_size;
    if (lr) c.unet.learning_rate = *lr;
    if (!dropout.empty()) c.unet.dropout_schedule = dropout;
    if (ssim_window) c.ssim_window = run_config_from_json({{"ssim_window", *ssim_window}}).ssim_window;
  }
};

int serve(const RunConfig& c, const std::string& scenes, const std::string& host, int port, const std::string& profile,
          const std::string& ui, const LogFn& log) {
  // Route SIGINT/SIGTERM to a waiter thread so shutdown runs outside a signal handler.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  CalibServer server(scenes, profile.empty() ? c.profile_path : std::filesystem::path(profile), ui);
  const int bound = server.bind(host, port);
  log("calibration server on http://" + host + ":" + std::to_string(bound));
  std::jthread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"floeseg: sea-ice segmentation from optical tiles"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string config_path;
  bool quiet = false;
  app.add_option("--seed", seed, "Master seed for every random choice");
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "JSON run config; explicit flags win")->check(CLI::ExistingFile);
  app.add_flag("-q,--quiet", quiet, "Only report errors");

  Overrides o;
  std::string input, out, truth, manifest, model, pred, split_name = "all", scenes, work, host = "127.0.0.1", ui,
                                                                        ssim_window;
  int count = 10, port = 8080;
  SynthConfig synth;
  bool filter_on = false;

  auto* tile = app.add_subcommand("tile", "Cut scenes into square tiles and write a manifest");
  tile->add_option("--input", input, "Scene PNG or directory of scenes")->required();
  tile->add_option("--out", out, "Output directory")->required();
  tile->add_option("--size", o.size, "Tile size in pixels (multiple of 32)");
  tile->add_option("--truth", truth, "Directory of ground-truth label images named like the scenes");
  o.filter_options(tile);

  auto* filter = app.add_subcommand("filter", "Suppress thin clouds and shadows");
  filter->add_option("--input", input, "Tile directory")->required();
  filter->add_option("--out", out, "Output directory")->required();
  o.filter_options(filter);

  auto* label = app.add_subcommand("autolabel", "Label tiles by HSV colour ranges");
  label->add_option("--input", input, "Tile directory")->required();
  label->add_option("--out", out, "Output directory")->required();
  label->add_option("--profile", o.profile, "Threshold profile JSON (default: built-in)");

  auto* syn = app.add_subcommand("synth", "Generate synthetic scenes with exact ground truth");
  syn->add_option("--out", out, "Output directory")->required();
  syn->add_option("--count", count, "Number of scenes");
  syn->add_option("--size", synth.size, "Scene size in pixels");
  syn->add_option("--floes", synth.n_floes, "Floes per scene");
  syn->add_option("--sheets", synth.n_sheets, "Thin-ice sheets per scene");
  syn->add_option("--haze-amplitude", synth.haze_amplitude, "Haze brightness 0..80");
  syn->add_option("--haze-coverage", synth.haze_coverage, "Hazed share of pixels");

  auto* split = app.add_subcommand("split", "Assign tiles to train and test");
  split->add_option("--manifest", manifest, "Input manifest")->required();
  split->add_option("--out", out, "Output manifest")->required();
  split->add_option("--ratio", o.ratio, "Train share in (0, 1)");
  split->add_flag("--by-scene", o.by_scene, "Keep all tiles of a scene on one side");

  auto* train = app.add_subcommand("train", "Train the U-Net on the train split");
  train->add_option("--manifest", manifest, "Split manifest")->required();
  train->add_option("--out", out, "Model file")->required();
  o.train_options(train);

  auto* predict = app.add_subcommand("predict", "Label tiles with a trained model");
  predict->add_option("--model", model, "Model file")->required();
  predict->add_option("--input", input, "Manifest or tile directory")->required();
  predict->add_option("--out", out, "Output directory")->required();
  predict->add_option("--split", split_name, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against truth labels");
  evaluate->add_option("--pred", pred, "Prediction directory")->required();
  evaluate->add_option("--truth", truth, "Truth directory")->required();
  evaluate->add_option("--manifest", manifest, "Manifest supplying cloud fractions");
  evaluate->add_option("--out", out, "Report JSON")->required();
  evaluate->add_option("--ssim-window", o.ssim_window, "block8 or gaussian11");

  auto* calibrate = app.add_subcommand("calibrate", "Serve the threshold calibration API");
  calibrate->add_option("--scenes", scenes, "Directory of PNG scenes")->required();
  calibrate->add_option("--host", host, "Listen address");
  calibrate->add_option("--port", port, "Listen port (0 picks one)");
  calibrate->add_option("--profile", o.profile, "Profile file read and written by the UI");
  calibrate->add_option("--ui", ui, "Static UI bundle directory");

  auto* pipe = app.add_subcommand("pipeline", "tile, filter, autolabel, split, train, predict and evaluate");
  pipe->add_option("--scenes", scenes, "Directory of PNG scenes");
  pipe->add_option("--truth", truth, "Ground-truth label images named like the scenes");
  pipe->add_option("--work", work, "Working directory for all artifacts");
  pipe->add_flag("--filter", filter_on, "Filter thin clouds and shadows before labelling");
  pipe->add_option("--size", o.size, "Tile size in pixels");
  pipe->add_option("--ratio", o.ratio, "Train share in (0, 1)");
  pipe->add_flag("--by-scene", o.by_scene, "Split by scene");
  pipe->add_option("--profile", o.profile, "Threshold profile JSON");
  pipe->add_option("--ssim-window", o.ssim_window, "block8 or gaussian11");
  o.filter_options(pipe);
  o.train_options(pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cerr, std::cerr);
    return code == 0 ? 0 : 2;
  }

  const LogFn log = [quiet](const std::string& msg) {
    if (!quiet) std::cerr << msg << "\n";
  };
  try {
    RunConfig c;
    if (!config_path.empty()) c = load_run_config(config_path);
    if (seed) c.seed = *seed;
    c.threads = threads;
    o.apply(c);
    if (filter_on) c.apply_filter = true;
    if (!scenes.empty()) c.scene_dir = scenes;
    if (!truth.empty()) c.truth_dir = truth;
    if (!work.empty()) c.work_dir = work;
    set_thread_count(c.threads);

    if (*tile) {
      run_tile(input, out, c, truth, log);
    } else if (*filter) {
      run_filter(input, out, c, log);
    } else if (*label) {
      run_autolabel(input, out, c, log);
    } else if (*syn) {
      run_synth(out, count, synth, c, log);
    } else if (*split) {
      const auto m = run_split(manifest, out, c);
      log("train " + std::to_string(m.count(Split::Train)) + ", test " + std::to_string(m.count(Split::Test)));
    } else if (*train) {
      run_train(manifest, out, c, log);
    } else if (*predict) {
      std::optional<Split> s;
      if (split_name != "all") s = split_from_string(split_name);
      run_predict(model, input, out, s, log);
    } else if (*evaluate) {
      const auto r = run_evaluate(pred, truth, manifest, out, c);
      log("accuracy " + r["overall"]["accuracy"].dump() + ", ssim " + r["ssim_mean"].dump());
    } else if (*calibrate) {
      return serve(c, scenes, host, port, o.profile.value_or(""), ui, log);
    } else if (*pipe) {
      const auto r = run_pipeline(c, log);
      log("accuracy " + r["overall"]["accuracy"].dump() + ", ssim " + r["ssim_mean"].dump());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"floeseg"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace floeseg
