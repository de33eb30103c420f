#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "json.hpp"

#include "floeseg/colorseg.hpp"
#include "floeseg/dataset.hpp"
#include "floeseg/layers.hpp"
#include "floeseg/raster.hpp"
#include "floeseg/tensor.hpp"

namespace floeseg {

struct UNetConfig {
  int input_size = 256;
  int base_width = 16;
  int depth = 5;
  int classes = 3;
  /// One rate per encoder depth plus the bottleneck; the decoder mirrors it.
  std::vector<double> dropout_schedule{0.1, 0.1, 0.2, 0.3, 0.3, 0.3};
  int batch_size = 16;
  int epochs = 50;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;

  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

void validate(const UNetConfig& cfg);
nlohmann::json unet_config_to_json(const UNetConfig& cfg);
/// Missing keys keep their defaults.
UNetConfig unet_config_from_json(const nlohmann::json& j, UNetConfig base = {});

enum class LayerKind { Conv3, Up2, Conv1 };

struct ConvLayer {
  LayerKind kind = LayerKind::Conv3;
  TensorF weight;  // Conv: [Cout,Cin,k,k]; Up2: [Cin,Cout,2,2]
  TensorF bias;    // [Cout]
};

/// Layers in build order: per encoder level two 3x3 convs, two bottleneck
/// convs, then per decoder step (deepest first) up-conv and two 3x3 convs,
/// and the 1x1 head. 5 * depth + 3 layers in total.
struct UNetParams {
  std::vector<ConvLayer> layers;

  std::size_t parameter_count() const;
  std::vector<TensorF*> tensors();
  std::vector<const TensorF*> tensors() const;
  friend bool operator==(const UNetParams& a, const UNetParams& b);
};

struct LayerShape {
  LayerKind kind;
  int in_ch;
  int out_ch;
};
std::vector<LayerShape> layer_shapes(const UNetConfig& cfg);
/// Closed form: sum of k*k*Cin*Cout + Cout over all layers.
std::size_t parameter_count(const UNetConfig& cfg);

/// He-initialised parameters drawn from cfg.seed. The 1x1 head is scaled by
/// 0.1 so the untrained net starts near the uniform prediction.
UNetParams build(const UNetConfig& cfg);
UNetParams zero_params(const UNetConfig& cfg);

struct Gradients {
  std::vector<TensorF> dw;
  std::vector<TensorF> db;
};

/// Logits [B,classes,S,S]. Train mode draws dropout masks from
/// derive_seed(cfg.seed, {step, layer}); eval mode ignores step.
TensorF forward(const UNetParams& p, const UNetConfig& cfg, const TensorF& x, nn::Mode mode, std::uint64_t step = 0);

struct TrainStep {
  double loss = 0.0;
  double accuracy = 0.0;
  Gradients grads;
};

/// Forward in train mode, softmax cross-entropy and backward. Parameters are
/// not updated.
TrainStep loss_and_gradients(const UNetParams& p, const UNetConfig& cfg, const TensorF& x, const TensorF& target,
                             std::uint64_t step);

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double pixel_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::int64_t steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  UNetParams params;
  TrainHistory history;
};

/// cfg.epochs passes over batches fixed by batch_plan. Throws EmptyTrainSet
/// and NonFiniteLoss.
TrainResult train(const std::vector<LabeledTile>& tiles, const UNetConfig& cfg, const EpochCallback& on_epoch = {});
TrainResult train(const DatasetManifest& m, const UNetConfig& cfg, const EpochCallback& on_epoch = {});

/// Per-pixel argmax of [B,K,H,W] logits, lowest class wins ties.
std::vector<LabelMap> argmax_labels(const TensorF& logits);

/// Eval-mode prediction. The raster must equal input_size or tile into it
/// exactly; tiles are predicted independently and stitched.
LabelMap predict(const UNetParams& p, const UNetConfig& cfg, const Raster& rgb);

constexpr std::uint32_t kModelVersion = 1;

struct Model {
  UNetParams params;
  UNetConfig config;
};

std::vector<std::uint8_t> serialize_model(const UNetParams& p, const UNetConfig& cfg);
Model deserialize_model(const std::vector<std::uint8_t>& bytes);
void save_model(const UNetParams& p, const UNetConfig& cfg, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace floeseg
