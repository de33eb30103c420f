#include "floeseg/unet.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "floeseg/error.hpp"
#include "floeseg/optim.hpp"
#include "floeseg/parallel.hpp"
#include "floeseg/rng.hpp"

namespace floeseg {

using nn::Mode;
using Index = Eigen::Index;

namespace {
constexpr float kHeadInitScale = 0.1f;
}  // namespace

void validate(const UNetConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::BadConfig, what); };
  if (cfg.depth < 1 || cfg.depth > 8) fail("depth must be in 1..8");
  if (cfg.base_width < 1) fail("base_width must be >= 1");
  if (cfg.classes != kClassCount) fail("classes must be 3");
  if (cfg.input_size < 1 || cfg.input_size % (1 << cfg.depth) != 0) {
    fail("input_size " + std::to_string(cfg.input_size) + " is not divisible by 2^depth");
  }
  if (cfg.dropout_schedule.size() != static_cast<std::size_t>(cfg.depth) + 1) {
    fail("dropout_schedule needs depth + 1 rates");
  }
  for (double r : cfg.dropout_schedule) {
    if (!(r >= 0.0 && r < 1.0)) fail("dropout rates must be in [0, 1)");
  }
  if (cfg.batch_size < 1) fail("batch_size must be >= 1");
  if (cfg.epochs < 1) fail("epochs must be >= 1");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) fail("learning_rate must be positive");
}

nlohmann::json unet_config_to_json(const UNetConfig& c) {
  return {{"input_size", c.input_size}, {"base_width", c.base_width},         {"depth", c.depth},
          {"classes", c.classes},       {"dropout_schedule", c.dropout_schedule}, {"batch_size", c.batch_size},
          {"epochs", c.epochs},         {"seed", c.seed},                     {"learning_rate", c.learning_rate}};
}

UNetConfig unet_config_from_json(const nlohmann::json& j, UNetConfig c) {
  try {
    c.input_size = j.value("input_size", c.input_size);
    c.base_width = j.value("base_width", c.base_width);
    c.depth = j.value("depth", c.depth);
    c.classes = j.value("classes", c.classes);
    c.dropout_schedule = j.value("dropout_schedule", c.dropout_schedule);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("unet config: ") + e.what());
  }
  validate(c);
  return c;
}

std::vector<LayerShape> layer_shapes(const UNetConfig& cfg) {
  validate(cfg);
  const int d = cfg.depth, base = cfg.base_width;
  auto width = [base](int level) { return base << level; };
  std::vector<LayerShape> s;
  for (int i = 0; i < d; ++i) {
    s.push_back({LayerKind::Conv3, i == 0 ? 3 : width(i - 1), width(i)});
    s.push_back({LayerKind::Conv3, width(i), width(i)});
  }
  s.push_back({LayerKind::Conv3, width(d - 1), width(d)});
  s.push_back({LayerKind::Conv3, width(d), width(d)});
  for (int level = d - 1; level >= 0; --level) {
    s.push_back({LayerKind::Up2, width(level + 1), width(level)});
    s.push_back({LayerKind::Conv3, 2 * width(level), width(level)});
    s.push_back({LayerKind::Conv3, width(level), width(level)});
  }
  s.push_back({LayerKind::Conv1, base, cfg.classes});
  return s;
}

namespace {

int kernel_size(LayerKind k) { return k == LayerKind::Conv3 ? 3 : k == LayerKind::Up2 ? 2 : 1; }

std::vector<Index> weight_shape(const LayerShape& s) {
  const int k = kernel_size(s.kind);
  if (s.kind == LayerKind::Up2) return {s.in_ch, s.out_ch, 2, 2};
  return {s.out_ch, s.in_ch, k, k};
}

}  // namespace

std::size_t parameter_count(const UNetConfig& cfg) {
  std::size_t n = 0;
  for (const auto& s : layer_shapes(cfg)) {
    const auto k = static_cast<std::size_t>(kernel_size(s.kind));
    n += k * k * static_cast<std::size_t>(s.in_ch) * static_cast<std::size_t>(s.out_ch) + static_cast<std::size_t>(s.out_ch);
  }
  return n;
}

std::size_t UNetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<TensorF*> UNetParams::tensors() {
  std::vector<TensorF*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const TensorF*> UNetParams::tensors() const {
  std::vector<const TensorF*> out;
  for (const auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

bool operator==(const UNetParams& a, const UNetParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto &x = a.layers[i], &y = b.layers[i];
    if (x.kind != y.kind || !(x.weight == y.weight) || !(x.bias == y.bias)) return false;
  }
  return true;
}

UNetParams build(const UNetConfig& cfg) {
  UNetParams p;
  Rng rng(derive_seed(cfg.seed, {0x1a7e5}));
  for (const auto& s : layer_shapes(cfg)) {
    const int k = kernel_size(s.kind);
    // An up-conv output pixel sees exactly one input pixel per channel.
    const Index fan_in = s.kind == LayerKind::Up2 ? s.in_ch : static_cast<Index>(s.in_ch) * k * k;
    p.layers.push_back({s.kind, nn::init_params<float>(weight_shape(s), fan_in, rng), TensorF({s.out_ch})});
  }
  // Shrunk head: the untrained net predicts close to the uniform distribution.
  p.layers.back().weight.values() *= kHeadInitScale;
  return p;
}

UNetParams zero_params(const UNetConfig& cfg) {
  UNetParams p;
  for (const auto& s : layer_shapes(cfg)) p.layers.push_back({s.kind, TensorF(weight_shape(s)), TensorF({s.out_ch})});
  return p;
}

namespace {

struct BlockTrace {
  TensorF in;
  TensorF a1;
  nn::DropoutResult<float> drop;
  TensorF a2;
};

struct Trace {
  std::vector<BlockTrace> enc;
  std::vector<std::vector<std::uint8_t>> pool_argmax;
  BlockTrace bottleneck;
  std::vector<TensorF> up_in;
  std::vector<BlockTrace> dec;  // deepest first
  TensorF head_in;
};

std::uint64_t dropout_seed(const UNetConfig& cfg, std::uint64_t step, std::size_t layer) {
  return derive_seed(cfg.seed, {0xd409, step, static_cast<std::uint64_t>(layer)});
}

/// conv3x3+ReLU, dropout, conv3x3+ReLU using layers la and la+1.
TensorF block_forward(const UNetParams& p, std::size_t la, TensorF x, double rate, Mode mode, std::uint64_t seed,
                      BlockTrace* t) {
  const auto& a = p.layers[la];
  const auto& b = p.layers[la + 1];
  TensorF a1 = nn::relu(nn::conv2d(x, a.weight, a.bias));
  auto drop = nn::dropout(a1, rate, mode, seed);
  TensorF a2 = nn::relu(nn::conv2d(drop.y, b.weight, b.bias));
  if (t) {
    t->in = std::move(x);
    t->a1 = std::move(a1);
    t->drop = std::move(drop);
    t->a2 = a2;
  }
  return a2;
}

TensorF block_backward(const UNetParams& p, std::size_t la, BlockTrace& t, const TensorF& dy, Gradients& g,
                       bool need_dx) {
  const auto& a = p.layers[la];
  const auto& b = p.layers[la + 1];
  auto gb = nn::conv2d_backward(t.drop.y, b.weight, nn::relu_backward(t.a2, dy));
  g.dw[la + 1] = std::move(gb.dw);
  g.db[la + 1] = std::move(gb.db);
  const TensorF d1 = nn::relu_backward(t.a1, nn::dropout_backward(gb.dx, t.drop.scale));
  auto ga = nn::conv2d_backward(t.in, a.weight, d1, nn::Padding::Same, need_dx);
  g.dw[la] = std::move(ga.dw);
  g.db[la] = std::move(ga.db);
  return std::move(ga.dx);
}

TensorF run_forward(const UNetParams& p, const UNetConfig& cfg, const TensorF& x, Mode mode, std::uint64_t step,
                    Trace* trace) {
  const int d = cfg.depth;
  if (p.layers.size() != static_cast<std::size_t>(5 * d + 3)) {
    throw Error(ErrorCode::ShapeMismatch, "parameter list does not match the configured depth");
  }
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg.input_size || x.dim(3) != cfg.input_size) {
    throw Error(ErrorCode::ShapeMismatch, "input " + shape_string(x.shape()) + " is not [B,3," +
                                              std::to_string(cfg.input_size) + "," + std::to_string(cfg.input_size) + "]");
  }
  if (trace) {
    trace->enc.resize(static_cast<std::size_t>(d));
    trace->pool_argmax.resize(static_cast<std::size_t>(d));
    trace->up_in.resize(static_cast<std::size_t>(d));
    trace->dec.resize(static_cast<std::size_t>(d));
  }
  const auto& rates = cfg.dropout_schedule;
  std::vector<TensorF> skips(static_cast<std::size_t>(d));
  TensorF cur = x;
  for (int i = 0; i < d; ++i) {
    const auto la = static_cast<std::size_t>(2 * i);
    const auto ui = static_cast<std::size_t>(i);
    skips[ui] = block_forward(p, la, std::move(cur), rates[ui], mode, dropout_seed(cfg, step, la),
                              trace ? &trace->enc[ui] : nullptr);
    auto pooled = nn::maxpool2(skips[ui]);
    if (trace) trace->pool_argmax[ui] = std::move(pooled.argmax);
    cur = std::move(pooled.y);
  }
  const auto lb = static_cast<std::size_t>(2 * d);
  cur = block_forward(p, lb, std::move(cur), rates[static_cast<std::size_t>(d)], mode, dropout_seed(cfg, step, lb),
                      trace ? &trace->bottleneck : nullptr);
  for (int j = 0; j < d; ++j) {
    const int level = d - 1 - j;
    const auto lu = static_cast<std::size_t>(2 * d + 2 + 3 * j);
    const auto& up = p.layers[lu];
    TensorF u = nn::upconv2(cur, up.weight, up.bias);
    const auto& skip = nn::crop_to(skips[static_cast<std::size_t>(level)], u);
    TensorF c = nn::concat(u, skip);
    if (trace) {
      trace->up_in[static_cast<std::size_t>(j)] = std::move(cur);
    } else {
      skips[static_cast<std::size_t>(level)] = TensorF();
    }
    cur = block_forward(p, lu + 1, std::move(c), rates[static_cast<std::size_t>(level)], mode,
                        dropout_seed(cfg, step, lu + 1), trace ? &trace->dec[static_cast<std::size_t>(j)] : nullptr);
  }
  const auto& head = p.layers.back();
  TensorF logits = nn::conv2d(cur, head.weight, head.bias);
  if (trace) trace->head_in = std::move(cur);
  return logits;
}

Gradients run_backward(const UNetParams& p, const UNetConfig& cfg, Trace& t, const TensorF& dlogits) {
  const int d = cfg.depth;
  Gradients g;
  g.dw.resize(p.layers.size());
  g.db.resize(p.layers.size());

  const std::size_t lh = p.layers.size() - 1;
  auto gh = nn::conv2d_backward(t.head_in, p.layers[lh].weight, dlogits);
  g.dw[lh] = std::move(gh.dw);
  g.db[lh] = std::move(gh.db);
  t.head_in = TensorF();
  TensorF dcur = std::move(gh.dx);

  std::vector<TensorF> dskip(static_cast<std::size_t>(d));
  for (int j = d - 1; j >= 0; --j) {
    const int level = d - 1 - j;
    const auto uj = static_cast<std::size_t>(j);
    const auto lu = static_cast<std::size_t>(2 * d + 2 + 3 * j);
    const TensorF dc = block_backward(p, lu + 1, t.dec[uj], dcur, g, true);
    t.dec[uj] = BlockTrace();
    const Index up_channels = p.layers[lu].weight.dim(1);
    auto [du, ds] = nn::split_channels(dc, up_channels);
    dskip[static_cast<std::size_t>(level)] = std::move(ds);
    auto gu = nn::upconv2_backward(t.up_in[uj], p.layers[lu].weight, du);
    t.up_in[uj] = TensorF();
    g.dw[lu] = std::move(gu.dw);
    g.db[lu] = std::move(gu.db);
    dcur = std::move(gu.dx);
  }

  const auto lb = static_cast<std::size_t>(2 * d);
  dcur = block_backward(p, lb, t.bottleneck, dcur, g, true);
  t.bottleneck = BlockTrace();

  for (int i = d - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    TensorF da2 = nn::maxpool2_backward(dcur, t.pool_argmax[ui], t.enc[ui].a2.shape());
    da2.values() += dskip[ui].values();
    dskip[ui] = TensorF();
    dcur = block_backward(p, static_cast<std::size_t>(2 * i), t.enc[ui], da2, g, i > 0);
    t.enc[ui] = BlockTrace();
  }
  return g;
}

}  // namespace

TensorF forward(const UNetParams& p, const UNetConfig& cfg, const TensorF& x, Mode mode, std::uint64_t step) {
  validate(cfg);
  return run_forward(p, cfg, x, mode, step, nullptr);
}

std::vector<LabelMap> argmax_labels(const TensorF& logits) {
  if (logits.rank() != 4) throw Error(ErrorCode::ShapeMismatch, "logits must be [B,K,H,W]");
  const Index k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  std::vector<LabelMap> out;
  for (Index b = 0; b < logits.dim(0); ++b) {
    const auto z = logits.sample(b);
    std::vector<std::uint8_t> ids(static_cast<std::size_t>(h * w));
    for (Index px = 0; px < h * w; ++px) {
      Index best = 0;
      for (Index c = 1; c < k; ++c) {
        if (z(c, px) > z(best, px)) best = c;
      }
      ids[static_cast<std::size_t>(px)] = static_cast<std::uint8_t>(best);
    }
    out.emplace_back(static_cast<int>(w), static_cast<int>(h), std::move(ids));
  }
  return out;
}

TrainStep loss_and_gradients(const UNetParams& p, const UNetConfig& cfg, const TensorF& x, const TensorF& target,
                             std::uint64_t step) {
  validate(cfg);
  Trace trace;
  const TensorF logits = run_forward(p, cfg, x, Mode::Train, step, &trace);
  auto loss = nn::softmax_ce(logits, target);
  TrainStep out;
  out.loss = loss.loss;
  const Index k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  std::size_t correct = 0;
  for (Index b = 0; b < logits.dim(0); ++b) {
    const auto z = logits.sample(b);
    const auto t = target.sample(b);
    for (Index px = 0; px < hw; ++px) {
      Index best = 0, truth = 0;
      for (Index c = 1; c < k; ++c) {
        if (z(c, px) > z(best, px)) best = c;
        if (t(c, px) > t(truth, px)) truth = c;
      }
      correct += best == truth;
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(logits.dim(0) * hw);
  if (std::isfinite(out.loss)) out.grads = run_backward(p, cfg, trace, loss.grad);
  return out;
}

TrainResult train(const std::vector<LabeledTile>& tiles, const UNetConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  if (tiles.empty()) throw Error(ErrorCode::EmptyTrainSet, "no training tiles");
  TrainResult r{build(cfg), {}};
  nn::AdamState<float> adam;
  adam.learning_rate = cfg.learning_rate;
  std::vector<std::size_t> all(tiles.size());
  std::iota(all.begin(), all.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double loss_sum = 0.0, acc_sum = 0.0;
    std::size_t seen = 0;
    const auto plan = batch_plan(all, Split::Train, cfg.batch_size, cfg.seed, epoch);
    for (std::size_t bi = 0; bi < plan.size(); ++bi) {
      const Batch batch = make_batch(tiles, plan[bi]);
      auto step = loss_and_gradients(r.params, cfg, batch.images, batch.targets, static_cast<std::uint64_t>(r.history.steps));
      bool finite = std::isfinite(step.loss);
      for (std::size_t i = 0; finite && i < step.grads.dw.size(); ++i) {
        finite = step.grads.dw[i].all_finite() && step.grads.db[i].all_finite();
      }
      if (!finite) {
        throw Error(ErrorCode::NonFiniteLoss, "non-finite loss in epoch " + std::to_string(epoch) + " batch " +
                                                  std::to_string(bi) + "; last good epoch " + std::to_string(epoch - 1));
      }
      std::vector<const TensorF*> grads;
      for (std::size_t i = 0; i < step.grads.dw.size(); ++i) {
        grads.push_back(&step.grads.dw[i]);
        grads.push_back(&step.grads.db[i]);
      }
      nn::adam_step(r.params.tensors(), grads, adam);
      ++r.history.steps;
      const auto n = plan[bi].size();
      loss_sum += step.loss * static_cast<double>(n);
      acc_sum += step.accuracy * static_cast<double>(n);
      seen += n;
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), acc_sum / static_cast<double>(seen),
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    r.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return r;
}

TrainResult train(const DatasetManifest& m, const UNetConfig& cfg, const EpochCallback& on_epoch) {
  const auto members = split_members(m, Split::Train);
  if (members.empty()) throw Error(ErrorCode::EmptyTrainSet, "manifest has no train tiles");
  std::vector<LabeledTile> tiles;
  tiles.reserve(members.size());
  for (auto i : members) tiles.push_back(load_entry(m, i));
  return train(tiles, cfg, on_epoch);
}

LabelMap predict(const UNetParams& p, const UNetConfig& cfg, const Raster& rgb) {
  validate(cfg);
  if (rgb.channels() != 3) throw Error(ErrorCode::WrongChannelCount, "prediction needs an RGB raster");
  const int s = cfg.input_size;
  if (rgb.width() % s != 0 || rgb.height() % s != 0 || rgb.width() == 0 || rgb.height() == 0) {
    throw Error(ErrorCode::BadDimensions, std::to_string(rgb.width()) + "x" + std::to_string(rgb.height()) +
                                              " is not a multiple of the " + std::to_string(s) + " input size");
  }
  const int cols = rgb.width() / s, rows = rgb.height() / s;
  const Index count = static_cast<Index>(cols) * rows;
  // Fixed grouping keeps the GEMM shapes, and so the rounding, independent of the thread count.
  constexpr Index group = 8;
  const Index per = 3 * static_cast<Index>(s) * s;
  std::vector<std::uint8_t> ids(rgb.pixel_count());
  for (Index start = 0; start < count; start += group) {
    const Index n = std::min(group, count - start);
    TensorF x({n, 3, s, s});
    for (Index i = 0; i < n; ++i) {
      const int r = static_cast<int>((start + i) / cols), c = static_cast<int>((start + i) % cols);
      x.values().segment(i * per, per) = image_tensor(rgb.crop(c * s, r * s, s, s)).values();
    }
    const auto labels = argmax_labels(run_forward(p, cfg, x, Mode::Eval, 0, nullptr));
    for (Index i = 0; i < n; ++i) {
      const int r = static_cast<int>((start + i) / cols), c = static_cast<int>((start + i) % cols);
      const auto& tile = labels[static_cast<std::size_t>(i)];
      for (int y = 0; y < s; ++y) {
        for (int xx = 0; xx < s; ++xx) {
          ids[static_cast<std::size_t>(r * s + y) * static_cast<std::size_t>(rgb.width()) +
              static_cast<std::size_t>(c * s + xx)] = tile[static_cast<std::size_t>(y * s + xx)];
        }
      }
    }
  }
  return LabelMap(rgb.width(), rgb.height(), std::move(ids));
}

namespace {

constexpr char kMagic[4] = {'F', 'S', 'E', 'G'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::CorruptModel, "model file is truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const UNetParams& p, const UNetConfig& cfg) {
  validate(cfg);
  const auto shapes = layer_shapes(cfg);
  if (p.layers.size() != shapes.size()) throw Error(ErrorCode::ShapeMismatch, "parameters do not match the config");
  Writer w;
  for (char c : kMagic) w.bytes.push_back(static_cast<std::uint8_t>(c));
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(cfg.input_size));
  w.u32(static_cast<std::uint32_t>(cfg.base_width));
  w.u32(static_cast<std::uint32_t>(cfg.depth));
  w.u32(static_cast<std::uint32_t>(cfg.classes));
  w.u32(static_cast<std::uint32_t>(cfg.dropout_schedule.size()));
  for (double r : cfg.dropout_schedule) w.f64(r);
  w.u32(static_cast<std::uint32_t>(cfg.batch_size));
  w.u32(static_cast<std::uint32_t>(cfg.epochs));
  w.u64(cfg.seed);
  w.f64(cfg.learning_rate);
  for (const TensorF* t : p.tensors()) {
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (auto e : t->shape()) w.u32(static_cast<std::uint32_t>(e));
    for (Index i = 0; i < t->size(); ++i) w.f32((*t)[i]);
  }
  return std::move(w.bytes);
}

Model deserialize_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw Error(ErrorCode::CorruptModel, "bad magic, not a model file");
  }
  Reader r(bytes);
  r.u32();  // magic
  const auto version = r.u32();
  if (version != kModelVersion) {
    throw Error(ErrorCode::CorruptModel, "model format version " + std::to_string(version) + ", expected " +
                                             std::to_string(kModelVersion));
  }
  UNetConfig cfg;
  cfg.input_size = static_cast<int>(r.u32());
  cfg.base_width = static_cast<int>(r.u32());
  cfg.depth = static_cast<int>(r.u32());
  cfg.classes = static_cast<int>(r.u32());
  const auto n_rates = r.u32();
  if (n_rates > 64) throw Error(ErrorCode::CorruptModel, "implausible dropout schedule length");
  cfg.dropout_schedule.clear();
  for (std::uint32_t i = 0; i < n_rates; ++i) cfg.dropout_schedule.push_back(r.f64());
  cfg.batch_size = static_cast<int>(r.u32());
  cfg.epochs = static_cast<int>(r.u32());
  cfg.seed = r.u64();
  cfg.learning_rate = r.f64();
  try {
    validate(cfg);
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptModel, std::string("config block: ") + e.what());
  }
  Model m{zero_params(cfg), cfg};
  for (TensorF* t : m.params.tensors()) {
    const auto rank = r.u32();
    if (rank != static_cast<std::uint32_t>(t->rank())) throw Error(ErrorCode::CorruptModel, "tensor rank mismatch");
    for (auto e : t->shape()) {
      if (r.u32() != static_cast<std::uint32_t>(e)) throw Error(ErrorCode::CorruptModel, "tensor extent mismatch");
    }
    for (Index i = 0; i < t->size(); ++i) (*t)[i] = r.f32();
  }
  if (!r.done()) throw Error(ErrorCode::CorruptModel, "trailing bytes after the last tensor");
  return m;
}

void save_model(const UNetParams& p, const UNetConfig& cfg, const std::filesystem::path& path) {
  const auto bytes = serialize_model(p, cfg);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace floeseg
