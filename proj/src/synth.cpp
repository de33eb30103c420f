#include "floeseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "floeseg/error.hpp"
#include "floeseg/rng.hpp"

namespace floeseg {

namespace {

constexpr double kHazeRamp = 0.08;

bool nested(const VRange& r, int lo, int hi) { return r.lo >= lo && r.hi <= hi && r.lo <= r.hi; }

struct Blob {
  double cx, cy, rx, ry, angle;
  double a2, p2, a3, p3;
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (dx * c + dy * s) / rx;
    const double v = (-dx * s + dy * c) / ry;
    const double theta = std::atan2(v, u);
    const double wobble = 1.0 + a2 * std::cos(2 * theta + p2) + a3 * std::cos(3 * theta + p3);
    return u * u + v * v < wobble * wobble;
  }
};

Blob random_blob(Rng& rng, double size, double r_min, double r_max) {
  std::uniform_real_distribution<double> pos(0.0, size);
  std::uniform_real_distribution<double> rad(r_min, r_max);
  std::uniform_real_distribution<double> ang(0.0, std::numbers::pi * 2);
  std::uniform_real_distribution<double> amp(0.0, 0.18);
  const double r = rad(rng);
  std::uniform_real_distribution<double> aspect(0.6, 1.0);
  return {pos(rng), pos(rng), r, r * aspect(rng), ang(rng), amp(rng), ang(rng), amp(rng), ang(rng)};
}

void paint(std::vector<std::uint8_t>& ids, std::vector<int>& region, int size, const Blob& b, IceClass cls, int id) {
  const int x0 = std::max(0, static_cast<int>(b.cx - 1.5 * b.rx));
  const int x1 = std::min(size - 1, static_cast<int>(b.cx + 1.5 * b.rx));
  const int y0 = std::max(0, static_cast<int>(b.cy - 1.5 * b.rx));
  const int y1 = std::min(size - 1, static_cast<int>(b.cy + 1.5 * b.rx));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (b.contains(x + 0.5, y + 0.5)) {
        ids[static_cast<std::size_t>(y) * size + x] = static_cast<std::uint8_t>(cls);
        region[static_cast<std::size_t>(y) * size + x] = id;
      }
    }
  }
}

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.size < 8) throw Error(ErrorCode::BadConfig, "synth size must be >= 8");
  if (cfg.n_floes < 0 || cfg.n_sheets < 0) throw Error(ErrorCode::BadConfig, "object counts must be >= 0");
  if (!nested(cfg.floe_v_range, 205, 255)) throw Error(ErrorCode::BadConfig, "floe_v_range must lie in 205..255");
  if (!nested(cfg.thin_ice_v_range, 31, 204)) throw Error(ErrorCode::BadConfig, "thin_ice_v_range must lie in 31..204");
  if (!nested(cfg.water_v_range, 0, 30)) throw Error(ErrorCode::BadConfig, "water_v_range must lie in 0..30");
  if (cfg.haze_amplitude < 0 || cfg.haze_amplitude > 80) throw Error(ErrorCode::BadConfig, "haze_amplitude must be in 0..80");
  if (!(cfg.haze_coverage >= 0.0 && cfg.haze_coverage <= 1.0)) {
    throw Error(ErrorCode::BadConfig, "haze_coverage must be in [0, 1]");
  }
}

std::vector<double> smooth_field(int size, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x4a7e}));
  std::uniform_real_distribution<double> pos(-0.25 * size, 1.25 * size);
  std::uniform_real_distribution<double> sig(0.25 * size, 0.5 * size);
  std::uniform_real_distribution<double> weight(0.5, 1.0);
  struct Bump { double x, y, s, w; };
  std::vector<Bump> bumps(5);
  for (auto& b : bumps) b = {pos(rng), pos(rng), sig(rng), weight(rng)};
  std::vector<double> f(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = 0.0;
      for (const auto& b : bumps) {
        const double dx = x - b.x, dy = y - b.y;
        v += b.w * std::exp(-(dx * dx + dy * dy) / (2 * b.s * b.s));
      }
      f[static_cast<std::size_t>(y) * size + x] = v;
    }
  }
  const auto [mn, mx] = std::minmax_element(f.begin(), f.end());
  const double lo = *mn, span = std::max(*mx - *mn, 1e-12);
  for (auto& v : f) v = (v - lo) / span;
  return f;
}

SynthScene generate(const SynthConfig& cfg) {
  validate(cfg);
  const int n = cfg.size;
  const std::size_t px = static_cast<std::size_t>(n) * n;
  const double scale = n / 256.0;
  Rng rng(derive_seed(cfg.seed, {0x5ce4e}));

  std::vector<std::uint8_t> ids(px, static_cast<std::uint8_t>(IceClass::Water));
  std::vector<int> region(px, 0);
  std::vector<IceClass> region_class{IceClass::Water};

  for (int i = 0; i < cfg.n_sheets; ++i) {
    region_class.push_back(IceClass::Thin);
    paint(ids, region, n, random_blob(rng, n, 25 * scale, 60 * scale), IceClass::Thin,
          static_cast<int>(region_class.size()) - 1);
  }
  for (int i = 0; i < cfg.n_floes; ++i) {
    region_class.push_back(IceClass::Thick);
    paint(ids, region, n, random_blob(rng, n, 6 * scale, 22 * scale), IceClass::Thick,
          static_cast<int>(region_class.size()) - 1);
  }

  auto range_of = [&](IceClass c) -> const VRange& {
    switch (c) {
      case IceClass::Thick: return cfg.floe_v_range;
      case IceClass::Thin: return cfg.thin_ice_v_range;
      default: return cfg.water_v_range;
    }
  };
  std::vector<int> base(region_class.size());
  for (std::size_t r = 0; r < base.size(); ++r) {
    const auto& vr = range_of(region_class[r]);
    base[r] = std::uniform_int_distribution<int>(vr.lo, vr.hi)(rng);
  }

  std::uniform_int_distribution<int> noise(-3, 3);
  std::uniform_int_distribution<int> tint(0, 3);
  std::vector<std::uint8_t> clean(px * 3);
  for (std::size_t i = 0; i < px; ++i) {
    const auto& vr = range_of(static_cast<IceClass>(ids[i]));
    const int v = std::clamp(base[static_cast<std::size_t>(region[i])] + noise(rng), vr.lo, vr.hi);
    clean[3 * i] = static_cast<std::uint8_t>(std::max(0, v - tint(rng)));
    clean[3 * i + 1] = static_cast<std::uint8_t>(std::max(0, v - tint(rng)));
    clean[3 * i + 2] = static_cast<std::uint8_t>(v);
  }

  std::vector<std::uint8_t> hazed = clean;
  std::vector<std::uint8_t> covered(px, 0);
  if (cfg.haze_amplitude > 0 && cfg.haze_coverage > 0.0) {
    const auto field = smooth_field(n, cfg.seed);
    double cut = -1.0;
    if (cfg.haze_coverage < 1.0) {
      auto sorted = field;
      const auto k = static_cast<std::size_t>(std::floor((1.0 - cfg.haze_coverage) * static_cast<double>(px)));
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(std::min(k, px - 1)), sorted.end());
      cut = k >= px ? 2.0 : sorted[std::min(k, px - 1)];
    }
    for (std::size_t i = 0; i < px; ++i) {
      if (!(field[i] > cut)) continue;
      covered[i] = 255;
      const double w = std::min(1.0, (field[i] - cut) / kHazeRamp);
      const int add = std::max(1, static_cast<int>(std::lround(cfg.haze_amplitude * w)));
      for (int c = 0; c < 3; ++c) hazed[3 * i + c] = static_cast<std::uint8_t>(std::min(255, clean[3 * i + c] + add));
    }
  }

  return {Raster(n, n, 3, std::move(clean)), Raster(n, n, 3, std::move(hazed)), LabelMap(n, n, std::move(ids)),
          BinaryMask(n, n, std::move(covered))};
}

nlohmann::json synth_to_json(const SynthConfig& c) {
  return {{"size", c.size},
          {"n_floes", c.n_floes},
          {"n_sheets", c.n_sheets},
          {"floe_v_range", {c.floe_v_range.lo, c.floe_v_range.hi}},
          {"thin_ice_v_range", {c.thin_ice_v_range.lo, c.thin_ice_v_range.hi}},
          {"water_v_range", {c.water_v_range.lo, c.water_v_range.hi}},
          {"haze_amplitude", c.haze_amplitude},
          {"haze_coverage", c.haze_coverage},
          {"seed", c.seed}};
}

SynthConfig synth_from_json(const nlohmann::json& j) {
  SynthConfig c;
  auto range = [&](const char* key, VRange& r) {
    if (j.contains(key)) r = {j[key].at(0).get<int>(), j[key].at(1).get<int>()};
  };
  try {
    c.size = j.value("size", c.size);
    c.n_floes = j.value("n_floes", c.n_floes);
    c.n_sheets = j.value("n_sheets", c.n_sheets);
    range("floe_v_range", c.floe_v_range);
    range("thin_ice_v_range", c.thin_ice_v_range);
    range("water_v_range", c.water_v_range);
    c.haze_amplitude = j.value("haze_amplitude", c.haze_amplitude);
    c.haze_coverage = j.value("haze_coverage", c.haze_coverage);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("synth config: ") + e.what());
  }
  validate(c);
  return c;
}

}  // namespace floeseg
