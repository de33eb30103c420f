#include "floeseg/imgproc.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <array>

#include "floeseg/error.hpp"

namespace floeseg {

namespace {

void require_gray(const Raster& r, const char* op) {
  if (r.channels() != 1) throw Error(ErrorCode::WrongChannelCount, std::string(op) + " needs a single-channel raster");
}

void require_same_size(int w1, int h1, int w2, int h2, const char* op) {
  if (w1 != w2 || h1 != h2) throw Error(ErrorCode::DimensionMismatch, std::string(op) + " operands differ in size");
}

void require_level(int v, const char* what) {
  if (v < 0 || v > 255) throw Error(ErrorCode::BadRange, std::string(what) + " must be in 0..255");
}

// Round-half-up of num/den for num >= 0, den > 0.
std::int64_t round_ratio(std::int64_t num, std::int64_t den) { return (2 * num + den) / (2 * den); }

std::uint8_t normalize_sample(int v, int mn, int mx, int lo, int hi) {
  if (mx == mn) return static_cast<std::uint8_t>(lo);
  return static_cast<std::uint8_t>(lo + round_ratio(static_cast<std::int64_t>(v - mn) * (hi - lo), mx - mn));
}

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

}  // namespace

BinaryMask::BinaryMask(int width, int height, bool value)
    : width_(width), height_(height),
      data_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), value ? 255 : 0) {
  if (width < 1 || height < 1) throw Error(ErrorCode::BadDimensions, "mask must be at least 1x1");
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1) throw Error(ErrorCode::BadDimensions, "mask must be at least 1x1");
  if (data_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::DimensionMismatch, "mask data length != width*height");
  }
  for (auto v : data_) {
    if (v != 0 && v != 255) throw Error(ErrorCode::BadRange, "mask samples must be 0 or 255");
  }
}

BinaryMask::BinaryMask(const Raster& gray)
    : BinaryMask(gray.width(), gray.height(), (require_gray(gray, "BinaryMask"), gray.bytes())) {}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{255}));
}

Raster threshold(const Raster& gray, ThresholdMode mode, int t, int maxval) {
  require_gray(gray, "threshold");
  require_level(t, "threshold level");
  require_level(maxval, "threshold maxval");
  std::vector<std::uint8_t> out(gray.pixel_count());
  const auto in = gray.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int g = in[i];
    switch (mode) {
      case ThresholdMode::Binary: out[i] = g > t ? maxval : 0; break;
      case ThresholdMode::BinaryInv: out[i] = g > t ? 0 : maxval; break;
      case ThresholdMode::Truncate: out[i] = static_cast<std::uint8_t>(std::min(g, t)); break;
    }
  }
  return Raster(gray.width(), gray.height(), 1, std::move(out));
}

std::vector<std::uint64_t> histogram(const Raster& gray) {
  require_gray(gray, "histogram");
  std::vector<std::uint64_t> h(256, 0);
  for (auto v : gray.data()) ++h[v];
  return h;
}

int otsu_level(const std::vector<std::uint64_t>& hist) {
  if (hist.size() != 256) throw Error(ErrorCode::BadRange, "histogram must have 256 bins");
  using boost::multiprecision::int128_t;
  using boost::multiprecision::int256_t;
  std::int64_t total = 0;
  std::int64_t total_sum = 0;
  int distinct = 0;
  int only_value = 0;
  for (int v = 0; v < 256; ++v) {
    const auto n = static_cast<std::int64_t>(hist[v]);
    total += n;
    total_sum += n * v;
    if (n > 0) {
      ++distinct;
      only_value = v;
    }
  }
  if (distinct <= 1) return only_value;

  // sigma_b^2(t) * N^2 = (N*s0 - S*n0)^2 / (n0*n1); candidates are compared
  // exactly by cross-multiplication.
  int best = 0;
  int256_t best_num = 0;
  int256_t best_den = 1;
  std::int64_t n0 = 0;
  std::int64_t s0 = 0;
  for (int t = 0; t < 255; ++t) {
    n0 += static_cast<std::int64_t>(hist[t]);
    s0 += static_cast<std::int64_t>(hist[t]) * t;
    const std::int64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const int128_t diff = int128_t(total) * s0 - int128_t(total_sum) * n0;
    const int256_t num = int256_t(diff) * int256_t(diff);
    const int256_t den = int256_t(n0) * int256_t(n1);
    if (num * best_den > best_num * den) {
      best = t;
      best_num = num;
      best_den = den;
    }
  }
  return best;
}

int otsu_level(const Raster& gray) { return otsu_level(histogram(gray)); }

Raster minmax_normalize(const Raster& gray, int lo, int hi) {
  require_gray(gray, "minmax_normalize");
  return minmax_normalize(gray, lo, hi, BinaryMask(gray.width(), gray.height(), true));
}

Raster minmax_normalize(const Raster& gray, int lo, int hi, const BinaryMask& region) {
  require_gray(gray, "minmax_normalize");
  require_level(lo, "lo");
  require_level(hi, "hi");
  if (lo > hi) throw Error(ErrorCode::BadRange, "minmax_normalize needs lo <= hi");
  require_same_size(gray.width(), gray.height(), region.width(), region.height(), "minmax_normalize");
  const auto in = gray.data();
  int mn = 256, mx = -1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!region.test(i)) continue;
    mn = std::min<int>(mn, in[i]);
    mx = std::max<int>(mx, in[i]);
  }
  std::vector<std::uint8_t> out(in.begin(), in.end());
  if (mx < 0) return gray;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (region.test(i)) out[i] = normalize_sample(in[i], mn, mx, lo, hi);
  }
  return Raster(gray.width(), gray.height(), 1, std::move(out));
}

Raster abs_diff(const Raster& a, const Raster& b) {
  require_gray(a, "abs_diff");
  require_gray(b, "abs_diff");
  require_same_size(a.width(), a.height(), b.width(), b.height(), "abs_diff");
  const auto diff = (a.plane().cast<int>() - b.plane().cast<int>()).cwiseAbs().cast<std::uint8_t>().eval();
  return Raster(a.width(), a.height(), 1, std::vector<std::uint8_t>(diff.data(), diff.data() + diff.size()));
}

Raster smooth(const Raster& gray, SmoothMode mode, int k) {
  require_gray(gray, "smooth");
  if (k < 1 || k % 2 == 0) throw Error(ErrorCode::BadKernel, "kernel size must be odd and >= 1");
  if (k == 1) return gray;
  const int w = gray.width(), h = gray.height(), r = k / 2;
  std::vector<std::uint8_t> out(gray.pixel_count());

  if (mode == SmoothMode::Box) {
    // Integral image over the edge-replicated extension.
    const int ew = w + 2 * r, eh = h + 2 * r;
    std::vector<std::int64_t> integral(static_cast<std::size_t>(ew + 1) * (eh + 1), 0);
    auto idx = [ew](int y, int x) { return static_cast<std::size_t>(y) * (ew + 1) + x; };
    for (int y = 0; y < eh; ++y) {
      std::int64_t row = 0;
      const int sy = clamp_index(y - r, h);
      for (int x = 0; x < ew; ++x) {
        row += gray.at(clamp_index(x - r, w), sy);
        integral[idx(y + 1, x + 1)] = integral[idx(y, x + 1)] + row;
      }
    }
    const std::int64_t area = static_cast<std::int64_t>(k) * k;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::int64_t sum =
            integral[idx(y + k, x + k)] - integral[idx(y, x + k)] - integral[idx(y + k, x)] + integral[idx(y, x)];
        out[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(round_ratio(sum, area));
      }
    }
    return Raster(w, h, 1, std::move(out));
  }

  // Rank filters via a sliding 256-bin histogram along each row.
  const int rank = mode == SmoothMode::Median ? (k * k) / 2 : mode == SmoothMode::Min ? 0 : k * k - 1;
  for (int y = 0; y < h; ++y) {
    std::array<int, 256> hist{};
    for (int dy = -r; dy <= r; ++dy) {
      const int sy = clamp_index(y + dy, h);
      for (int dx = -r; dx <= r; ++dx) ++hist[gray.at(clamp_index(dx, w), sy)];
    }
    for (int x = 0; x < w; ++x) {
      if (x > 0) {
        const int leave = clamp_index(x - 1 - r, w);
        const int enter = clamp_index(x + r, w);
        for (int dy = -r; dy <= r; ++dy) {
          const int sy = clamp_index(y + dy, h);
          --hist[gray.at(leave, sy)];
          ++hist[gray.at(enter, sy)];
        }
      }
      int seen = 0;
      int v = 0;
      for (; v < 256; ++v) {
        seen += hist[v];
        if (seen > rank) break;
      }
      out[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(v);
    }
  }
  return Raster(w, h, 1, std::move(out));
}

BinaryMask bitwise(const BinaryMask& a, const std::optional<BinaryMask>& b, BitwiseOp op) {
  std::vector<std::uint8_t> out(a.pixel_count());
  if (op == BitwiseOp::Not) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.test(i) ? 0 : 255;
    return BinaryMask(a.width(), a.height(), std::move(out));
  }
  if (!b) throw Error(ErrorCode::DimensionMismatch, "binary bitwise op needs two operands");
  require_same_size(a.width(), a.height(), b->width(), b->height(), "bitwise");
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool v = op == BitwiseOp::And ? (a.test(i) && b->test(i)) : (a.test(i) || b->test(i));
    out[i] = v ? 255 : 0;
  }
  return BinaryMask(a.width(), a.height(), std::move(out));
}

}  // namespace floeseg
