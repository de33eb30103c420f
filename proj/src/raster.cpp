#include "floeseg/raster.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "floeseg/error.hpp"

namespace floeseg {

namespace {

void check_geometry(int width, int height, int channels) {
  if (width < 1 || height < 1) throw Error(ErrorCode::BadDimensions, "raster must be at least 1x1");
  if (channels != 1 && channels != 3) throw Error(ErrorCode::WrongChannelCount, "raster must have 1 or 3 channels");
}

// Rounds num/den (num >= 0, den > 0) half up.
constexpr int round_ratio(int num, int den) { return (2 * num + den) / (2 * den); }

struct MemoryReader {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* src = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (src->offset + count > src->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, src->bytes.data() + src->offset, count);
  src->offset += count;
}

void write_to_vector(png_structp png, png_bytep data, png_size_t count) {
  auto* dst = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  dst->insert(dst->end(), data, data + count);
}

void flush_noop(png_structp) {}

void error_to_longjmp(png_structp png, png_const_charp) { std::longjmp(png_jmpbuf(png), 1); }
void warning_ignore(png_structp, png_const_charp) {}

}  // namespace

Raster::Raster(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
  check_geometry(width, height, channels);
  data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

Raster::Raster(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  check_geometry(width, height, channels);
  if (data_.size() != pixel_count() * static_cast<std::size_t>(channels)) {
    throw Error(ErrorCode::DimensionMismatch, "raster data length != width*height*channels");
  }
}

Raster::PlaneMap Raster::plane() const {
  if (channels_ != 1) throw Error(ErrorCode::WrongChannelCount, "plane() needs a single-channel raster");
  return PlaneMap(data_.data(), height_, width_);
}

Raster Raster::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > width_ || y0 + h > height_) {
    throw Error(ErrorCode::BadDimensions, "crop rectangle outside raster");
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h * channels_);
  const std::size_t row_bytes = static_cast<std::size_t>(w) * channels_;
  for (int y = 0; y < h; ++y) {
    const auto* src = data_.data() + (static_cast<std::size_t>(y0 + y) * width_ + x0) * channels_;
    std::copy_n(src, row_bytes, out.data() + y * row_bytes);
  }
  return Raster(w, h, channels_, std::move(out));
}

HsvRaster::HsvRaster(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_geometry(width, height, 3);
  if (data_.size() != pixel_count() * 3) throw Error(ErrorCode::DimensionMismatch, "HSV data length != width*height*3");
  for (std::size_t i = 0; i < pixel_count(); ++i) {
    if (data_[3 * i] > 180) throw Error(ErrorCode::BadRange, "hue sample above 180");
  }
}

Raster HsvRaster::value_channel() const {
  std::vector<std::uint8_t> v(pixel_count());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = data_[3 * i + 2];
  return Raster(width_, height_, 1, std::move(v));
}

Hsv rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const int v = std::max({r, g, b});
  const int mn = std::min({r, g, b});
  const int delta = v - mn;
  Hsv out;
  out.v = static_cast<std::uint8_t>(v);
  out.s = v == 0 ? 0 : static_cast<std::uint8_t>(round_ratio(255 * delta, v));
  if (delta == 0) return out;
  // Half-angle hue H/2 = 30 * sector_offset as the exact fraction num/delta.
  int num = 0;
  if (v == r) {
    num = 30 * (g - b);
  } else if (v == g) {
    num = 60 * delta + 30 * (b - r);
  } else {
    num = 120 * delta + 30 * (r - g);
  }
  if (num < 0) num += 180 * delta;
  out.h = static_cast<std::uint8_t>(round_ratio(num, delta));
  return out;
}

HsvRaster rgb_to_hsv(const Raster& rgb) {
  if (rgb.channels() != 3) throw Error(ErrorCode::WrongChannelCount, "rgb_to_hsv needs a 3-channel raster");
  const auto src = rgb.data();
  std::vector<std::uint8_t> out(src.size());
  for (std::size_t i = 0; i < rgb.pixel_count(); ++i) {
    const Hsv p = rgb_to_hsv(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
    out[3 * i] = p.h;
    out[3 * i + 1] = p.s;
    out[3 * i + 2] = p.v;
  }
  return HsvRaster(rgb.width(), rgb.height(), std::move(out));
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(ErrorCode::UnsupportedFormat, "not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_to_longjmp, warning_ignore);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, "libpng allocation failed");
  }
  MemoryReader reader{bytes, 0};
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int source_channels = 0;
  int bit_depth = 0;
  bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_set_read_fn(png, &reader, read_from_memory);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    bit_depth = png_get_bit_depth(png, info);
    if (bit_depth <= 8) {
      const int color_type = png_get_color_type(png, info);
      if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
      if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
      if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
      png_set_interlace_handling(png);
      png_read_update_info(png, info);
      source_channels = png_get_channels(png, info);
      const std::size_t stride = png_get_rowbytes(png, info);
      pixels.resize(stride * height);
      rows.resize(height);
      for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
      png_read_image(png, rows.data());
      png_read_end(png, nullptr);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (failed) throw Error(ErrorCode::UnsupportedFormat, "corrupt or unreadable PNG");
  if (bit_depth > 8) throw Error(ErrorCode::UnsupportedFormat, "only 8-bit PNGs are supported");

  // 1 gray, 2 gray+alpha, 3 RGB, 4 RGBA: drop alpha.
  const int out_channels = source_channels <= 2 ? 1 : 3;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(width) * height * out_channels);
  for (std::size_t i = 0, n = static_cast<std::size_t>(width) * height; i < n; ++i) {
    for (int c = 0; c < out_channels; ++c) out[i * out_channels + c] = pixels[i * source_channels + c];
  }
  return Raster(static_cast<int>(width), static_cast<int>(height), out_channels, std::move(out));
}

std::vector<std::uint8_t> encode_png(const Raster& raster) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_to_longjmp, warning_ignore);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "libpng allocation failed");
  }
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> rows(static_cast<std::size_t>(raster.height()));
  const std::size_t stride = static_cast<std::size_t>(raster.width()) * raster.channels();
  auto* base = const_cast<std::uint8_t*>(raster.data().data());
  for (int y = 0; y < raster.height(); ++y) rows[y] = base + y * stride;
  volatile bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_set_write_fn(png, &out, write_to_vector, flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width()), static_cast<png_uint_32>(raster.height()), 8,
                 raster.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  if (failed) throw Error(ErrorCode::IoError, "PNG encoding failed");
  return out;
}

Raster load_png(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::FileNotFound, path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void save_png(const Raster& raster, const std::filesystem::path& path) {
  const auto bytes = encode_png(raster);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

Eigen::ArrayXd luma(const Raster& raster) {
  Eigen::ArrayXd out(static_cast<Eigen::Index>(raster.pixel_count()));
  const auto d = raster.data();
  for (std::size_t i = 0; i < raster.pixel_count(); ++i) {
    out[static_cast<Eigen::Index>(i)] =
        raster.channels() == 1 ? d[i] : 0.299 * d[3 * i] + 0.587 * d[3 * i + 1] + 0.114 * d[3 * i + 2];
  }
  return out;
}

Raster downscale(const Raster& raster, int factor) {
  if (factor < 1) throw Error(ErrorCode::BadRange, "downscale factor must be >= 1");
  if (factor == 1) return raster;
  const int w = raster.width() / factor;
  const int h = raster.height() / factor;
  if (w < 1 || h < 1) throw Error(ErrorCode::BadRange, "downscale factor larger than the raster");
  const int ch = raster.channels();
  const int area = factor * factor;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h * ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        int sum = 0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) sum += raster.at(x * factor + dx, y * factor + dy, c);
        }
        out[(static_cast<std::size_t>(y) * w + x) * ch + c] = static_cast<std::uint8_t>(round_ratio(sum, area));
      }
    }
  }
  return Raster(w, h, ch, std::move(out));
}

}  // namespace floeseg
