#include "stereoae/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "stereoae/errors.hpp"

namespace stereoae::io {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(std::istream& in, const std::filesystem::path& path) {
  std::string token;
  while (in) {
    const int c = in.get();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(c) || c == EOF) {
      if (!token.empty()) {
        return token;
      }
      if (c == EOF) {
        break;
      }
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  throw IoError(path.string() + ": truncated PNM header");
}

Tensor<double> read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(path.string() + ": cannot open");
  }
  const std::string magic = pnm_token(in, path);
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw IoError(path.string() + ": unsupported PNM type '" + magic + "' (need binary P5/P6)");
  }
  int width = 0;
  int height = 0;
  int maxval = 0;
  try {
    width = std::stoi(pnm_token(in, path));
    height = std::stoi(pnm_token(in, path));
    maxval = std::stoi(pnm_token(in, path));
  } catch (const std::logic_error&) {
    throw IoError(path.string() + ": malformed PNM header");
  }
  if (width <= 0 || height <= 0) {
    throw IoError(path.string() + ": invalid PNM dimensions");
  }
  if (maxval != 255) {
    throw IoError(path.string() + ": only 8-bit PNM (maxval 255) is supported, got " + std::to_string(maxval));
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw IoError(path.string() + ": truncated PNM pixel data");
  }
  Tensor<double> out(Shape{channels, height, width});
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        out.at(c, y, x) = bytes[(static_cast<std::size_t>(y) * width + x) * channels + c];
      }
    }
  }
  return out;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) {
      std::fclose(f);
    }
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

Tensor<double> read_png(const std::filesystem::path& path) {
  File file(std::fopen(path.c_str(), "rb"));
  if (!file) {
    throw IoError(path.string() + ": cannot open");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": not a readable PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": 16-bit PNG is not supported");
  }
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
  }
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * channels);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * width * channels;
  }
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor<double> out(Shape{channels, height, width});
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        out.at(c, y, x) = bytes[(static_cast<std::size_t>(y) * width + x) * channels + c];
      }
    }
  }
  return out;
}

std::vector<unsigned char> interleave_bytes(const Tensor<double>& image) {
  const int channels = image.dim(0);
  const int height = image.dim(1);
  const int width = image.dim(2);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const double v = std::clamp(std::round(image.at(c, y, x)), 0.0, 255.0);
        bytes[(static_cast<std::size_t>(y) * width + x) * channels + c] = static_cast<unsigned char>(v);
      }
    }
  }
  return bytes;
}

void write_png(const std::filesystem::path& path, const Tensor<double>& image) {
  File file(std::fopen(path.c_str(), "wb"));
  if (!file) {
    throw IoError(path.string() + ": cannot open for writing");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": libpng initialisation failed");
  }
  auto bytes = interleave_bytes(image);
  const int channels = image.dim(0);
  const int height = image.dim(1);
  const int width = image.dim(2);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * width * channels;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": PNG encoding failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void require_little_endian() {
  static_assert(std::endian::native == std::endian::little, "raw raster IO assumes a little-endian host");
}

}  // namespace

Tensor<double> read_image(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  if (ext == ".png") {
    return read_png(path);
  }
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    return read_pnm(path);
  }
  throw IoError(path.string() + ": unrecognised image extension");
}

void write_image(const std::filesystem::path& path, const Tensor<double>& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ConfigError("write_image expects [1,H,W] or [3,H,W], got " + shape_string(image.shape()));
  }
  const auto ext = lower_extension(path);
  if (ext == ".png") {
    write_png(path, image);
    return;
  }
  const bool gray = image.dim(0) == 1;
  if ((ext == ".pgm" && !gray) || (ext == ".ppm" && gray) || (ext != ".pgm" && ext != ".ppm")) {
    throw IoError(path.string() + ": extension does not match channel count");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError(path.string() + ": cannot open for writing");
  }
  out << (gray ? "P5" : "P6") << '\n' << image.dim(2) << ' ' << image.dim(1) << "\n255\n";
  const auto bytes = interleave_bytes(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError(path.string() + ": write failed");
  }
}

Tensor<double> normalize(const Tensor<double>& raw) {
  Tensor<double> out(raw.shape());
  const auto src = raw.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = (src[i] - 128.0) / 255.0;
  }
  return out;
}

Tensor<double> denormalize(const Tensor<double>& normalized) {
  Tensor<double> out(normalized.shape());
  const auto src = normalized.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = std::clamp(std::round(src[i] * 255.0 + 128.0), 0.0, 255.0);
  }
  return out;
}

Tensor<double> quantize_normalized(const Tensor<double>& normalized) {
  return normalize(denormalize(normalized));
}

Tensor<double> load_normalized(const std::filesystem::path& path) {
  return normalize(read_image(path));
}

void write_f32(const std::filesystem::path& path, std::span<const double> values) {
  require_little_endian();
  std::vector<float> buf(values.begin(), values.end());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) {
    throw IoError(path.string() + ": write failed");
  }
}

std::vector<double> read_f32(const std::filesystem::path& path, std::size_t count) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(path.string() + ": cannot open");
  }
  std::vector<float> buf(count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float))) {
    throw IoError(path.string() + ": expected " + std::to_string(count) + " float32 values");
  }
  return {buf.begin(), buf.end()};
}

void write_u8(const std::filesystem::path& path, std::span<const double> values) {
  std::vector<unsigned char> buf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    buf[i] = static_cast<unsigned char>(std::clamp(std::round(values[i]), 0.0, 255.0));
  }
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) {
    throw IoError(path.string() + ": write failed");
  }
}

std::vector<double> read_u8(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError(path.string() + ": cannot open");
  }
  std::vector<unsigned char> buf(count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
  if (in.gcount() != static_cast<std::streamsize>(count)) {
    throw IoError(path.string() + ": expected " + std::to_string(count) + " bytes");
  }
  return {buf.begin(), buf.end()};
}

}  // namespace stereoae::io
