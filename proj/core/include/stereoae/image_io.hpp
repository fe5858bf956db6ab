#pragma once

#include <cstdint>
#include <filesystem>

#include "stereoae/geometry.hpp"
#include "stereoae/tensor.hpp"

namespace stereoae::io {

// Reads 8-bit binary PGM (P5), PPM (P6) or PNG into [C,H,W] with raw
// intensities 0..255. Alpha channels are dropped.
Tensor<double> read_image(const std::filesystem::path& path);

// Writes [1,H,W] or [3,H,W] raw intensities, rounded and clamped to
// 0..255. Format follows the extension (.pgm, .ppm, .png).
void write_image(const std::filesystem::path& path, const Tensor<double>& image);

// (v - 128) / 255, mapping 8-bit values into [-128/255, 127/255].
Tensor<double> normalize(const Tensor<double>& raw);

// Inverse of normalize(), rounded to the nearest 8-bit level.
Tensor<double> denormalize(const Tensor<double>& normalized);

// Rounds normalized values onto the 8-bit grid so they survive a
// write/read cycle unchanged.
Tensor<double> quantize_normalized(const Tensor<double>& normalized);

Tensor<double> load_normalized(const std::filesystem::path& path);

// Raw little-endian float32 rows.
void write_f32(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32(const std::filesystem::path& path, std::size_t count);

// Raw uint8 raster (0 or 1 per pixel for masks).
void write_u8(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_u8(const std::filesystem::path& path, std::size_t count);

}  // namespace stereoae::io
