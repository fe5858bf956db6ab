#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stereoae/dataio.hpp"
#include "stereoae/geometry.hpp"
#include "stereoae/tensor.hpp"

namespace stereoae::eval {

struct MetricsReport {
  double rms = 0.0;
  double log_rms = 0.0;  // natural log
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double acc_1 = 0.0;  // max(d/g, g/d) < 1.25
  double acc_2 = 0.0;  // < 1.25^2
  double acc_3 = 0.0;  // < 1.25^3
  std::int64_t n_pixels = 0;
};

// Column order of the results table.
inline constexpr const char* kMetricsCsvHeader = "rms,log_rms,abs_rel,sq_rel,acc_1,acc_2,acc_3,n_pixels";

// One "key=value" line per metric.
void write_metrics_text(std::ostream& out, const MetricsReport& m);
// Row matching kMetricsCsvHeader.
void write_metrics_csv_row(std::ostream& out, const MetricsReport& m);
// Appends a row to `path`, writing the header first if the file is new.
void append_metrics_csv(const std::filesystem::path& path, const MetricsReport& m);

// `valid` may be empty (all pixels count); otherwise nonzero entries count.
// Throws ConfigError on size mismatch, no valid pixels or a nonpositive
// depth on a valid pixel.
MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> gt,
                              std::span<const double> valid = {});
MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt, const Tensor<double>& valid = {});

// Half-open pixel rectangle.
struct CropRect {
  int y0 = 0;
  int x0 = 0;
  int y1 = 0;
  int x1 = 0;
};

struct ProtocolOptions {
  std::optional<CropRect> crop;  // full image when empty
  DepthClamp clamp;
};

// Disparity predicted at any resolution brought to the sample's size:
// bilinear resampling with values rescaled by the width ratio.
DisparityMap upscale_disparity(const DisparityMap& pred, int height, int width);

struct ProtocolResult {
  MetricsReport metrics;
  DepthMap pred_depth;  // full resolution, clamped
  DepthMap gt_depth;
  // Depth pairs that entered the metrics, for pooling across samples.
  std::vector<double> selected_pred;
  std::vector<double> selected_gt;
};

// Upscale, convert to clamped depth, crop, then compare with the sample's
// ground truth wherever it is positive and finite.
ProtocolResult evaluation_protocol(const DisparityMap& pred, const StereoSample& sample,
                                   const ProtocolOptions& options = {});

// |pred - gt| per pixel.
DepthMap abs_error(const DepthMap& pred, const DepthMap& gt);

// Colour ramp over [0, max_error]: black, blue, cyan, yellow, red, white
// knots at 0, 0.2, 0.4, 0.6, 0.8, 1. Errors beyond max_error saturate.
// Returns [3,H,W] raw intensities.
Tensor<double> error_heatmap(const DepthMap& pred, const DepthMap& gt, double max_error = 10.0);

// Inverse depth scaled to [0,1] over the map's range, as a [1,H,W] raw
// 8-bit image.
Tensor<double> inverse_depth_image(const DepthMap& depth);

// Mean |pred - gt| in pixels over pixels where `mask` (same size, may be
// empty) equals `select`.
double mean_abs_error(const DisparityMap& pred, const DisparityMap& gt, const Tensor<double>& mask = {},
                      bool select = true);

// Pearson correlation of two equally sized rasters; 0 if either is constant.
double correlation(std::span<const double> a, std::span<const double> b);

}  // namespace stereoae::eval
