#pragma once

#include <cstdint>
#include <span>

#include "stereoae/tensor.hpp"

namespace stereoae {

// Rectified stereo rig: focal length f in pixels, baseline B in metres.
struct Calibration {
  double focal_px = 0.0;
  double baseline_m = 0.0;

  double fb() const { return focal_px * baseline_m; }
  void validate() const;
  friend bool operator==(const Calibration&, const Calibration&) = default;
};

struct DepthClamp {
  double min_m = 1.0;
  double max_m = 50.0;
};

// Single-channel raster in double precision, tagged by what it stores.
template <typename Tag>
class Map2D {
 public:
  Map2D() = default;
  Map2D(int height, int width, double fill = 0.0) : values_(Shape{1, height, width}, fill) {}
  // Accepts [H,W] or [1,H,W].
  explicit Map2D(const Tensor<double>& values);

  int height() const { return values_.dim(1); }
  int width() const { return values_.dim(2); }
  bool empty() const { return !values_.defined(); }

  double& operator()(int y, int x) { return values_.at(0, y, x); }
  double operator()(int y, int x) const { return values_.at(0, y, x); }

  std::span<double> values() { return values_.data(); }
  std::span<const double> values() const { return values_.data(); }

  // [1,H,W] view sharing storage.
  const Tensor<double>& tensor() const { return values_; }

 private:
  Tensor<double> values_;
};

struct DisparityTag {};
struct DepthTag {};
// Scanline displacement in pixels.
using DisparityMap = Map2D<DisparityTag>;
// Metric depth in metres.
using DepthMap = Map2D<DepthTag>;

}  // namespace stereoae

namespace stereoae::geometry {

inline constexpr double kDefaultGamma = 0.01;

template <typename T>
struct Warp {
  Tensor<T> warped;  // [C,H,W]
  Tensor<T> mask;    // [1,H,W], 1 where the sample lies inside the right image
};

// warped(c,y,x) = right(c, y, x + D(y,x)) with linear interpolation along
// the scanline. Samples outside [0, W-1] are zero and masked out.
// right [C,H,W], disparity [1,H,W].
template <typename T>
Warp<T> inverse_warp(Tape<T>& tape, const Tensor<T>& right, const Tensor<T>& disparity);

template <typename T>
struct PhotometricLoss {
  Tensor<T> value;  // scalar
  std::int64_t valid_pixels = 0;
  bool degenerate() const { return valid_pixels == 0; }
};

// Mean over valid pixels of the channel-summed squared difference. An
// all-invalid mask yields 0 and degenerate() == true.
template <typename T>
PhotometricLoss<T> photometric_loss(Tape<T>& tape, const Tensor<T>& left, const Tensor<T>& warped,
                                    const Tensor<T>& mask);

// Mean of squared forward differences over both directions; the last
// column (x) and last row (y) contribute no term. Requires H, W >= 2.
template <typename T>
Tensor<T> smoothness_loss(Tape<T>& tape, const Tensor<T>& disparity);

template <typename T>
struct LossBreakdown {
  Tensor<T> recons;
  Tensor<T> smooth;
  Tensor<T> total;  // recons + gamma * smooth
  double gamma = kDefaultGamma;
  std::int64_t valid_pixels = 0;
};

template <typename T>
LossBreakdown<T> total_loss(Tape<T>& tape, const Tensor<T>& left, const Tensor<T>& right,
                            const Tensor<T>& disparity, double gamma = kDefaultGamma);

// Central differences along x with replicated edges. [C,H,W] -> [C,H,W].
template <typename T>
Tensor<T> horizontal_gradient(const Tensor<T>& image);

// First-order model of the warp around d_prev:
//   right(x + d_prev) + (d_new - d_prev) * right_x(x + d_prev)
// where right_x is horizontal_gradient(right). Masked samples are zero.
template <typename T>
Tensor<T> linearized_warp(const Tensor<T>& right, const Tensor<T>& d_prev, const Tensor<T>& d_new);

// d = fB / max(D, fB/max), then clamped into [min, max].
DepthMap disparity_to_depth(const DisparityMap& disparity, const Calibration& cal, const DepthClamp& clamp = {});

// D = fB / d.
DisparityMap depth_to_disparity(const DepthMap& depth, const Calibration& cal);

}  // namespace stereoae::geometry
