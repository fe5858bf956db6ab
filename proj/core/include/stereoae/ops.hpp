#pragma once

#include "stereoae/tensor.hpp"

namespace stereoae::ops {

// Per-side extents. For padding, all values are >= 0. crop_pad() accepts
// negative values, which crop.
struct Sides {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  static constexpr Sides uniform(int v) { return {v, v, v, v}; }
  friend bool operator==(const Sides&, const Sides&) = default;
};

struct Conv2dParams {
  int stride_h = 1;
  int stride_w = 1;
  Sides pad;
};

struct Pool2dParams {
  int window_h = 2;
  int window_w = 2;
  int stride_h = 2;
  int stride_w = 2;
  Sides pad;
};

struct LrnParams {
  int depth_radius = 2;
  double alpha = 1e-4;
  double beta = 0.75;
  double k = 2.0;
};

enum class BorderMode { zero, replicate };

// Output extent of a strided window sweep; throws ConfigError if < 1.
int sweep_extent(int in, int pad_before, int pad_after, int window, int stride, const char* what);

// Cross-correlation. x [C,H,W], kernel [O,C,kh,kw], bias [O] or undefined.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const Conv2dParams& p = {});

// Transposed convolution without padding. x [C,H,W], kernel [C,O,kh,kw],
// output [O,(H-1)*stride+kh,(W-1)*stride+kw].
template <typename T>
Tensor<T> conv_transpose2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                           int stride);

// Padded positions never win. Ties go to the first element in scan order.
template <typename T>
Tensor<T> maxpool2d(Tape<T>& tape, const Tensor<T>& x, const Pool2dParams& p);

// y_c = x_c / (k + alpha * sum_{|c'-c|<=r} x_{c'}^2)^beta
template <typename T>
Tensor<T> lrn(Tape<T>& tape, const Tensor<T>& x, const LrnParams& p = {});

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a);

// Pads (positive offsets) or crops (negative offsets) the last two dims of
// a [C,H,W] tensor.
template <typename T>
Tensor<T> crop_pad(Tape<T>& tape, const Tensor<T>& x, const Sides& offsets, BorderMode mode = BorderMode::zero);

// Separable bilinear interpolation filter, [channels, channels, k, k] with
// k = 2*factor - factor%2, diagonal across channels.
template <typename T>
Tensor<T> bilinear_kernel(int channels, int factor);

// Upsamples [C,H,W] to [C,factor*H,factor*W] by a transposed convolution
// with `kernel` over an edge-replicated input. With bilinear_kernel() this
// is exact bilinear interpolation at half-pixel centres.
template <typename T>
Tensor<T> bilinear_upsample(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel, int factor);

// Convenience overload with a constant bilinear kernel.
template <typename T>
Tensor<T> bilinear_upsample(Tape<T>& tape, const Tensor<T>& x, int factor);

}  // namespace stereoae::ops
