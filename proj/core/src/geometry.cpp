#include "stereoae/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "stereoae/errors.hpp"
#include "stereoae/ops.hpp"

namespace stereoae {

void Calibration::validate() const {
  if (!(focal_px > 0) || !(baseline_m > 0) || !std::isfinite(fb())) {
    throw ConfigError("calibration requires positive finite focal length and baseline");
  }
}

template <typename Tag>
Map2D<Tag>::Map2D(const Tensor<double>& values) {
  if (values.rank() == 2) {
    values_ = values.reshaped(Shape{1, values.dim(0), values.dim(1)});
  } else if (values.rank() == 3 && values.dim(0) == 1) {
    values_ = values;
  } else {
    throw ConfigError("map expects [H,W] or [1,H,W], got " + shape_string(values.shape()));
  }
}

template class Map2D<DisparityTag>;
template class Map2D<DepthTag>;

}  // namespace stereoae

namespace stereoae::geometry {
namespace {

// Left sample index and interpolation weight for abscissa u, or false when
// u lies outside [0, width-1].
template <typename T>
bool locate(T u, int width, int& x0, T& a) {
  if (!(u >= T(0)) || u > T(width - 1)) {
    return false;
  }
  if (width == 1) {
    x0 = 0;
    a = T(0);
    return true;
  }
  x0 = std::min(static_cast<int>(std::floor(u)), width - 2);
  a = u - static_cast<T>(x0);
  return true;
}

void require_disparity_shape(const Shape& image, const Shape& disparity, const char* op) {
  if (disparity.size() != 3 || disparity[0] != 1 || image.size() != 3 || image[1] != disparity[1] ||
      image[2] != disparity[2]) {
    throw ConfigError(std::string(op) + ": disparity " + shape_string(disparity) +
                      " does not match image " + shape_string(image));
  }
}

}  // namespace

template <typename T>
Warp<T> inverse_warp(Tape<T>& tape, const Tensor<T>& right, const Tensor<T>& disparity) {
  require_disparity_shape(right.shape(), disparity.shape(), "inverse_warp");
  const int channels = right.dim(0);
  const int height = right.dim(1);
  const int width = right.dim(2);
  Tensor<T> warped(right.shape());
  Tensor<T> mask(disparity.shape());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      int x0 = 0;
      T a = 0;
      if (!locate(static_cast<T>(x) + disparity.at(0, y, x), width, x0, a)) {
        continue;
      }
      mask.at(0, y, x) = T(1);
      const int x1 = std::min(x0 + 1, width - 1);
      for (int c = 0; c < channels; ++c) {
        warped.at(c, y, x) = (T(1) - a) * right.at(c, y, x0) + a * right.at(c, y, x1);
      }
    }
  }
  check_finite(warped, "inverse_warp");

  if (tape.should_record({&right, &disparity})) {
    tape.record("inverse_warp", {right, disparity}, warped, [right, disparity, warped, mask]() mutable {
      const int channels = right.dim(0);
      const int height = right.dim(1);
      const int width = right.dim(2);
      const auto gy = std::span<const T>(warped.grad());
      std::span<T> gr = right.requires_grad() ? right.grad() : std::span<T>{};
      std::span<T> gd = disparity.requires_grad() ? disparity.grad() : std::span<T>{};
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          if (mask.at(0, y, x) == T(0)) {
            continue;
          }
          int x0 = 0;
          T a = 0;
          locate(static_cast<T>(x) + disparity.at(0, y, x), width, x0, a);
          const int x1 = std::min(x0 + 1, width - 1);
          T slope_sum = 0;
          for (int c = 0; c < channels; ++c) {
            const std::size_t row = (static_cast<std::size_t>(c) * height + y) * width;
            const T g = gy[row + x];
            if (!gr.empty()) {
              gr[row + x0] += g * (T(1) - a);
              gr[row + x1] += g * a;
            }
            slope_sum += g * (right.at(c, y, x1) - right.at(c, y, x0));
          }
          if (!gd.empty()) {
            gd[static_cast<std::size_t>(y) * width + x] += slope_sum;
          }
        }
      }
    });
  }
  return {warped, mask};
}

template <typename T>
PhotometricLoss<T> photometric_loss(Tape<T>& tape, const Tensor<T>& left, const Tensor<T>& warped,
                                    const Tensor<T>& mask) {
  if (left.shape() != warped.shape()) {
    throw ConfigError("photometric_loss: left " + shape_string(left.shape()) + " vs warped " +
                      shape_string(warped.shape()));
  }
  require_disparity_shape(left.shape(), mask.shape(), "photometric_loss");
  const int channels = left.dim(0);
  const std::size_t plane = static_cast<std::size_t>(left.dim(1)) * left.dim(2);
  const auto md = mask.data();
  std::int64_t valid = 0;
  for (T m : md) {
    valid += (m != T(0)) ? 1 : 0;
  }
  T acc = 0;
  const auto ld = left.data();
  const auto wd = warped.data();
  for (int c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      if (md[i] != T(0)) {
        const T d = wd[c * plane + i] - ld[c * plane + i];
        acc += d * d;
      }
    }
  }
  const T inv = valid > 0 ? T(1) / static_cast<T>(valid) : T(0);
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  check_finite(out, "photometric_loss");

  if (valid > 0 && tape.should_record({&left, &warped})) {
    tape.record("photometric_loss", {left, warped}, out, [left, warped, mask, out, inv]() mutable {
      const T g = std::span<const T>(out.grad())[0] * T(2) * inv;
      const std::size_t plane = static_cast<std::size_t>(left.dim(1)) * left.dim(2);
      const auto md = mask.data();
      const auto ld = std::as_const(left).data();
      const auto wd = std::as_const(warped).data();
      std::span<T> gl = left.requires_grad() ? left.grad() : std::span<T>{};
      std::span<T> gw = warped.requires_grad() ? warped.grad() : std::span<T>{};
      for (int c = 0; c < left.dim(0); ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
          if (md[i] == T(0)) {
            continue;
          }
          const std::size_t j = c * plane + i;
          const T d = g * (wd[j] - ld[j]);
          if (!gw.empty()) {
            gw[j] += d;
          }
          if (!gl.empty()) {
            gl[j] -= d;
          }
        }
      }
    });
  }
  return {out, valid};
}

template <typename T>
Tensor<T> smoothness_loss(Tape<T>& tape, const Tensor<T>& disparity) {
  if (disparity.rank() != 3 || disparity.dim(0) != 1) {
    throw ConfigError("smoothness_loss: disparity must be [1,H,W], got " + shape_string(disparity.shape()));
  }
  const int height = disparity.dim(1);
  const int width = disparity.dim(2);
  if (height < 2 || width < 2) {
    throw ConfigError("smoothness_loss: disparity must be at least 2x2");
  }
  const auto terms = static_cast<std::int64_t>(height) * (width - 1) + static_cast<std::int64_t>(height - 1) * width;
  const T inv = T(1) / static_cast<T>(terms);
  T acc = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x + 1 < width; ++x) {
      const T d = disparity.at(0, y, x + 1) - disparity.at(0, y, x);
      acc += d * d;
    }
  }
  for (int y = 0; y + 1 < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const T d = disparity.at(0, y + 1, x) - disparity.at(0, y, x);
      acc += d * d;
    }
  }
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  check_finite(out, "smoothness_loss");

  if (tape.should_record({&disparity})) {
    tape.record("smoothness_loss", {disparity}, out, [disparity, out, inv]() mutable {
      const T g = std::span<const T>(out.grad())[0] * T(2) * inv;
      const int height = disparity.dim(1);
      const int width = disparity.dim(2);
      auto gd = disparity.grad();
      auto at = [width](int y, int x) { return static_cast<std::size_t>(y) * width + x; };
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x + 1 < width; ++x) {
          const T d = g * (disparity.at(0, y, x + 1) - disparity.at(0, y, x));
          gd[at(y, x + 1)] += d;
          gd[at(y, x)] -= d;
        }
      }
      for (int y = 0; y + 1 < height; ++y) {
        for (int x = 0; x < width; ++x) {
          const T d = g * (disparity.at(0, y + 1, x) - disparity.at(0, y, x));
          gd[at(y + 1, x)] += d;
          gd[at(y, x)] -= d;
        }
      }
    });
  }
  return out;
}

template <typename T>
LossBreakdown<T> total_loss(Tape<T>& tape, const Tensor<T>& left, const Tensor<T>& right,
                            const Tensor<T>& disparity, double gamma) {
  if (!(gamma >= 0)) {
    throw ConfigError("total_loss: gamma must be non-negative");
  }
  auto warp = inverse_warp(tape, right, disparity);
  auto recons = photometric_loss(tape, left, warp.warped, warp.mask);
  auto smooth = smoothness_loss(tape, disparity);
  auto total = ops::add(tape, recons.value, ops::scale(tape, smooth, static_cast<T>(gamma)));
  return {recons.value, smooth, total, gamma, recons.valid_pixels};
}

template <typename T>
Tensor<T> horizontal_gradient(const Tensor<T>& image) {
  if (image.rank() != 3) {
    throw ConfigError("horizontal_gradient: expected [C,H,W]");
  }
  const int channels = image.dim(0);
  const int height = image.dim(1);
  const int width = image.dim(2);
  Tensor<T> out(image.shape());
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const T next = image.at(c, y, std::min(x + 1, width - 1));
        const T prev = image.at(c, y, std::max(x - 1, 0));
        out.at(c, y, x) = (next - prev) / T(2);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> linearized_warp(const Tensor<T>& right, const Tensor<T>& d_prev, const Tensor<T>& d_new) {
  require_disparity_shape(right.shape(), d_prev.shape(), "linearized_warp");
  if (d_prev.shape() != d_new.shape()) {
    throw ConfigError("linearized_warp: disparity shapes differ");
  }
  Tape<T> tape(TapeMode::inference);
  const auto base = inverse_warp(tape, right, d_prev);
  const auto slope = inverse_warp(tape, horizontal_gradient(right), d_prev);
  Tensor<T> out = base.warped.clone();
  const int channels = right.dim(0);
  const int height = right.dim(1);
  const int width = right.dim(2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const T step = d_new.at(0, y, x) - d_prev.at(0, y, x);
      if (step == T(0) || base.mask.at(0, y, x) == T(0)) {
        continue;
      }
      for (int c = 0; c < channels; ++c) {
        out.at(c, y, x) += step * slope.warped.at(c, y, x);
      }
    }
  }
  return out;
}

DepthMap disparity_to_depth(const DisparityMap& disparity, const Calibration& cal, const DepthClamp& clamp) {
  cal.validate();
  if (!(clamp.min_m > 0) || !(clamp.min_m < clamp.max_m)) {
    throw ConfigError("depth clamp requires 0 < min < max");
  }
  const double fb = cal.fb();
  const double floor_disparity = fb / clamp.max_m;
  DepthMap depth(disparity.height(), disparity.width());
  const auto src = disparity.values();
  auto dst = depth.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double d = fb / std::max(src[i], floor_disparity);
    dst[i] = std::clamp(d, clamp.min_m, clamp.max_m);
  }
  return depth;
}

DisparityMap depth_to_disparity(const DepthMap& depth, const Calibration& cal) {
  cal.validate();
  DisparityMap disparity(depth.height(), depth.width());
  const auto src = depth.values();
  auto dst = disparity.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!(src[i] > 0)) {
      throw ConfigError("depth_to_disparity: depth must be positive");
    }
    dst[i] = cal.fb() / src[i];
  }
  return disparity;
}

#define STEREOAE_INSTANTIATE_GEOMETRY(T)                                                                   \
  template Warp<T> inverse_warp(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                            \
  template PhotometricLoss<T> photometric_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                               const Tensor<T>&);                                         \
  template Tensor<T> smoothness_loss(Tape<T>&, const Tensor<T>&);                                         \
  template LossBreakdown<T> total_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                       double);                                                           \
  template Tensor<T> horizontal_gradient(const Tensor<T>&);                                               \
  template Tensor<T> linearized_warp(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

STEREOAE_INSTANTIATE_GEOMETRY(float)
STEREOAE_INSTANTIATE_GEOMETRY(double)

#undef STEREOAE_INSTANTIATE_GEOMETRY

}  // namespace stereoae::geometry
