#include "stereoae/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "stereoae/errors.hpp"

namespace stereoae::ops {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ConfigError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                      shape_string(s));
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

struct Window {
  int channels, height, width;
  int kh, kw, sh, sw;
  Sides pad;
  int out_h, out_w;
};

// cols is [C*kh*kw, out_h*out_w], row-major.
template <typename T>
void im2col(const T* x, const Window& w, T* cols) {
  const int hw = w.out_h * w.out_w;
  for (int c = 0; c < w.channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * w.height * w.width;
    for (int ky = 0; ky < w.kh; ++ky) {
      for (int kx = 0; kx < w.kw; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c * w.kh + ky) * w.kw + kx) * hw;
        for (int oy = 0; oy < w.out_h; ++oy) {
          const int iy = oy * w.sh - w.pad.top + ky;
          T* dst = row + static_cast<std::size_t>(oy) * w.out_w;
          if (iy < 0 || iy >= w.height) {
            std::fill(dst, dst + w.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w.width;
          for (int ox = 0; ox < w.out_w; ++ox) {
            const int ix = ox * w.sw - w.pad.left + kx;
            dst[ox] = (ix >= 0 && ix < w.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const Window& w, T* x) {
  const int hw = w.out_h * w.out_w;
  for (int c = 0; c < w.channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * w.height * w.width;
    for (int ky = 0; ky < w.kh; ++ky) {
      for (int kx = 0; kx < w.kw; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c * w.kh + ky) * w.kw + kx) * hw;
        for (int oy = 0; oy < w.out_h; ++oy) {
          const int iy = oy * w.sh - w.pad.top + ky;
          if (iy < 0 || iy >= w.height) {
            continue;
          }
          const T* src = row + static_cast<std::size_t>(oy) * w.out_w;
          T* dst = plane + static_cast<std::size_t>(iy) * w.width;
          for (int ox = 0; ox < w.out_w; ++ox) {
            const int ix = ox * w.sw - w.pad.left + kx;
            if (ix >= 0 && ix < w.width) {
              dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void accumulate(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += src[i];
  }
}

}  // namespace

int sweep_extent(int in, int pad_before, int pad_after, int window, int stride, const char* what) {
  if (stride < 1 || window < 1 || pad_before < 0 || pad_after < 0) {
    throw ConfigError(std::string(what) + ": window/stride must be positive and padding non-negative");
  }
  const int span = in + pad_before + pad_after - window;
  if (span < 0) {
    throw ConfigError(std::string(what) + ": window " + std::to_string(window) + " exceeds padded extent " +
                      std::to_string(in + pad_before + pad_after));
  }
  return span / stride + 1;
}

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const Conv2dParams& p) {
  require_rank(x.shape(), 3, "conv2d", "input");
  require_rank(kernel.shape(), 4, "conv2d", "kernel");
  const int channels = x.dim(0);
  const int out_channels = kernel.dim(0);
  if (kernel.dim(1) != channels) {
    throw ConfigError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " input channels, got " +
                      std::to_string(channels));
  }
  if (bias.defined() && bias.shape() != Shape{out_channels}) {
    throw ConfigError("conv2d: bias shape " + shape_string(bias.shape()) + " does not match kernel");
  }
  Window w{channels, x.dim(1), x.dim(2), kernel.dim(2), kernel.dim(3), p.stride_h, p.stride_w, p.pad, 0, 0};
  w.out_h = sweep_extent(w.height, p.pad.top, p.pad.bottom, w.kh, w.sh, "conv2d");
  w.out_w = sweep_extent(w.width, p.pad.left, p.pad.right, w.kw, w.sw, "conv2d");
  const int patch = channels * w.kh * w.kw;
  const int hw = w.out_h * w.out_w;

  auto cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(patch) * hw);
  im2col(x.data().data(), w, cols->data());

  Tensor<T> out(Shape{out_channels, w.out_h, w.out_w});
  MatMap<T> y(out.data().data(), out_channels, hw);
  ConstMatMap<T> wm(kernel.data().data(), out_channels, patch);
  ConstMatMap<T> cm(cols->data(), patch, hw);
  y.noalias() = wm * cm;
  if (bias.defined()) {
    for (int o = 0; o < out_channels; ++o) {
      y.row(o).array() += bias[o];
    }
  }
  check_finite(out, "conv2d");

  if (tape.should_record({&x, &kernel, &bias})) {
    tape.record("conv2d", {x, kernel, bias}, out, [x, kernel, bias, out, cols, w, patch, hw]() mutable {
      ConstMatMap<T> gy(out.grad().data(), out.dim(0), hw);
      if (kernel.requires_grad()) {
        ConstMatMap<T> cm(cols->data(), patch, hw);
        MatMap<T> gw(kernel.grad().data(), kernel.dim(0), patch);
        gw.noalias() += gy * cm.transpose();
      }
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad();
        // Plain loop: Eigen's redux peels to an aligned address, which makes
        // the summation order depend on the allocation.
        for (int o = 0; o < out.dim(0); ++o) {
          const T* row = out.grad().data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(hw);
          T acc = 0;
          for (std::int64_t i = 0; i < hw; ++i) {
            acc += row[i];
          }
          gb[static_cast<std::size_t>(o)] += acc;
        }
      }
      if (x.requires_grad()) {
        ConstMatMap<T> wm(kernel.data().data(), kernel.dim(0), patch);
        RowMatrix<T> gcols = wm.transpose() * gy;
        col2im(gcols.data(), w, x.grad().data());
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                           int stride) {
  require_rank(x.shape(), 3, "conv_transpose2d", "input");
  require_rank(kernel.shape(), 4, "conv_transpose2d", "kernel");
  if (stride < 1) {
    throw ConfigError("conv_transpose2d: stride must be positive");
  }
  const int channels = x.dim(0);
  if (kernel.dim(0) != channels) {
    throw ConfigError("conv_transpose2d: kernel expects " + std::to_string(kernel.dim(0)) +
                      " input channels, got " + std::to_string(channels));
  }
  const int out_channels = kernel.dim(1);
  if (bias.defined() && bias.shape() != Shape{out_channels}) {
    throw ConfigError("conv_transpose2d: bias shape does not match kernel");
  }
  const int kh = kernel.dim(2);
  const int kw = kernel.dim(3);
  const int in_h = x.dim(1);
  const int in_w = x.dim(2);
  // The output plays the role of the input of a forward convolution whose
  // output is x.
  Window w{out_channels, (in_h - 1) * stride + kh, (in_w - 1) * stride + kw, kh, kw, stride, stride, Sides{},
           in_h, in_w};
  const int patch = out_channels * kh * kw;
  const int hw = in_h * in_w;

  ConstMatMap<T> wm(kernel.data().data(), channels, patch);
  ConstMatMap<T> xm(x.data().data(), channels, hw);
  RowMatrix<T> cols = wm.transpose() * xm;
  Tensor<T> out(Shape{out_channels, w.height, w.width});
  col2im(cols.data(), w, out.data().data());
  if (bias.defined()) {
    const std::size_t plane = static_cast<std::size_t>(w.height) * w.width;
    for (int o = 0; o < out_channels; ++o) {
      auto d = out.data().subspan(o * plane, plane);
      for (auto& v : d) {
        v += bias[o];
      }
    }
  }
  check_finite(out, "conv_transpose2d");

  if (tape.should_record({&x, &kernel, &bias})) {
    tape.record("conv_transpose2d", {x, kernel, bias}, out, [x, kernel, bias, out, w, patch, hw]() mutable {
      std::vector<T> gcols(static_cast<std::size_t>(patch) * hw);
      im2col(out.grad().data(), w, gcols.data());
      ConstMatMap<T> gc(gcols.data(), patch, hw);
      if (x.requires_grad()) {
        ConstMatMap<T> wm(kernel.data().data(), x.dim(0), patch);
        MatMap<T> gx(x.grad().data(), x.dim(0), hw);
        gx.noalias() += wm * gc;
      }
      if (kernel.requires_grad()) {
        ConstMatMap<T> xm(x.data().data(), x.dim(0), hw);
        MatMap<T> gw(kernel.grad().data(), x.dim(0), patch);
        gw.noalias() += xm * gc.transpose();
      }
      if (bias.defined() && bias.requires_grad()) {
        const std::size_t plane = static_cast<std::size_t>(w.height) * w.width;
        auto g = out.grad();
        for (int o = 0; o < out.dim(0); ++o) {
          T s = 0;
          for (std::size_t i = 0; i < plane; ++i) {
            s += g[o * plane + i];
          }
          bias.grad()[static_cast<std::size_t>(o)] += s;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d(Tape<T>& tape, const Tensor<T>& x, const Pool2dParams& p) {
  require_rank(x.shape(), 3, "maxpool2d", "input");
  const int channels = x.dim(0);
  const int height = x.dim(1);
  const int width = x.dim(2);
  if (p.pad.top >= p.window_h || p.pad.bottom >= p.window_h || p.pad.left >= p.window_w ||
      p.pad.right >= p.window_w) {
    throw ConfigError("maxpool2d: padding must be smaller than the window");
  }
  const int out_h = sweep_extent(height, p.pad.top, p.pad.bottom, p.window_h, p.stride_h, "maxpool2d");
  const int out_w = sweep_extent(width, p.pad.left, p.pad.right, p.window_w, p.stride_w, "maxpool2d");

  Tensor<T> out(Shape{channels, out_h, out_w});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(out.numel()));
  const auto xd = x.data();
  auto od = out.data();
  std::size_t o = 0;
  for (int c = 0; c < channels; ++c) {
    const std::size_t plane = static_cast<std::size_t>(c) * height * width;
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        std::int64_t best_i = -1;
        for (int ky = 0; ky < p.window_h; ++ky) {
          const int iy = oy * p.stride_h - p.pad.top + ky;
          if (iy < 0 || iy >= height) {
            continue;
          }
          for (int kx = 0; kx < p.window_w; ++kx) {
            const int ix = ox * p.stride_w - p.pad.left + kx;
            if (ix < 0 || ix >= width) {
              continue;
            }
            const std::size_t i = plane + static_cast<std::size_t>(iy) * width + ix;
            if (best_i < 0 || xd[i] > best) {
              best = xd[i];
              best_i = static_cast<std::int64_t>(i);
            }
          }
        }
        od[o] = best;
        (*argmax)[o] = best_i;
      }
    }
  }
  check_finite(out, "maxpool2d");

  if (tape.should_record({&x})) {
    tape.record("maxpool2d", {x}, out, [x, out, argmax]() mutable {
      auto gx = x.grad();
      const auto gy = std::span<const T>(out.grad());
      for (std::size_t i = 0; i < gy.size(); ++i) {
        gx[static_cast<std::size_t>((*argmax)[i])] += gy[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> lrn(Tape<T>& tape, const Tensor<T>& x, const LrnParams& p) {
  require_rank(x.shape(), 3, "lrn", "input");
  if (p.depth_radius < 0) {
    throw ConfigError("lrn: depth_radius must be non-negative");
  }
  if (!(p.k > 0)) {
    throw ConfigError("lrn: k must be positive");
  }
  const int channels = x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  const T alpha = static_cast<T>(p.alpha);
  const T beta = static_cast<T>(p.beta);
  const T k = static_cast<T>(p.k);

  auto denom = std::make_shared<std::vector<T>>(static_cast<std::size_t>(x.numel()));
  Tensor<T> out(x.shape());
  const auto xd = x.data();
  auto od = out.data();
  for (int c = 0; c < channels; ++c) {
    const int lo = std::max(0, c - p.depth_radius);
    const int hi = std::min(channels - 1, c + p.depth_radius);
    for (std::size_t i = 0; i < plane; ++i) {
      T s = 0;
      for (int cc = lo; cc <= hi; ++cc) {
        const T v = xd[cc * plane + i];
        s += v * v;
      }
      const T d = k + alpha * s;
      (*denom)[c * plane + i] = d;
      od[c * plane + i] = xd[c * plane + i] * std::pow(d, -beta);
    }
  }
  check_finite(out, "lrn");

  if (tape.should_record({&x})) {
    const int radius = p.depth_radius;
    tape.record("lrn", {x}, out, [x, out, denom, radius, alpha, beta]() mutable {
      const int channels = x.dim(0);
      const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
      const auto xd = std::as_const(x).data();
      const auto gy = std::span<const T>(out.grad());
      auto gx = x.grad();
      // t_c = g_c * x_c * d_c^(-beta-1), shared by every j in c's window.
      std::vector<T> t(gy.size());
      for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = gy[i] * xd[i] * std::pow((*denom)[i], -beta - T(1));
      }
      for (int c = 0; c < channels; ++c) {
        const int lo = std::max(0, c - radius);
        const int hi = std::min(channels - 1, c + radius);
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t j = c * plane + i;
          T s = 0;
          for (int cc = lo; cc <= hi; ++cc) {
            s += t[cc * plane + i];
          }
          gx[j] += gy[j] * std::pow((*denom)[j], -beta) - T(2) * alpha * beta * xd[j] * s;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    od[i] = xd[i] > T(0) ? xd[i] : T(0);
  }
  if (tape.should_record({&x})) {
    tape.record("relu", {x}, out, [x, out]() mutable {
      const auto xd = std::as_const(x).data();
      const auto gy = std::span<const T>(out.grad());
      auto gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        if (xd[i] > T(0)) {
          gx[i] += gy[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  const auto ad = a.data();
  const auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) {
    od[i] = ad[i] + bd[i];
  }
  check_finite(out, "add");
  if (tape.should_record({&a, &b})) {
    tape.record("add", {a, b}, out, [a, b, out]() mutable {
      const auto gy = std::span<const T>(out.grad());
      if (a.requires_grad()) {
        accumulate(a.grad(), gy);
      }
      if (b.requires_grad()) {
        accumulate(b.grad(), gy);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  const auto ad = a.data();
  const auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) {
    od[i] = ad[i] * bd[i];
  }
  check_finite(out, "mul");
  if (tape.should_record({&a, &b})) {
    tape.record("mul", {a, b}, out, [a, b, out]() mutable {
      const auto gy = std::span<const T>(out.grad());
      const auto ad = std::as_const(a).data();
      const auto bd = std::as_const(b).data();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) {
          ga[i] += gy[i] * bd[i];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) {
          gb[i] += gy[i] * ad[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  const auto ad = a.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) {
    od[i] = ad[i] * factor;
  }
  check_finite(out, "scale");
  if (tape.should_record({&a})) {
    tape.record("scale", {a}, out, [a, out, factor]() mutable {
      const auto gy = std::span<const T>(out.grad());
      auto ga = a.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        ga[i] += gy[i] * factor;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) {
    s += v;
  }
  Tensor<T> out = Tensor<T>::scalar(s);
  check_finite(out, "sum");
  if (tape.should_record({&a})) {
    tape.record("sum", {a}, out, [a, out]() mutable {
      const T g = std::span<const T>(out.grad())[0];
      for (auto& v : a.grad()) {
        v += g;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> crop_pad(Tape<T>& tape, const Tensor<T>& x, const Sides& off, BorderMode mode) {
  require_rank(x.shape(), 3, "crop_pad", "input");
  const int channels = x.dim(0);
  const int height = x.dim(1);
  const int width = x.dim(2);
  const int out_h = height + off.top + off.bottom;
  const int out_w = width + off.left + off.right;
  if (out_h < 1 || out_w < 1) {
    throw ConfigError("crop_pad: offsets leave an empty output");
  }
  // Source index per output row/column; -1 means zero fill.
  auto rows = std::make_shared<std::vector<int>>(out_h);
  auto cols = std::make_shared<std::vector<int>>(out_w);
  auto map = [mode](int i, int n) {
    if (i >= 0 && i < n) {
      return i;
    }
    return mode == BorderMode::replicate ? std::clamp(i, 0, n - 1) : -1;
  };
  for (int y = 0; y < out_h; ++y) {
    (*rows)[y] = map(y - off.top, height);
  }
  for (int xo = 0; xo < out_w; ++xo) {
    (*cols)[xo] = map(xo - off.left, width);
  }
  Tensor<T> out(Shape{channels, out_h, out_w});
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      const int sy = (*rows)[y];
      for (int xo = 0; xo < out_w; ++xo) {
        const int sx = (*cols)[xo];
        out.at(c, y, xo) = (sy >= 0 && sx >= 0) ? x.at(c, sy, sx) : T(0);
      }
    }
  }
  if (tape.should_record({&x})) {
    tape.record("crop_pad", {x}, out, [x, out, rows, cols]() mutable {
      const int channels = out.dim(0);
      const int height = x.dim(1);
      const int width = x.dim(2);
      const auto gy = std::span<const T>(out.grad());
      auto gx = x.grad();
      std::size_t o = 0;
      for (int c = 0; c < channels; ++c) {
        for (int sy : *rows) {
          for (int sx : *cols) {
            if (sy >= 0 && sx >= 0) {
              gx[(static_cast<std::size_t>(c) * height + sy) * width + sx] += gy[o];
            }
            ++o;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_kernel(int channels, int factor) {
  if (factor < 2) {
    throw ConfigError("bilinear upsampling factor must be >= 2");
  }
  const int size = 2 * factor - factor % 2;
  const double centre = (size % 2 == 1) ? factor - 1 : factor - 0.5;
  Tensor<T> k(Shape{channels, channels, size, size});
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double wy = 1.0 - std::abs(y - centre) / factor;
        const double wx = 1.0 - std::abs(x - centre) / factor;
        k[((static_cast<std::int64_t>(c) * channels + c) * size + y) * size + x] = static_cast<T>(wy * wx);
      }
    }
  }
  return k;
}

template <typename T>
Tensor<T> bilinear_upsample(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel, int factor) {
  require_rank(x.shape(), 3, "bilinear_upsample", "input");
  if (factor < 2) {
    throw ConfigError("bilinear_upsample: factor must be >= 2");
  }
  const int size = 2 * factor - factor % 2;
  if (kernel.dim(2) != size || kernel.dim(3) != size) {
    throw ConfigError("bilinear_upsample: kernel must be " + std::to_string(size) + "x" + std::to_string(size) +
                      " for factor " + std::to_string(factor));
  }
  const int height = x.dim(1);
  const int width = x.dim(2);
  auto padded = crop_pad(tape, x, Sides::uniform(1), BorderMode::replicate);
  auto up = conv_transpose2d(tape, padded, kernel, Tensor<T>{}, factor);
  const int shift = factor / 2 + factor;
  const int full_h = up.dim(1);
  const int full_w = up.dim(2);
  const Sides crop{-shift, -(full_h - shift - factor * height), -shift, -(full_w - shift - factor * width)};
  return crop_pad(tape, up, crop);
}

template <typename T>
Tensor<T> bilinear_upsample(Tape<T>& tape, const Tensor<T>& x, int factor) {
  return bilinear_upsample(tape, x, bilinear_kernel<T>(x.dim(0), factor), factor);
}

#define STEREOAE_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                            const Conv2dParams&);                                                           \
  template Tensor<T> conv_transpose2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int); \
  template Tensor<T> maxpool2d(Tape<T>&, const Tensor<T>&, const Pool2dParams&);                            \
  template Tensor<T> lrn(Tape<T>&, const Tensor<T>&, const LrnParams&);                                     \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                                      \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                                  \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                       \
  template Tensor<T> crop_pad(Tape<T>&, const Tensor<T>&, const Sides&, BorderMode);                        \
  template Tensor<T> bilinear_kernel<T>(int, int);                                                          \
  template Tensor<T> bilinear_upsample(Tape<T>&, const Tensor<T>&, const Tensor<T>&, int);                  \
  template Tensor<T> bilinear_upsample(Tape<T>&, const Tensor<T>&, int);

STEREOAE_INSTANTIATE_OPS(float)
STEREOAE_INSTANTIATE_OPS(double)

#undef STEREOAE_INSTANTIATE_OPS

}  // namespace stereoae::ops
