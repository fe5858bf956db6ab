#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fd_oracle.hpp"
#include "stereoae/errors.hpp"
#include "stereoae/ops.hpp"

using namespace stereoae;
using Inputs = std::vector<Tensor<double>>;

namespace {

// Direct six-loop cross-correlation.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b, int sh, int sw,
                          ops::Sides pad) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int oh = (H + pad.top + pad.bottom - kh) / sh + 1;
  const int ow = (W + pad.left + pad.right - kw) / sw + 1;
  Tensor<double> y(Shape{O, oh, ow});
  for (int o = 0; o < O; ++o)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double s = b.defined() ? b.data()[o] : 0.0;
        for (int c = 0; c < C; ++c)
          for (int u = 0; u < kh; ++u)
            for (int v = 0; v < kw; ++v) {
              const int yy = i * sh + u - pad.top, xx = j * sw + v - pad.left;
              if (yy >= 0 && yy < H && xx >= 0 && xx < W) s += k.data()[((o * C + c) * kh + u) * kw + v] * x.at(c, yy, xx);
            }
        y.at(o, i, j) = s;
      }
  return y;
}

void expect_near(const Tensor<double>& a, const Tensor<double>& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], tol) << "index " << i;
}

}  // namespace

TEST(Conv2d, MatchesNaiveLoops) {
  std::mt19937_64 rng(1);
  Tape<double> t(TapeMode::inference);
  for (auto [sh, pad] : {std::pair{1, ops::Sides{0, 0, 0, 0}}, std::pair{2, ops::Sides{1, 2, 0, 3}},
                         std::pair{4, ops::Sides{0, 0, 0, 0}}}) {
    const auto x = fd::random({3, 13, 15}, rng);
    const auto k = fd::random({5, 3, 3, 4}, rng);
    const auto b = fd::random({5}, rng);
    expect_near(ops::conv2d(t, x, k, b, {sh, sh, pad}), naive_conv(x, k, b, sh, sh, pad), 1e-12);
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  Tape<double> t;
  EXPECT_THROW(ops::conv2d(t, Tensor<double>(Shape{2, 5, 5}), Tensor<double>(Shape{1, 3, 3, 3}), Tensor<double>()),
               ConfigError);
}

TEST(ConvTranspose2d, IsAdjointOfStridedConv) {
  // <conv(x), y> == <x, conv_transpose(y)> for matching stride and kernel.
  std::mt19937_64 rng(2);
  Tape<double> t(TapeMode::inference);
  const auto x = fd::random({2, 10, 10}, rng);
  const auto k = fd::random({3, 2, 4, 4}, rng);  // [O,C,kh,kw] for conv, [C_in=O, C_out=C] for transposed
  const auto cx = ops::conv2d(t, x, k, Tensor<double>(), {2, 2, {}});
  const auto y = fd::random(cx.shape(), rng);
  const auto ty = ops::conv_transpose2d(t, y, k, Tensor<double>(), 2);
  double lhs = 0, rhs = 0;
  for (std::int64_t i = 0; i < cx.numel(); ++i) lhs += cx.data()[i] * y.data()[i];
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) rhs += x.at(c, i, j) * ty.at(c, i, j);
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Maxpool, PicksWindowMaximumAndIgnoresPadding) {
  Tensor<double> x(Shape{1, 3, 3}, std::vector<double>{-5, -4, -3, -2, -1, -6, -7, -8, -9});
  Tape<double> t(TapeMode::inference);
  const auto y = ops::maxpool2d(t, x, ops::Pool2dParams{2, 2, 2, 2, {1, 0, 1, 0}});
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(y.at(0, 0, 0), -5);  // only real element, padding never wins
  EXPECT_EQ(y.at(0, 0, 1), -3);
  EXPECT_EQ(y.at(0, 1, 0), -2);
  EXPECT_EQ(y.at(0, 1, 1), -1);
}

TEST(Lrn, MatchesFormula) {
  std::mt19937_64 rng(3);
  const auto x = fd::random({6, 2, 2}, rng, -2, 2);
  const ops::LrnParams p{2, 0.3, 0.75, 2.0};
  Tape<double> t(TapeMode::inference);
  const auto y = ops::lrn(t, x, p);
  for (int c = 0; c < 6; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double s = 0;
        for (int d = std::max(0, c - 2); d <= std::min(5, c + 2); ++d) s += x.at(d, i, j) * x.at(d, i, j);
        EXPECT_NEAR(y.at(c, i, j), x.at(c, i, j) / std::pow(2.0 + 0.3 * s, 0.75), 1e-14);
      }
}

TEST(CropPad, ZeroAndReplicateBorders) {
  Tensor<double> x(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tape<double> t(TapeMode::inference);
  const auto z = ops::crop_pad(t, x, {1, 0, 0, 1}, ops::BorderMode::zero);
  ASSERT_EQ(z.shape(), (Shape{1, 3, 3}));
  EXPECT_EQ(z.at(0, 0, 0), 0);
  EXPECT_EQ(z.at(0, 1, 0), 1);
  EXPECT_EQ(z.at(0, 2, 2), 0);
  const auto r = ops::crop_pad(t, x, {1, 0, 0, 1}, ops::BorderMode::replicate);
  EXPECT_EQ(r.at(0, 0, 0), 1);
  EXPECT_EQ(r.at(0, 0, 2), 2);
  EXPECT_EQ(r.at(0, 2, 2), 4);
  const auto c = ops::crop_pad(t, x, {-1, 0, -1, 0});
  ASSERT_EQ(c.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(c.at(0, 0, 0), 4);
  EXPECT_THROW(ops::crop_pad(t, x, {-1, -1, 0, 0}), ConfigError);
}

TEST(BilinearUpsample, MatchesHalfPixelInterpolation) {
  std::mt19937_64 rng(4);
  const auto x = fd::random({2, 4, 5}, rng);
  Tape<double> t(TapeMode::inference);
  for (int f : {2, 3, 4}) {
    const auto y = ops::bilinear_upsample(t, x, f);
    ASSERT_EQ(y.shape(), (Shape{2, 4 * f, 5 * f}));
    const auto sample = [&](int c, double u, double v) {
      u = std::clamp(u, 0.0, 3.0);
      v = std::clamp(v, 0.0, 4.0);
      const int i0 = std::min(static_cast<int>(u), 2), j0 = std::min(static_cast<int>(v), 3);
      const double a = u - i0, b = v - j0;
      return (1 - a) * ((1 - b) * x.at(c, i0, j0) + b * x.at(c, i0, j0 + 1)) +
             a * ((1 - b) * x.at(c, i0 + 1, j0) + b * x.at(c, i0 + 1, j0 + 1));
    };
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 4 * f; ++i)
        for (int j = 0; j < 5 * f; ++j)
          EXPECT_NEAR(y.at(c, i, j), sample(c, (i + 0.5) / f - 0.5, (j + 0.5) / f - 0.5), 1e-12)
              << "factor " << f << " at " << i << "," << j;
  }
}

TEST(BilinearUpsample, ConstantStaysConstant) {
  Tensor<double> x(Shape{1, 3, 3}, 2.5);
  Tape<double> t(TapeMode::inference);
  const auto y = ops::bilinear_upsample(t, x, 2);
  for (double v : y.data()) EXPECT_NEAR(v, 2.5, 1e-14);
}

TEST(OpsGradient, FiniteDifferenceOracle) {
  std::mt19937_64 rng(5);
  const double tol = 1e-6;
  EXPECT_LT(fd::check_op([](Tape<double>& t, const Inputs& in) { return ops::conv2d(t, in[0], in[1], in[2], {2, 1, {1, 0, 2, 1}}); },
                         {fd::random({2, 6, 5}, rng), fd::random({3, 2, 3, 2}, rng), fd::random({3}, rng)}, rng),
            tol);
  EXPECT_LT(fd::check_op([](Tape<double>& t, const Inputs& in) { return ops::conv_transpose2d(t, in[0], in[1], in[2], 2); },
                         {fd::random({2, 3, 4}, rng), fd::random({2, 2, 4, 4}, rng), fd::random({2}, rng)}, rng),
            tol);
  EXPECT_LT(fd::check_op([](Tape<double>& t, const Inputs& in) { return ops::maxpool2d(t, in[0], {3, 3, 2, 2, ops::Sides::uniform(1)}); },
                         {fd::random({2, 5, 6}, rng)}, rng),
            tol);
  EXPECT_LT(fd::check_op([](Tape<double>& t, const Inputs& in) { return ops::lrn(t, in[0], {1, 0.5, 0.75, 1.5}); },
                         {fd::random({4, 2, 3}, rng, -2, 2)}, rng),
            tol);
  EXPECT_LT(fd::check_op([](Tape<double>& t, const Inputs& in) { return ops::bilinear_upsample(t, in[0], in[1], 2); },
                         {fd::random({1, 3, 4}, rng), ops::bilinear_kernel<double>(1, 2)}, rng),
            tol);
  EXPECT_LT(fd::check_op([](Tape<double>& t, const Inputs& in) { return ops::crop_pad(t, in[0], {2, -1, -1, 1}, ops::BorderMode::replicate); },
                         {fd::random({2, 4, 4}, rng)}, rng),
            tol);
}

TEST(Relu, GradientIsStepFunction) {
  Tensor<double> x(Shape{4}, std::vector<double>{-2, -0.1, 0.1, 3});
  x.set_requires_grad(true);
  Tape<double> t;
  const auto y = ops::relu(t, x);
  t.backward(ops::sum(t, y));
  EXPECT_EQ(y.data()[0], 0);
  EXPECT_EQ(y.data()[3], 3);
  EXPECT_EQ(x.grad()[0], 0);
  EXPECT_EQ(x.grad()[1], 0);
  EXPECT_EQ(x.grad()[2], 1);
  EXPECT_EQ(x.grad()[3], 1);
}

TEST(SweepExtent, RejectsEmptyOutputs) {
  EXPECT_EQ(ops::sweep_extent(10, 0, 0, 3, 2, "t"), 4);
  EXPECT_THROW(ops::sweep_extent(2, 0, 0, 3, 1, "t"), ConfigError);
}
