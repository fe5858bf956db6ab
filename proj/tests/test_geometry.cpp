#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fd_oracle.hpp"
#include "stereoae/dataio.hpp"
#include "stereoae/errors.hpp"
#include "stereoae/geometry.hpp"

using namespace stereoae;
using namespace stereoae::geometry;

namespace {

Tensor<double> constant_disparity(int h, int w, double d) { return Tensor<double>(Shape{1, h, w}, d); }

// Plain loop version of the scanline sampler.
double sample_row(const Tensor<double>& img, int c, int y, double xs, bool* inside) {
  const int w = img.dim(2);
  *inside = xs >= 0 && xs <= w - 1;
  if (!*inside) return 0;
  const int x0 = std::min(static_cast<int>(std::floor(xs)), w - 2);
  const double a = xs - x0;
  return (1 - a) * img.at(c, y, x0) + a * img.at(c, y, x0 + 1);
}

}  // namespace

TEST(InverseWarp, ZeroDisparityIsIdentity) {
  std::mt19937_64 rng(1);
  const auto right = fd::random({3, 5, 7}, rng);
  Tape<double> t(TapeMode::inference);
  const auto w = inverse_warp(t, right, constant_disparity(5, 7, 0));
  for (std::int64_t i = 0; i < right.numel(); ++i) EXPECT_EQ(w.warped.data()[i], right.data()[i]);
  for (double m : w.mask.data()) EXPECT_EQ(m, 1.0);
}

TEST(InverseWarp, IntegerShiftIsExact) {
  std::mt19937_64 rng(2);
  const auto right = fd::random({2, 4, 9}, rng);
  Tape<double> t(TapeMode::inference);
  for (int k : {1, 3}) {
    const auto w = inverse_warp(t, right, constant_disparity(4, 9, k));
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 9; ++x) {
          if (x + k <= 8) {
            EXPECT_EQ(w.warped.at(c, y, x), right.at(c, y, x + k));
            EXPECT_EQ(w.mask.at(0, y, x), 1.0);
          } else {
            EXPECT_EQ(w.warped.at(c, y, x), 0.0);
            EXPECT_EQ(w.mask.at(0, y, x), 0.0);
          }
        }
  }
}

TEST(InverseWarp, MatchesLoopOracleForFractionalAndNegativeDisparity) {
  std::mt19937_64 rng(3);
  const auto right = fd::random({1, 3, 11}, rng);
  const auto disp = fd::random({1, 3, 11}, rng, -2.5, 3.5);
  Tape<double> t(TapeMode::inference);
  const auto w = inverse_warp(t, right, disp);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 11; ++x) {
      bool inside = false;
      const double v = sample_row(right, 0, y, x + disp.at(0, y, x), &inside);
      EXPECT_NEAR(w.warped.at(0, y, x), v, 1e-15);
      EXPECT_EQ(w.mask.at(0, y, x), inside ? 1.0 : 0.0);
    }
}

TEST(InverseWarp, GradientAwayFromKnots) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    auto disp = fd::random({1, 4, 10}, rng, 0, 3);
    // Push samples at least 1e-3 away from knots and inside the image.
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 10; ++x) {
        double& d = disp.at(0, y, x);
        if (x + d > 8.9) d = 8.9 - x;  // stay interior
        const double f = (x + d) - std::floor(x + d);
        if (f < 0.01) d += 0.02;
        if (f > 0.99) d -= 0.02;
      }
    const double err = fd::check_op(
        [](Tape<double>& t, const std::vector<Tensor<double>>& in) { return inverse_warp(t, in[0], in[1]).warped; },
        {fd::random({2, 4, 10}, rng), disp}, rng);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(PhotometricLoss, ClosedForms) {
  std::mt19937_64 rng(5);
  const auto a = fd::random({1, 4, 6}, rng);
  Tensor<double> full(Shape{1, 4, 6}, 1.0);
  Tape<double> t(TapeMode::inference);
  EXPECT_EQ(photometric_loss(t, a, a, full).value.item(), 0.0);

  const double c = 0.3;
  Tensor<double> shifted = a.clone();
  for (auto& v : shifted.data()) v += c;
  EXPECT_NEAR(photometric_loss(t, shifted, a, full).value.item(), c * c, 1e-15);

  // Channel-summed: three channels each off by c give 3c^2.
  const auto rgb = fd::random({3, 4, 6}, rng);
  Tensor<double> rgb_shift = rgb.clone();
  for (auto& v : rgb_shift.data()) v += c;
  EXPECT_NEAR(photometric_loss(t, rgb_shift, rgb, full).value.item(), 3 * c * c, 1e-14);

  // Only masked-in pixels count.
  Tensor<double> half(Shape{1, 4, 6}, 0.0);
  Tensor<double> spiky = shifted.clone();
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 4; ++y) half.at(0, y, x) = 1;
  for (int y = 0; y < 4; ++y) spiky.at(0, y, 5) += 100;
  const auto l = photometric_loss(t, spiky, a, half);
  EXPECT_EQ(l.valid_pixels, 12);
  EXPECT_NEAR(l.value.item(), c * c, 1e-15);
}

TEST(PhotometricLoss, AllInvalidIsZeroAndFlagged) {
  std::mt19937_64 rng(6);
  auto a = fd::random({1, 3, 3}, rng).set_requires_grad(true);
  const auto b = fd::random({1, 3, 3}, rng);
  Tape<double> t;
  const auto l = photometric_loss(t, a, b, Tensor<double>(Shape{1, 3, 3}, 0.0));
  EXPECT_TRUE(l.degenerate());
  EXPECT_EQ(l.value.item(), 0.0);
}

TEST(PhotometricLoss, BruteForceShiftFindsTrueDisparity) {
  for (int d_true : {2, 5, 7}) {
    SyntheticSceneSpec spec;
    spec.id = "flat";
    spec.height = 24;
    spec.width = 96;
    spec.calibration = {100.0, 0.5};
    spec.background.seed = 40 + d_true;
    spec.background_depth_m = spec.calibration.fb() / d_true;
    spec.depth_range = {0.5, 100.0};
    const auto s = synthesize_pair(spec);
    Tape<double> t(TapeMode::inference);
    int best = -1;
    double best_loss = 1e300;
    for (int k = 0; k <= 8; ++k) {
      const auto w = inverse_warp(t, s.right, constant_disparity(24, 96, k));
      const double l = photometric_loss(t, s.left, w.warped, w.mask).value.item();
      if (l < best_loss) best_loss = l, best = k;
    }
    EXPECT_EQ(best, d_true);
    EXPECT_LT(best_loss, 1e-20);
  }
}

TEST(Smoothness, HandValues) {
  Tape<double> t(TapeMode::inference);
  EXPECT_EQ(smoothness_loss(t, constant_disparity(3, 4, 2.5)).item(), 0.0);
  // 2x2 ramp in x: x-terms {1,1}, y-terms {0,0}.
  Tensor<double> ramp(Shape{1, 2, 2}, std::vector<double>{0, 1, 0, 1});
  EXPECT_DOUBLE_EQ(smoothness_loss(t, ramp).item(), 0.5);
}

TEST(Smoothness, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const double err = fd::check_op(
      [](Tape<double>& t, const std::vector<Tensor<double>>& in) { return smoothness_loss(t, in[0]); },
      {fd::random({1, 5, 6}, rng, -3, 3)}, rng);
  EXPECT_LT(err, 1e-6);
}

TEST(TotalLoss, Composition) {
  std::mt19937_64 rng(8);
  const auto left = fd::random({1, 6, 12}, rng);
  const auto right = fd::random({1, 6, 12}, rng);
  const auto disp = fd::random({1, 6, 12}, rng, 0.1, 2.9);
  Tape<double> t(TapeMode::inference);
  const auto b = total_loss(t, left, right, disp, 0.01);
  EXPECT_EQ(b.total.item(), b.recons.item() + 0.01 * b.smooth.item());
  const auto g0 = total_loss(t, left, right, disp, 0.0);
  EXPECT_EQ(g0.total.item(), g0.recons.item());
  const auto flat = total_loss(t, left, right, constant_disparity(6, 12, 1.5), 0.01);
  EXPECT_EQ(flat.total.item(), flat.recons.item());
  EXPECT_EQ(total_loss(t, left, left, constant_disparity(6, 12, 0), 0.01).total.item(), 0.0);
}

TEST(TotalLoss, GradientWrtDisparity) {
  std::mt19937_64 rng(9);
  auto disp = fd::random({1, 5, 12}, rng, 0.2, 2.8);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 12; ++x) {
      double& d = disp.at(0, y, x);
      if (x + d > 10.9) d = 10.9 - x;
      const double f = (x + d) - std::floor(x + d);
      if (f < 0.01) d += 0.02;
      if (f > 0.99) d -= 0.02;
    }
  const auto left = fd::random({1, 5, 12}, rng);
  const auto right = fd::random({1, 5, 12}, rng);
  const double err = fd::check_op(
      [&](Tape<double>& t, const std::vector<Tensor<double>>& in) { return total_loss(t, left, right, in[0]).total; },
      {disp}, rng);
  EXPECT_LT(err, 1e-4);
}

TEST(LinearizedWarp, ZeroIncrementEqualsWarp) {
  std::mt19937_64 rng(10);
  const auto right = fd::random({2, 4, 10}, rng);
  const auto d = fd::random({1, 4, 10}, rng, -1, 4);
  Tape<double> t(TapeMode::inference);
  const auto lin = linearized_warp(right, d, d);
  const auto w = inverse_warp(t, right, d);
  for (std::int64_t i = 0; i < lin.numel(); ++i) EXPECT_EQ(lin.data()[i], w.warped.data()[i]);
}

TEST(LinearizedWarp, SecondOrderErrorOnQuadraticImage) {
  // right(x) = 0.01 x^2 sampled on the grid; the first-order model around an
  // integer shift must match the continuous image within 0.5 * f'' * 0.25^2.
  const int w = 30;
  const auto f = [](double x) { return 0.01 * x * x; };
  Tensor<double> right(Shape{1, 1, w});
  for (int x = 0; x < w; ++x) right.at(0, 0, x) = f(x);
  Tensor<double> d0(Shape{1, 1, w}, 2.0), d1(Shape{1, 1, w}, 2.25);
  const auto lin = linearized_warp(right, d0, d1);
  const double bound = 0.5 * 0.02 * 0.25 * 0.25 + 1e-12;
  for (int x = 0; x + 3 < w; ++x) EXPECT_LE(std::abs(lin.at(0, 0, x) - f(x + 2.25)), bound) << x;
}

TEST(LinearizedWarp, LossGradientMatchesTrueLossAtExpansionPoint) {
  // Ramp image: central differences and interpolation chords share one slope.
  std::mt19937_64 rng(11);
  const int h = 3, w = 14;
  const auto left = fd::random({1, h, w}, rng);
  Tensor<double> right(Shape{1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) right.at(0, y, x) = 0.07 * x - 0.2 * y;
  Tensor<double> d0(Shape{1, h, w});
  std::uniform_real_distribution<double> u(0.3, 0.7);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) d0.at(0, y, x) = x + 4 < w ? 1 + u(rng) : 0.0;

  auto d = d0.clone();
  d.set_requires_grad(true);
  Tape<double> t;
  const auto wp = inverse_warp(t, right, d);
  const auto loss = photometric_loss(t, left, wp.warped, wp.mask);
  t.backward(loss.value);

  const auto lin = linearized_warp(right, d0, d0);
  const auto ix = horizontal_gradient(right);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 4 < w; ++x) {
      // d/dD of mean((lin - left)^2) with lin' = right_x at the warped abscissa.
      const double analytic = 2 * (lin.at(0, y, x) - left.at(0, y, x)) * ix.at(0, y, x + 1) / loss.valid_pixels;
      EXPECT_NEAR(d.grad()[y * w + x], analytic, 1e-5);
    }
}

TEST(Depth, ConversionAndClamp) {
  const Calibration cal{100.0, 0.54};
  DisparityMap d(1, 3);
  d(0, 0) = 27;
  d(0, 1) = 0;
  d(0, 2) = -4;
  const auto depth = disparity_to_depth(d, cal, {1.0, 50.0});
  EXPECT_NEAR(depth(0, 0), 2.0, 1e-12);
  EXPECT_EQ(depth(0, 1), 50.0);
  EXPECT_EQ(depth(0, 2), 50.0);
  DisparityMap big(1, 1, 200.0);
  EXPECT_EQ(disparity_to_depth(big, cal, {1.0, 50.0})(0, 0), 1.0);
}

TEST(Depth, RoundTripInsideRange) {
  const Calibration cal{721.0, 0.54};
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(cal.fb() / 50 + 1e-6, cal.fb() / 1 - 1e-6);
  DisparityMap d(4, 5);
  for (auto& v : d.values()) v = u(rng);
  const auto back = depth_to_disparity(disparity_to_depth(d, cal), cal);
  for (std::size_t i = 0; i < d.values().size(); ++i) EXPECT_NEAR(back.values()[i], d.values()[i], 1e-12);
}

TEST(Depth, CalibrationValidation) {
  EXPECT_THROW((Calibration{0.0, 0.5}.validate()), ConfigError);
  EXPECT_THROW((Calibration{100.0, -1}.validate()), ConfigError);
  EXPECT_NO_THROW((Calibration{100.0, 0.54}.validate()));
}
