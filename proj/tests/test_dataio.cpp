#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "stereoae/dataio.hpp"
#include "stereoae/errors.hpp"
#include "stereoae/image_io.hpp"

using namespace stereoae;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::path(STEREOAE_TEST_TMP) / "dataio" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// fB = 50, so depth 50/D gives disparity D.
SyntheticSceneSpec plane_scene(double disparity, int h = 24, int w = 80) {
  SyntheticSceneSpec s;
  s.id = "plane";
  s.height = h;
  s.width = w;
  s.calibration = {100.0, 0.5};
  s.background.seed = 17;
  s.background_depth_m = 50.0 / disparity;
  return s;
}

SyntheticSceneSpec two_planes() {
  auto s = plane_scene(4);
  s.id = "two";
  s.layout.push_back(PlaneRect{50.0 / 8, 20, 4, 50, 20, Texture{TextureKind::noise, 99}});
  return s;
}

double warp_residual(const StereoSample& s, const DisparityMap& d, const Tensor<double>* skip) {
  double worst = 0;
  for (int y = 0; y < s.height(); ++y)
    for (int x = 0; x < s.width(); ++x) {
      if (skip && skip->at(0, y, x) > 0) continue;
      const double xs = x + d(y, x);
      if (xs < 0 || xs > s.width() - 1) continue;
      const int x0 = std::min(static_cast<int>(xs), s.width() - 2);
      const double a = xs - x0;
      for (int c = 0; c < s.channels(); ++c) {
        const double v = (1 - a) * s.right.at(c, y, x0) + a * s.right.at(c, y, x0 + 1);
        worst = std::max(worst, std::abs(v - s.left.at(c, y, x)));
      }
    }
  return worst;
}

bool same_tensor(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace

TEST(Normalize, EightBitAnchors) {
  Tensor<double> raw(Shape{1, 1, 3}, std::vector<double>{128, 255, 0});
  const auto n = io::normalize(raw);
  EXPECT_EQ(n.data()[0], 0.0);
  EXPECT_DOUBLE_EQ(n.data()[1], 127.0 / 255);
  EXPECT_DOUBLE_EQ(n.data()[2], -128.0 / 255);
  const auto back = io::denormalize(n);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(back.data()[i], raw.data()[i]);
}

TEST(ImageIo, RoundTripAllFormats) {
  const auto dir = scratch_dir("io");
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> u(0, 255);
  for (const auto& [ext, ch] : {std::pair{".pgm", 1}, std::pair{".ppm", 3}, std::pair{".png", 1}, std::pair{".png", 3}}) {
    Tensor<double> img(Shape{ch, 5, 7});
    for (auto& v : img.data()) v = u(rng);
    const auto path = dir / ("img" + std::to_string(ch) + ext);
    io::write_image(path, img);
    const auto back = io::read_image(path);
    EXPECT_TRUE(same_tensor(img, back)) << path;
    const auto normalized = io::load_normalized(path);
    for (double v : normalized.data()) {
      EXPECT_GE(v, -128.0 / 255);
      EXPECT_LE(v, 127.0 / 255);
    }
  }
}

TEST(ImageIo, ErrorsCarryPath) {
  const auto dir = scratch_dir("ioerr");
  EXPECT_THROW(io::read_image(dir / "missing.pgm"), IoError);
  {
    std::ofstream f(dir / "deep.pgm", std::ios::binary);
    f << "P5\n2 2\n65535\n" << std::string(8, '\0');
  }
  try {
    io::read_image(dir / "deep.pgm");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("deep.pgm"), std::string::npos);
  }
  {
    std::ofstream f(dir / "short.pgm", std::ios::binary);
    f << "P5\n4 4\n255\nab";
  }
  EXPECT_THROW(io::read_image(dir / "short.pgm"), IoError);
  {
    std::ofstream f(dir / "ascii.pgm");
    f << "P2\n1 1\n255\n7\n";
  }
  EXPECT_THROW(io::read_image(dir / "ascii.pgm"), IoError);
}

TEST(Synthesis, SinglePlaneIsConstantShift) {
  const auto s = synthesize_pair(plane_scene(4));
  ASSERT_TRUE(s.gt_disparity);
  for (double v : s.gt_disparity->values()) EXPECT_EQ(v, 4.0);
  for (int y = 0; y < s.height(); ++y)
    for (int x = 0; x + 4 < s.width(); ++x) EXPECT_NEAR(s.right.at(0, y, x + 4), s.left.at(0, y, x), 1e-12);
  // Only the out-of-view strip is flagged.
  ASSERT_TRUE(s.occlusion);
  for (int y = 0; y < s.height(); ++y)
    for (int x = 0; x < s.width(); ++x) EXPECT_EQ(s.occlusion->at(0, y, x), x + 4 > s.width() - 1 ? 1.0 : 0.0);
}

TEST(Synthesis, TwoPlanesPiecewiseConstantAndWarpConsistent) {
  const auto s = synthesize_pair(two_planes());
  const auto& d = *s.gt_disparity;
  for (int y = 0; y < s.height(); ++y)
    for (int x = 0; x < s.width(); ++x) {
      const bool inside = x >= 20 && x < 50 && y >= 4 && y < 20;
      EXPECT_EQ(d(y, x), inside ? 8.0 : 4.0);
    }
  EXPECT_LT(warp_residual(s, d, &*s.occlusion), 1e-12);
  // The near rectangle lands 4 px further right than the background, hiding
  // background pixels x in [50, 54).
  for (int x = 40; x < 60; ++x) EXPECT_EQ(s.occlusion->at(0, 10, x), x >= 50 && x < 54 ? 1.0 : 0.0) << x;
}

TEST(Synthesis, FractionalDisparityOnSinusoidWithinInterpolationError) {
  auto spec = plane_scene(3.4);
  spec.background.kind = TextureKind::sinusoid;
  spec.background.wavelength_px = 16;
  const auto s = synthesize_pair(spec);
  // Linear interpolation of a sinusoid of wavelength L: error <= A (pi/L)^2 / 2.
  const double bound = spec.background.contrast * std::pow(M_PI / 16, 2) / 2 * 1.5;
  EXPECT_LT(warp_residual(s, *s.gt_disparity, &*s.occlusion), bound);
}

TEST(Synthesis, SpecValidation) {
  auto s = plane_scene(4);
  s.background_depth_m = 0.5;
  EXPECT_THROW(synthesize_pair(s), ConfigError);
  s = plane_scene(100);  // disparity beyond the image width
  s.depth_range = {0.1, 100};
  EXPECT_THROW(synthesize_pair(s), ConfigError);
  s = two_planes();
  s.layout[0].x1 = 500;
  EXPECT_THROW(synthesize_pair(s), ConfigError);
}

TEST(Synthesis, FamilyIsSeededAndValid) {
  const auto a = scene_family({}, 3, 7), b = scene_family({}, 3, 7), c = scene_family({}, 3, 8);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto sa = synthesize_pair(a[i]), sb = synthesize_pair(b[i]);
    EXPECT_TRUE(same_tensor(sa.left, sb.left));
    EXPECT_TRUE(same_tensor(sa.right, sb.right));
    for (double v : sa.gt_disparity->values()) EXPECT_GE(v, 0.0);
  }
  EXPECT_FALSE(same_tensor(synthesize_pair(a[0]).left, synthesize_pair(c[0]).left));
}

TEST(Augment, EightVariantsAndDeterminism) {
  const auto s = synthesize_pair(two_planes());
  std::mt19937_64 r1(5), r2(5);
  const auto a = augment(s, r1), b = augment(s, r2);
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_TRUE(same_tensor(a[i].left, b[i].left));
    EXPECT_TRUE(same_tensor(a[i].gt_disparity->tensor(), b[i].gt_disparity->tensor()));
    EXPECT_EQ(a[i].left.shape(), s.left.shape());
  }
  EXPECT_TRUE(same_tensor(a[0].left, s.left));
}

TEST(Augment, IdentityParametersReproduceInput) {
  const auto s = synthesize_pair(two_planes());
  const auto out = apply_augmentation(s, AugmentParams{});
  EXPECT_TRUE(same_tensor(out.left, s.left));
  EXPECT_TRUE(same_tensor(out.right, s.right));
  EXPECT_TRUE(same_tensor(out.gt_disparity->tensor(), s.gt_disparity->tensor()));
}

TEST(Augment, FlipSwapOfPlaneAndInvolution) {
  const auto plane = synthesize_pair(plane_scene(4));
  const auto f = flip_swap(plane);
  for (double v : f.gt_disparity->values()) EXPECT_EQ(v, 4.0);
  // Flipped pair is still a valid stereo pair with positive disparity.
  EXPECT_LT(warp_residual(f, *f.gt_disparity, nullptr), 1e-12);

  const auto s = synthesize_pair(two_planes());
  const auto twice = flip_swap(flip_swap(s));
  EXPECT_TRUE(same_tensor(twice.left, s.left));
  EXPECT_TRUE(same_tensor(twice.right, s.right));
  EXPECT_TRUE(same_tensor(twice.gt_disparity->tensor(), s.gt_disparity->tensor()));
}

TEST(Augment, ScaleMultipliesDisparity) {
  const auto s = synthesize_pair(plane_scene(4, 32, 96));
  AugmentParams p;
  p.scale = 1.25;
  p.crop_x = 10;
  p.crop_y = 3;
  const auto out = apply_augmentation(s, p);
  for (double v : out.gt_disparity->values()) EXPECT_NEAR(v, 5.0, 1e-12);
  EXPECT_EQ(out.left.shape(), s.left.shape());
  p.crop_x = 100;
  EXPECT_THROW(apply_augmentation(s, p), ConfigError);
}

TEST(Augment, ColourActsOnEightBitIntensity) {
  const auto s = synthesize_pair(plane_scene(4));
  AugmentParams p;
  p.color = {1.1};
  const auto out = apply_augmentation(s, p);
  const double raw = s.left.at(0, 3, 3) * 255 + 128;
  EXPECT_NEAR(out.left.at(0, 3, 3), (std::min(raw * 1.1, 255.0) - 128) / 255, 1e-12);
  p.color = {1.0, 1.0};
  EXPECT_THROW(apply_augmentation(s, p), ConfigError);
}

TEST(ResizeForStage, IdentityHalvingAndWarpConsistency) {
  const auto s = synthesize_pair(plane_scene(4, 32, 96));
  const auto same = resize_for_stage(s, 32, 96);
  EXPECT_TRUE(same_tensor(same.left, s.left));
  const auto half = resize_for_stage(s, 16, 48);
  for (double v : half.gt_disparity->values()) EXPECT_EQ(v, 2.0);
  // 2x2 area average.
  EXPECT_DOUBLE_EQ(half.left.at(0, 1, 2),
                   (s.left.at(0, 2, 4) + s.left.at(0, 2, 5) + s.left.at(0, 3, 4) + s.left.at(0, 3, 5)) / 4);

  const auto small = resize_for_stage(synthesize_pair(plane_scene(6, 32, 96)), 16, 48);
  const auto loss_at = [&](double shift) {
    DisparityMap d(16, 48, shift);
    double sum = 0;
    int n = 0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x + 5 < 48; ++x) {
        const double xs = x + shift;
        const int x0 = static_cast<int>(xs);
        const double a = xs - x0;
        const double v = (1 - a) * small.right.at(0, y, x0) + a * small.right.at(0, y, x0 + 1);
        sum += std::pow(v - small.left.at(0, y, x), 2);
        ++n;
      }
    return sum / n;
  };
  EXPECT_LT(loss_at(3), loss_at(2));
  EXPECT_LT(loss_at(3), loss_at(4));
}

TEST(Listing, ParsesScenesAndFamilies) {
  const std::string text =
      "# comment\n"
      "calibration 100 0.5\n"
      "scene a 24 80\n"
      "background 12.5 noise 3 wavelength 10\n"
      "rect 6.25 20 4 50 20 checker 4 contrast 0.2\n"
      "family 2 9 height 32 width 96 prefix fam\n";
  const auto l = parse_scene_listing(text, "t.scenes");
  ASSERT_EQ(l.scenes.size(), 3u);
  EXPECT_EQ(l.scenes[0].id, "a");
  EXPECT_EQ(l.scenes[0].calibration, (Calibration{100, 0.5}));
  EXPECT_EQ(l.scenes[0].layout.size(), 1u);
  EXPECT_EQ(l.scenes[0].layout[0].texture.kind, TextureKind::checker);
  EXPECT_EQ(l.scenes[0].background.wavelength_px, 10.0);
  EXPECT_EQ(l.scenes[1].width, 96);
  EXPECT_EQ(l.scenes[1].id.rfind("fam", 0), 0u);
}

TEST(Listing, ErrorsCarryLineNumbers) {
  const auto expect_line = [](const std::string& text, const std::string& prefix) {
    try {
      parse_scene_listing(text, "bad.scenes");
      ADD_FAILURE() << "no error for: " << text;
    } catch (const ConfigError& e) {
      EXPECT_EQ(std::string(e.what()).rfind(prefix, 0), 0u) << e.what();
    }
  };
  expect_line("scene a 24 80\nbackground 12.5 noise 3\nbogus 1\n", "bad.scenes:3:");
  expect_line("\n\nrect 5 0 0 4 4 noise 1\n", "bad.scenes:3:");
  expect_line("scene a 24 80\nbackground twelve noise 3\n", "bad.scenes:2:");
  expect_line("scene a 24 80\nbackground 12.5 marble 3\n", "bad.scenes:2:");
  expect_line("calibration -1 0.5\n", "bad.scenes:1:");
  expect_line("# nothing\n", "bad.scenes:");
}

TEST(DatasetIo, RoundTrip) {
  const auto dir = scratch_dir("dataset");
  std::vector<StereoSample> samples;
  for (auto s : {synthesize_pair(two_planes()), synthesize_pair(plane_scene(3))}) {
    s.left = io::quantize_normalized(s.left);
    s.right = io::quantize_normalized(s.right);
    samples.push_back(s);
  }
  samples[1].id = "second";
  write_dataset(dir, samples);
  const auto back = read_dataset(dir);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].id, samples[i].id);
    EXPECT_TRUE(same_tensor(back[i].left, samples[i].left));
    EXPECT_TRUE(same_tensor(back[i].right, samples[i].right));
    EXPECT_EQ(back[i].calibration, samples[i].calibration);
    ASSERT_TRUE(back[i].gt_disparity);
    for (std::size_t k = 0; k < samples[i].gt_disparity->values().size(); ++k)
      EXPECT_EQ(back[i].gt_disparity->values()[k], static_cast<float>(samples[i].gt_disparity->values()[k]));
    ASSERT_TRUE(back[i].occlusion);
    EXPECT_TRUE(same_tensor(*back[i].occlusion, *samples[i].occlusion));
  }
  EXPECT_THROW(read_dataset(dir / "nope"), IoError);
}

TEST(ProxyLabelIo, RoundTripAndResize) {
  const auto dir = scratch_dir("labels");
  ProxyLabel l{DisparityMap(4, 6, 2.5), Tensor<double>(Shape{1, 4, 6}, 1.0)};
  l.valid.at(0, 1, 1) = 0;
  write_proxy_labels(dir, {"x"}, {l});
  const auto back = read_proxy_labels(dir);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_TRUE(same_tensor(back[0].valid, l.valid));
  EXPECT_NEAR(back[0].hole_fraction(), 1.0 / 24, 1e-15);
  const auto half = resize_proxy_label(l, 2, 3);
  for (double v : half.disparity.values()) EXPECT_TRUE(v == 1.25 || v == 0.0);
}
