#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stereoae/geometry.hpp"
#include "stereoae/tensor.hpp"

namespace stereoae {

// One rectified pair. Images are normalized ((v - 128) / 255), [C,H,W].
struct StereoSample {
  std::string id;
  Tensor<double> left;
  Tensor<double> right;
  Calibration calibration;
  std::optional<DisparityMap> gt_disparity;
  // Disparity of the right view, when known; lets flip_swap stay exact.
  std::optional<DisparityMap> gt_disparity_right;
  // 1 where a left pixel is hidden in, or falls outside, the right view.
  std::optional<Tensor<double>> occlusion;

  int channels() const { return left.dim(0); }
  int height() const { return left.dim(1); }
  int width() const { return left.dim(2); }
  void validate() const;
};

// Dense disparity target with a validity raster ([1,H,W], 0 or 1).
struct ProxyLabel {
  DisparityMap disparity;
  Tensor<double> valid;

  double hole_fraction() const;
};

enum class TextureKind { noise, sinusoid, checker };

std::string to_string(TextureKind kind);
TextureKind texture_kind_from_string(const std::string& name);

// Surface pattern evaluated at continuous left-image coordinates.
struct Texture {
  TextureKind kind = TextureKind::noise;
  std::uint64_t seed = 0;
  double wavelength_px = 8.0;  // dominant scale; noise spans [wl/4, 4 wl]
  double contrast = 0.35;      // peak amplitude in normalized units
  double mean = 0.0;
};

// Precomputed evaluator for one Texture.
class TextureSampler {
 public:
  explicit TextureSampler(const Texture& texture);
  double operator()(double x, double y) const;

 private:
  struct Wave {
    double kx, ky, phase;
  };
  Texture texture_;
  std::vector<Wave> waves_;
  double norm_ = 1.0;
};

// Fronto-parallel rectangle, half-open pixel bounds in the left image.
struct PlaneRect {
  double depth_m = 10.0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  Texture texture;
};

struct SyntheticSceneSpec {
  std::string id;
  int height = 64;
  int width = 192;
  Calibration calibration{200.0, 0.54};
  Texture background;
  double background_depth_m = 50.0;
  std::vector<PlaneRect> layout;
  DepthClamp depth_range;

  void validate() const;
};

// Renders left/right views, exact disparity and occlusion. Pixels take the
// nearest surface covering them; the right view satisfies
// right(x + D(x)) == left(x) wherever x is visible in both views.
StereoSample synthesize_pair(const SyntheticSceneSpec& spec);

// Street-like layout family: distant backdrop, a ground made of horizontal
// strips whose disparity grows toward the bottom, and a few upright objects
// standing on the ground.
struct SceneFamilyParams {
  int height = 64;
  int width = 192;
  Calibration calibration{200.0, 0.54};
  int min_objects = 1;
  int max_objects = 2;
  double horizon_min = 0.35;  // fraction of height
  double horizon_max = 0.5;
  double ground_near_depth_m = 7.0;
  int strip_rows = 2;
  double wavelength_px = 12.0;
  TextureKind texture = TextureKind::noise;
};

std::vector<SyntheticSceneSpec> scene_family(const SceneFamilyParams& params, int count, std::uint64_t seed,
                                             const std::string& id_prefix = "scene");

// Line-oriented scene listing; see README for the grammar. Errors carry
// "<file>:<line>:" prefixes.
struct SceneListing {
  std::vector<SyntheticSceneSpec> scenes;
};
SceneListing parse_scene_listing(const std::string& text, const std::string& source_name = "<spec>");
SceneListing load_scene_listing(const std::filesystem::path& path);

struct AugmentParams {
  std::vector<double> color;  // per-channel multipliers; empty = identity
  double scale = 1.0;
  double crop_y = 0.0;  // offsets into the scaled image, in pixels
  double crop_x = 0.0;
  bool flip = false;
};

// Colour scaling, zoom-and-crop (disparity scales by s) and horizontal
// flip with view swap, applied in that order.
StereoSample apply_augmentation(const StereoSample& sample, const AugmentParams& params);

// Mirrors both views and swaps them so disparities stay positive.
StereoSample flip_swap(const StereoSample& sample);

// The 8 combinations of {colour, scale, flip}; index 0 is the original.
// colour factors ~ U[0.9, 1.1] per channel, scale ~ U[1, 1.6].
std::vector<StereoSample> augment(const StereoSample& sample, std::mt19937_64& rng);

// Downsamples by repeated 2x2 averaging when the target divides the source
// by a power of two, bilinear otherwise. Disparity values scale with width.
StereoSample resize_for_stage(const StereoSample& sample, int height, int width);

// Half-pixel-centre bilinear resampling of every channel of [C,H,W].
Tensor<double> resize_bilinear(const Tensor<double>& image, int height, int width);
Tensor<double> downsample_area2(const Tensor<double>& image);
Tensor<double> resize_image(const Tensor<double>& image, int height, int width);

// Nearest-neighbour resampling that keeps only labels whose source pixel is
// valid; values scale with width.
ProxyLabel resize_proxy_label(const ProxyLabel& label, int height, int width);

// Dataset directory: manifest.json plus <id>_left/_right images,
// <id>_gt.f32 disparity and optional <id>_occ.u8 rasters.
void write_dataset(const std::filesystem::path& dir, const std::vector<StereoSample>& samples);
std::vector<StereoSample> read_dataset(const std::filesystem::path& dir);

void write_proxy_labels(const std::filesystem::path& dir, const std::vector<std::string>& ids,
                        const std::vector<ProxyLabel>& labels);
std::vector<ProxyLabel> read_proxy_labels(const std::filesystem::path& dir);

}  // namespace stereoae
