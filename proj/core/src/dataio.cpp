#include "stereoae/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stereoae/errors.hpp"
#include "stereoae/image_io.hpp"

namespace stereoae {
namespace {

constexpr int kNoiseWaves = 24;
constexpr double kMinWavelength = 2.5;

void check_image(const Tensor<double>& t, const std::string& what) {
  if (!t.defined() || t.rank() != 3) {
    throw ConfigError(what + " must be a [C,H,W] tensor");
  }
}

Tensor<double> mirror(const Tensor<double>& t) {
  Tensor<double> out(t.shape());
  const int w = t.dim(2);
  for (int c = 0; c < t.dim(0); ++c) {
    for (int y = 0; y < t.dim(1); ++y) {
      for (int x = 0; x < w; ++x) {
        out.at(c, y, x) = t.at(c, y, w - 1 - x);
      }
    }
  }
  return out;
}

// Forward-splats left disparities into the right view; the nearest
// surface wins and unreached pixels take the smaller neighbour.
DisparityMap splat_right_disparity(const DisparityMap& left) {
  const int h = left.height();
  const int w = left.width();
  DisparityMap right(h, w, -1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = left(y, x);
      const int xr = static_cast<int>(std::lround(x + d));
      if (xr >= 0 && xr < w && d > right(y, xr)) {
        right(y, xr) = d;
      }
    }
    for (int x = 0; x < w; ++x) {
      if (right(y, x) >= 0.0) {
        continue;
      }
      double best = -1.0;
      for (int xl = x - 1; xl >= 0; --xl) {
        if (right(y, xl) >= 0.0) {
          best = right(y, xl);
          break;
        }
      }
      for (int xn = x + 1; xn < w; ++xn) {
        if (right(y, xn) >= 0.0) {
          best = best < 0.0 ? right(y, xn) : std::min(best, right(y, xn));
          break;
        }
      }
      right(y, x) = std::max(best, 0.0);
    }
  }
  return right;
}

DisparityMap scaled_map(const Tensor<double>& values, double factor) {
  Tensor<double> t = values.clone();
  for (auto& v : t.data()) {
    v *= factor;
  }
  return DisparityMap(t);
}

double bilinear_at(const Tensor<double>& t, int c, double sy, double sx) {
  const int h = t.dim(1);
  const int w = t.dim(2);
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  const int y0 = std::min(static_cast<int>(sy), h - 1);
  const int x0 = std::min(static_cast<int>(sx), w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0;
  const double fx = sx - x0;
  const double top = t.at(c, y0, x0) * (1 - fx) + t.at(c, y0, x1) * fx;
  const double bottom = t.at(c, y1, x0) * (1 - fx) + t.at(c, y1, x1) * fx;
  return top * (1 - fy) + bottom * fy;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

void StereoSample::validate() const {
  check_image(left, "left image");
  check_image(right, "right image");
  if (left.shape() != right.shape()) {
    throw ConfigError("sample '" + id + "': left " + shape_string(left.shape()) + " and right " +
                      shape_string(right.shape()) + " differ");
  }
  calibration.validate();
  if (gt_disparity && (gt_disparity->height() != height() || gt_disparity->width() != width())) {
    throw ConfigError("sample '" + id + "': ground truth size does not match the images");
  }
}

double ProxyLabel::hole_fraction() const {
  const auto v = valid.data();
  const auto holes = std::count_if(v.begin(), v.end(), [](double m) { return m < 0.5; });
  return static_cast<double>(holes) / static_cast<double>(v.size());
}

std::string to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::noise:
      return "noise";
    case TextureKind::sinusoid:
      return "sinusoid";
    case TextureKind::checker:
      return "checker";
  }
  return "noise";
}

TextureKind texture_kind_from_string(const std::string& name) {
  if (name == "noise") {
    return TextureKind::noise;
  }
  if (name == "sinusoid") {
    return TextureKind::sinusoid;
  }
  if (name == "checker") {
    return TextureKind::checker;
  }
  throw ConfigError("unknown texture kind '" + name + "' (noise, sinusoid, checker)");
}

TextureSampler::TextureSampler(const Texture& texture) : texture_(texture) {
  if (!(texture.wavelength_px >= kMinWavelength)) {
    throw ConfigError("texture wavelength must be >= " + fmt_double(kMinWavelength) + " px");
  }
  std::mt19937_64 rng(texture.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  switch (texture.kind) {
    case TextureKind::noise:
      for (int k = 0; k < kNoiseWaves; ++k) {
        const double wl = std::max(kMinWavelength, texture.wavelength_px * std::pow(4.0, 2.0 * unit(rng) - 1.0));
        const double theta = std::numbers::pi * unit(rng);
        const double freq = two_pi / wl;
        waves_.push_back({freq * std::cos(theta), freq * std::sin(theta), two_pi * unit(rng)});
      }
      norm_ = 0.5 / std::sqrt(kNoiseWaves / 2.0);
      break;
    case TextureKind::sinusoid:
      waves_.push_back({two_pi / texture.wavelength_px, 0.0, two_pi * unit(rng)});
      waves_.push_back({0.0, two_pi / (1.7 * texture.wavelength_px), two_pi * unit(rng)});
      norm_ = 0.5;
      break;
    case TextureKind::checker:
      waves_.push_back({unit(rng) * texture.wavelength_px, unit(rng) * texture.wavelength_px, 0.0});
      break;
  }
}

double TextureSampler::operator()(double x, double y) const {
  double v = 0.0;
  if (texture_.kind == TextureKind::checker) {
    const auto cx = static_cast<long>(std::floor((x + waves_[0].kx) / texture_.wavelength_px));
    const auto cy = static_cast<long>(std::floor((y + waves_[0].ky) / texture_.wavelength_px));
    v = ((cx + cy) % 2 == 0) ? 1.0 : -1.0;
  } else {
    for (const auto& w : waves_) {
      v += std::cos(w.kx * x + w.ky * y + w.phase);
    }
    v *= norm_;
  }
  return std::clamp(texture_.mean + texture_.contrast * v, -0.5, 0.49);
}

void SyntheticSceneSpec::validate() const {
  if (height < 2 || width < 2) {
    throw ConfigError("scene '" + id + "': size must be at least 2x2");
  }
  calibration.validate();
  const auto check_depth = [&](double depth, const std::string& what) {
    if (!(depth >= depth_range.min_m && depth <= depth_range.max_m)) {
      throw ConfigError("scene '" + id + "': " + what + " depth " + fmt_double(depth) + " m outside [" +
                        fmt_double(depth_range.min_m) + ", " + fmt_double(depth_range.max_m) + "]");
    }
    const double disparity = calibration.fb() / depth;
    if (disparity >= width) {
      throw ConfigError("scene '" + id + "': " + what + " disparity " + fmt_double(disparity) +
                        " px exceeds image width " + std::to_string(width));
    }
  };
  check_depth(background_depth_m, "background");
  TextureSampler{background};
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& r = layout[i];
    const std::string what = "rect " + std::to_string(i);
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > width || r.y1 > height || r.x0 >= r.x1 || r.y0 >= r.y1) {
      throw ConfigError("scene '" + id + "': " + what + " bounds [" + std::to_string(r.x0) + "," +
                        std::to_string(r.y0) + "," + std::to_string(r.x1) + "," + std::to_string(r.y1) +
                        ") are empty or leave the " + std::to_string(width) + "x" + std::to_string(height) +
                        " image");
    }
    check_depth(r.depth_m, what);
    TextureSampler{r.texture};
  }
}

StereoSample synthesize_pair(const SyntheticSceneSpec& spec) {
  spec.validate();
  const int h = spec.height;
  const int w = spec.width;
  const double fb = spec.calibration.fb();

  // Surface 0 is the backdrop covering everything.
  std::vector<double> disparity{fb / spec.background_depth_m};
  std::vector<TextureSampler> samplers{TextureSampler(spec.background)};
  for (const auto& r : spec.layout) {
    disparity.push_back(fb / r.depth_m);
    samplers.emplace_back(r.texture);
  }
  const auto covers = [&](std::size_t s, double x, int y) {
    if (s == 0) {
      return true;
    }
    const auto& r = spec.layout[s - 1];
    return y >= r.y0 && y < r.y1 && x >= r.x0 && x < r.x1;
  };
  const auto front = [&](auto&& hit) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < disparity.size(); ++s) {
      if (hit(s) && disparity[s] > disparity[best]) {
        best = s;
      }
    }
    return best;
  };
  const auto left_surface = [&](int x, int y) { return front([&](std::size_t s) { return covers(s, x, y); }); };
  const auto right_surface = [&](double xr, int y) {
    return front([&](std::size_t s) { return covers(s, xr - disparity[s], y); });
  };

  Tensor<double> left(Shape{1, h, w});
  Tensor<double> right(Shape{1, h, w});
  DisparityMap gt(h, w);
  DisparityMap gt_right(h, w);
  Tensor<double> occlusion(Shape{1, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto s = left_surface(x, y);
      left.at(0, y, x) = samplers[s](x, y);
      gt(y, x) = disparity[s];
      const double xr = x + disparity[s];
      if (xr > w - 1 || right_surface(xr, y) != s) {
        occlusion.at(0, y, x) = 1.0;
      }
      const auto sr = right_surface(x, y);
      right.at(0, y, x) = samplers[sr](x - disparity[sr], y);
      gt_right(y, x) = disparity[sr];
    }
  }

  StereoSample out;
  out.id = spec.id;
  out.left = io::quantize_normalized(left);
  out.right = io::quantize_normalized(right);
  out.calibration = spec.calibration;
  out.gt_disparity = gt;
  out.gt_disparity_right = gt_right;
  out.occlusion = occlusion;
  return out;
}

std::vector<SyntheticSceneSpec> scene_family(const SceneFamilyParams& p, int count, std::uint64_t seed,
                                             const std::string& id_prefix) {
  if (count < 0) {
    throw ConfigError("scene count must be non-negative");
  }
  if (p.min_objects < 0 || p.max_objects < p.min_objects) {
    throw ConfigError("object count range is invalid");
  }
  if (!(p.horizon_min > 0.0 && p.horizon_min <= p.horizon_max && p.horizon_max < 1.0)) {
    throw ConfigError("horizon range must satisfy 0 < min <= max < 1");
  }
  if (p.strip_rows < 1) {
    throw ConfigError("strip_rows must be positive");
  }
  p.calibration.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double fb = p.calibration.fb();
  const DepthClamp clamp;

  std::vector<SyntheticSceneSpec> scenes;
  for (int i = 0; i < count; ++i) {
    SyntheticSceneSpec s;
    std::ostringstream id;
    id << id_prefix << '_' << std::setw(4) << std::setfill('0') << i;
    s.id = id.str();
    s.height = p.height;
    s.width = p.width;
    s.calibration = p.calibration;
    s.background_depth_m = clamp.max_m;
    s.background = Texture{p.texture, rng(), 2.0 * p.wavelength_px, 0.12, uniform(0.15, 0.3)};

    const int horizon = static_cast<int>(std::lround(uniform(p.horizon_min, p.horizon_max) * p.height));
    const double near_d = fb / p.ground_near_depth_m;
    const double far_d = fb / clamp.max_m;
    const auto ground_disparity = [&](double row) {
      return std::max(far_d, near_d * (row - horizon + 0.5) / (p.height - horizon));
    };
    const Texture ground{p.texture, rng(), p.wavelength_px, 0.3, uniform(-0.2, 0.0)};
    for (int y0 = horizon; y0 < p.height; y0 += p.strip_rows) {
      const int y1 = std::min(p.height, y0 + p.strip_rows);
      const double d = ground_disparity(0.5 * (y0 + y1 - 1));
      s.layout.push_back(PlaneRect{std::min(clamp.max_m, fb / d), 0, y0, p.width, y1, ground});
    }

    const int objects = p.min_objects + static_cast<int>(unit(rng) * (p.max_objects - p.min_objects + 1));
    for (int k = 0; k < std::min(objects, p.max_objects); ++k) {
      const int bottom = static_cast<int>(std::lround(uniform(horizon + 0.3 * (p.height - horizon), p.height)));
      const double d = ground_disparity(bottom - 1);
      const double depth = std::min(clamp.max_m, fb / d);
      // An object of metric height m spans m * D / B pixels.
      const int tall =
          std::clamp(static_cast<int>(std::lround(uniform(1.2, 2.5) * d / p.calibration.baseline_m)), 2, bottom);
      const int wide = std::max(2, static_cast<int>(std::lround(uniform(0.1, 0.25) * p.width)));
      const int x0 = static_cast<int>(unit(rng) * (p.width - wide));
      const Texture tex{p.texture, rng(), p.wavelength_px * uniform(0.5, 1.0), 0.4, uniform(-0.2, 0.2)};
      s.layout.push_back(PlaneRect{depth, x0, bottom - tall, x0 + wide, bottom, tex});
    }
    s.validate();
    scenes.push_back(std::move(s));
  }
  return scenes;
}

namespace {

struct ListingParser {
  std::string source;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(source + ":" + std::to_string(line_no) + ": " + msg);
  }

  double number(std::istringstream& in, const char* what) const {
    std::string tok;
    if (!(in >> tok)) {
      fail(std::string("missing ") + what);
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size() || !std::isfinite(v)) {
        throw std::invalid_argument(tok);
      }
      return v;
    } catch (const std::logic_error&) {
      fail(std::string("expected a number for ") + what + ", got '" + tok + "'");
    }
  }

  int integer(std::istringstream& in, const char* what) const {
    const double v = number(in, what);
    if (v != std::floor(v) || std::abs(v) > 1e9) {
      fail(std::string(what) + " must be an integer");
    }
    return static_cast<int>(v);
  }

  std::string word(std::istringstream& in, const char* what) const {
    std::string tok;
    if (!(in >> tok)) {
      fail(std::string("missing ") + what);
    }
    return tok;
  }

  Texture texture(std::istringstream& in) const {
    Texture t;
    try {
      t.kind = texture_kind_from_string(word(in, "texture kind"));
    } catch (const ConfigError& e) {
      fail(e.what());
    }
    const int seed = integer(in, "texture seed");
    if (seed < 0) {
      fail("texture seed must be non-negative");
    }
    t.seed = static_cast<std::uint64_t>(seed);
    std::string key;
    while (in >> key) {
      if (key == "wavelength") {
        t.wavelength_px = number(in, "wavelength");
      } else if (key == "contrast") {
        t.contrast = number(in, "contrast");
      } else if (key == "mean") {
        t.mean = number(in, "mean");
      } else {
        fail("unknown texture option '" + key + "'");
      }
    }
    if (t.wavelength_px < kMinWavelength) {
      fail("texture wavelength must be >= " + fmt_double(kMinWavelength) + " px");
    }
    return t;
  }
};

}  // namespace

SceneListing parse_scene_listing(const std::string& text, const std::string& source_name) {
  ListingParser p{source_name};
  SceneListing listing;
  Calibration default_cal{200.0, 0.54};
  SyntheticSceneSpec* current = nullptr;
  int scene_line = 0;

  const auto close_scene = [&]() {
    if (!current) {
      return;
    }
    try {
      current->validate();
    } catch (const ConfigError& e) {
      throw ConfigError(source_name + ":" + std::to_string(scene_line) + ": " + e.what());
    }
    current = nullptr;
  };

  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    ++p.line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream in(line);
    std::string keyword;
    if (!(in >> keyword)) {
      continue;
    }
    if (keyword == "calibration") {
      Calibration cal{p.number(in, "focal length"), p.number(in, "baseline")};
      try {
        cal.validate();
      } catch (const ConfigError& e) {
        p.fail(e.what());
      }
      (current ? current->calibration : default_cal) = cal;
    } else if (keyword == "scene") {
      close_scene();
      SyntheticSceneSpec s;
      s.id = p.word(in, "scene id");
      s.height = p.integer(in, "height");
      s.width = p.integer(in, "width");
      if (s.height < 2 || s.width < 2) {
        p.fail("scene size must be at least 2x2");
      }
      s.calibration = default_cal;
      listing.scenes.push_back(std::move(s));
      current = &listing.scenes.back();
      scene_line = p.line_no;
    } else if (keyword == "background") {
      if (!current) {
        p.fail("'background' outside a scene");
      }
      current->background_depth_m = p.number(in, "background depth");
      current->background = p.texture(in);
    } else if (keyword == "rect") {
      if (!current) {
        p.fail("'rect' outside a scene");
      }
      PlaneRect r;
      r.depth_m = p.number(in, "depth");
      r.x0 = p.integer(in, "x0");
      r.y0 = p.integer(in, "y0");
      r.x1 = p.integer(in, "x1");
      r.y1 = p.integer(in, "y1");
      r.texture = p.texture(in);
      const auto saved = current->layout;
      current->layout = {r};
      try {
        current->validate();
      } catch (const ConfigError& e) {
        p.fail(e.what());
      }
      current->layout = saved;
      current->layout.push_back(r);
    } else if (keyword == "family") {
      close_scene();
      SceneFamilyParams fp;
      fp.calibration = default_cal;
      const int count = p.integer(in, "scene count");
      const int seed = p.integer(in, "family seed");
      if (count < 0 || seed < 0) {
        p.fail("family count and seed must be non-negative");
      }
      std::string prefix = "scene";
      std::string key;
      while (in >> key) {
        if (key == "height") {
          fp.height = p.integer(in, "height");
        } else if (key == "width") {
          fp.width = p.integer(in, "width");
        } else if (key == "texture") {
          try {
            fp.texture = texture_kind_from_string(p.word(in, "texture kind"));
          } catch (const ConfigError& e) {
            p.fail(e.what());
          }
        } else if (key == "wavelength") {
          fp.wavelength_px = p.number(in, "wavelength");
        } else if (key == "objects") {
          fp.min_objects = p.integer(in, "min objects");
          fp.max_objects = p.integer(in, "max objects");
        } else if (key == "prefix") {
          prefix = p.word(in, "prefix");
        } else {
          p.fail("unknown family option '" + key + "'");
        }
      }
      try {
        for (auto& s : scene_family(fp, count, static_cast<std::uint64_t>(seed), prefix)) {
          listing.scenes.push_back(std::move(s));
        }
      } catch (const ConfigError& e) {
        p.fail(e.what());
      }
    } else {
      p.fail("unknown directive '" + keyword + "'");
    }
  }
  close_scene();
  if (listing.scenes.empty()) {
    throw ConfigError(source_name + ": no scenes defined");
  }
  return listing;
}

SceneListing load_scene_listing(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError(path.string() + ": cannot open scene listing");
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scene_listing(buf.str(), path.string());
}

StereoSample flip_swap(const StereoSample& sample) {
  StereoSample out;
  out.id = sample.id;
  out.calibration = sample.calibration;
  out.left = mirror(sample.right);
  out.right = mirror(sample.left);
  if (sample.gt_disparity) {
    const DisparityMap right_gt =
        sample.gt_disparity_right ? *sample.gt_disparity_right : splat_right_disparity(*sample.gt_disparity);
    out.gt_disparity = DisparityMap(mirror(right_gt.tensor()));
    out.gt_disparity_right = DisparityMap(mirror(sample.gt_disparity->tensor()));
  }
  return out;
}

StereoSample apply_augmentation(const StereoSample& sample, const AugmentParams& params) {
  sample.validate();
  StereoSample out = sample;
  out.left = sample.left.clone();
  out.right = sample.right.clone();

  if (!params.color.empty()) {
    if (static_cast<int>(params.color.size()) != sample.channels()) {
      throw ConfigError("colour factors: expected " + std::to_string(sample.channels()) + ", got " +
                        std::to_string(params.color.size()));
    }
    for (auto* img : {&out.left, &out.right}) {
      for (int c = 0; c < sample.channels(); ++c) {
        const double f = params.color[static_cast<std::size_t>(c)];
        for (int y = 0; y < sample.height(); ++y) {
          for (int x = 0; x < sample.width(); ++x) {
            const double raw = img->at(c, y, x) * 255.0 + 128.0;
            img->at(c, y, x) = (std::clamp(raw * f, 0.0, 255.0) - 128.0) / 255.0;
          }
        }
      }
    }
  }

  if (params.scale != 1.0 || params.crop_x != 0.0 || params.crop_y != 0.0) {
    const double s = params.scale;
    if (!(s >= 1.0)) {
      throw ConfigError("augmentation scale must be >= 1");
    }
    const int h = sample.height();
    const int w = sample.width();
    if (params.crop_x < 0 || params.crop_y < 0 || params.crop_x > s * w - w + 1e-9 ||
        params.crop_y > s * h - h + 1e-9) {
      throw ConfigError("crop offsets leave the scaled image");
    }
    const auto resample = [&](const Tensor<double>& src, double factor) {
      Tensor<double> dst(src.shape());
      for (int c = 0; c < src.dim(0); ++c) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const double sy = (y + params.crop_y + 0.5) / s - 0.5;
            const double sx = (x + params.crop_x + 0.5) / s - 0.5;
            dst.at(c, y, x) = factor * bilinear_at(src, c, sy, sx);
          }
        }
      }
      return dst;
    };
    out.left = resample(out.left, 1.0);
    out.right = resample(out.right, 1.0);
    if (sample.gt_disparity) {
      out.gt_disparity = DisparityMap(resample(sample.gt_disparity->tensor(), s));
    }
    if (sample.gt_disparity_right) {
      out.gt_disparity_right = DisparityMap(resample(sample.gt_disparity_right->tensor(), s));
    }
    if (sample.occlusion) {
      Tensor<double> occ = resample(*sample.occlusion, 1.0);
      for (auto& v : occ.data()) {
        v = v >= 0.5 ? 1.0 : 0.0;
      }
      out.occlusion = occ;
    }
  }

  if (params.flip) {
    out = flip_swap(out);
  }
  return out;
}

std::vector<StereoSample> augment(const StereoSample& sample, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<StereoSample> out;
  out.reserve(8);
  for (int variant = 0; variant < 8; ++variant) {
    AugmentParams p;
    if (variant & 1) {
      for (int c = 0; c < sample.channels(); ++c) {
        p.color.push_back(0.9 + 0.2 * unit(rng));
      }
    }
    if (variant & 2) {
      p.scale = 1.0 + 0.6 * unit(rng);
      p.crop_y = unit(rng) * (p.scale - 1.0) * sample.height();
      p.crop_x = unit(rng) * (p.scale - 1.0) * sample.width();
    }
    p.flip = (variant & 4) != 0;
    StereoSample s = variant == 0 ? sample : apply_augmentation(sample, p);
    s.id = sample.id + "_aug" + std::to_string(variant);
    out.push_back(std::move(s));
  }
  return out;
}

Tensor<double> resize_bilinear(const Tensor<double>& image, int height, int width) {
  check_image(image, "resize input");
  if (height <= 0 || width <= 0) {
    throw ConfigError("resize target must be positive");
  }
  const double ry = static_cast<double>(image.dim(1)) / height;
  const double rx = static_cast<double>(image.dim(2)) / width;
  Tensor<double> out(Shape{image.dim(0), height, width});
  for (int c = 0; c < image.dim(0); ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        out.at(c, y, x) = bilinear_at(image, c, (y + 0.5) * ry - 0.5, (x + 0.5) * rx - 0.5);
      }
    }
  }
  return out;
}

Tensor<double> downsample_area2(const Tensor<double>& image) {
  check_image(image, "downsample input");
  const int h = image.dim(1) / 2;
  const int w = image.dim(2) / 2;
  if (h == 0 || w == 0 || image.dim(1) % 2 || image.dim(2) % 2) {
    throw ConfigError("2x2 area downsampling needs even dimensions, got " + shape_string(image.shape()));
  }
  Tensor<double> out(Shape{image.dim(0), h, w});
  for (int c = 0; c < image.dim(0); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out.at(c, y, x) = 0.25 * (image.at(c, 2 * y, 2 * x) + image.at(c, 2 * y, 2 * x + 1) +
                                  image.at(c, 2 * y + 1, 2 * x) + image.at(c, 2 * y + 1, 2 * x + 1));
      }
    }
  }
  return out;
}

Tensor<double> resize_image(const Tensor<double>& image, int height, int width) {
  check_image(image, "resize input");
  int h = image.dim(1);
  int w = image.dim(2);
  if (h == height && w == width) {
    return image.clone();
  }
  Tensor<double> cur = image;
  while (h > height && w > width && h % 2 == 0 && w % 2 == 0 && h / 2 >= height && w / 2 >= width &&
         static_cast<long>(h) * width == static_cast<long>(w) * height) {
    cur = downsample_area2(cur);
    h /= 2;
    w /= 2;
  }
  if (h == height && w == width) {
    return cur;
  }
  return resize_bilinear(cur, height, width);
}

StereoSample resize_for_stage(const StereoSample& sample, int height, int width) {
  sample.validate();
  StereoSample out;
  out.id = sample.id;
  out.calibration = sample.calibration;
  out.calibration.focal_px *= static_cast<double>(width) / sample.width();
  out.left = resize_image(sample.left, height, width);
  out.right = resize_image(sample.right, height, width);
  const double factor = static_cast<double>(width) / sample.width();
  if (sample.gt_disparity) {
    out.gt_disparity = scaled_map(resize_image(sample.gt_disparity->tensor(), height, width), factor);
  }
  if (sample.gt_disparity_right) {
    out.gt_disparity_right = scaled_map(resize_image(sample.gt_disparity_right->tensor(), height, width), factor);
  }
  if (sample.occlusion) {
    Tensor<double> occ = resize_image(*sample.occlusion, height, width);
    for (auto& v : occ.data()) {
      v = v >= 0.5 ? 1.0 : 0.0;
    }
    out.occlusion = occ;
  }
  return out;
}

ProxyLabel resize_proxy_label(const ProxyLabel& label, int height, int width) {
  const int h = label.disparity.height();
  const int w = label.disparity.width();
  const double factor = static_cast<double>(width) / w;
  ProxyLabel out{DisparityMap(height, width), Tensor<double>(Shape{1, height, width})};
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(h - 1, static_cast<int>((y + 0.5) * h / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(w - 1, static_cast<int>((x + 0.5) * w / width));
      if (label.valid.at(0, sy, sx) >= 0.5) {
        out.valid.at(0, y, x) = 1.0;
        out.disparity(y, x) = label.disparity(sy, sx) * factor;
      }
    }
  }
  return out;
}

namespace {

using nlohmann::json;

std::string image_ext(const StereoSample& s) { return s.channels() == 1 ? ".pgm" : ".ppm"; }

json read_manifest(const std::filesystem::path& dir, const char* format) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) {
    throw IoError(path.string() + ": cannot open");
  }
  json m;
  try {
    in >> m;
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (m.value("format", "") != format) {
    throw ConfigError(path.string() + ": not a " + std::string(format) + " manifest");
  }
  return m;
}

void write_manifest(const std::filesystem::path& dir, const json& m) {
  std::ofstream out(dir / "manifest.json");
  out << m.dump(2) << '\n';
  if (!out) {
    throw IoError((dir / "manifest.json").string() + ": write failed");
  }
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const std::vector<StereoSample>& samples) {
  std::filesystem::create_directories(dir);
  json m{{"format", "stereoae-dataset"}, {"version", 1}, {"samples", json::array()}};
  for (const auto& s : samples) {
    s.validate();
    const std::string ext = image_ext(s);
    json entry{{"id", s.id},
               {"height", s.height()},
               {"width", s.width()},
               {"channels", s.channels()},
               {"focal_px", s.calibration.focal_px},
               {"baseline_m", s.calibration.baseline_m},
               {"left", s.id + "_left" + ext},
               {"right", s.id + "_right" + ext}};
    io::write_image(dir / entry["left"].get<std::string>(), io::denormalize(s.left));
    io::write_image(dir / entry["right"].get<std::string>(), io::denormalize(s.right));
    if (s.gt_disparity) {
      entry["gt"] = s.id + "_gt.f32";
      io::write_f32(dir / entry["gt"].get<std::string>(), s.gt_disparity->values());
    }
    if (s.gt_disparity_right) {
      entry["gt_right"] = s.id + "_gtr.f32";
      io::write_f32(dir / entry["gt_right"].get<std::string>(), s.gt_disparity_right->values());
    }
    if (s.occlusion) {
      entry["occlusion"] = s.id + "_occ.u8";
      io::write_u8(dir / entry["occlusion"].get<std::string>(), s.occlusion->data());
    }
    m["samples"].push_back(std::move(entry));
  }
  write_manifest(dir, m);
}

std::vector<StereoSample> read_dataset(const std::filesystem::path& dir) {
  const json m = read_manifest(dir, "stereoae-dataset");
  std::vector<StereoSample> out;
  try {
    for (const auto& e : m.at("samples")) {
      StereoSample s;
      s.id = e.at("id").get<std::string>();
      const int h = e.at("height").get<int>();
      const int w = e.at("width").get<int>();
      s.calibration = Calibration{e.at("focal_px").get<double>(), e.at("baseline_m").get<double>()};
      s.left = io::load_normalized(dir / e.at("left").get<std::string>());
      s.right = io::load_normalized(dir / e.at("right").get<std::string>());
      if (s.left.dim(1) != h || s.left.dim(2) != w) {
        throw ConfigError("sample '" + s.id + "': image size differs from the manifest");
      }
      const auto n = static_cast<std::size_t>(h) * w;
      const auto raster = [&](const std::vector<double>& v) { return Tensor<double>(Shape{1, h, w}, v); };
      if (e.contains("gt")) {
        s.gt_disparity = DisparityMap(raster(io::read_f32(dir / e["gt"].get<std::string>(), n)));
      }
      if (e.contains("gt_right")) {
        s.gt_disparity_right = DisparityMap(raster(io::read_f32(dir / e["gt_right"].get<std::string>(), n)));
      }
      if (e.contains("occlusion")) {
        s.occlusion = raster(io::read_u8(dir / e["occlusion"].get<std::string>(), n));
      }
      s.validate();
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ConfigError((dir / "manifest.json").string() + ": " + e.what());
  }
  return out;
}

void write_proxy_labels(const std::filesystem::path& dir, const std::vector<std::string>& ids,
                        const std::vector<ProxyLabel>& labels) {
  if (ids.size() != labels.size()) {
    throw UsageError("proxy label ids and labels differ in length");
  }
  std::filesystem::create_directories(dir);
  json m{{"format", "stereoae-proxy-labels"}, {"version", 1}, {"labels", json::array()}};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& l = labels[i];
    json entry{{"id", ids[i]},
               {"height", l.disparity.height()},
               {"width", l.disparity.width()},
               {"disparity", ids[i] + "_proxy.f32"},
               {"valid", ids[i] + "_valid.u8"}};
    io::write_f32(dir / entry["disparity"].get<std::string>(), l.disparity.values());
    io::write_u8(dir / entry["valid"].get<std::string>(), l.valid.data());
    m["labels"].push_back(std::move(entry));
  }
  write_manifest(dir, m);
}

std::vector<ProxyLabel> read_proxy_labels(const std::filesystem::path& dir) {
  const json m = read_manifest(dir, "stereoae-proxy-labels");
  std::vector<ProxyLabel> out;
  try {
    for (const auto& e : m.at("labels")) {
      const int h = e.at("height").get<int>();
      const int w = e.at("width").get<int>();
      const auto n = static_cast<std::size_t>(h) * w;
      out.push_back(ProxyLabel{
          DisparityMap(Tensor<double>(Shape{1, h, w}, io::read_f32(dir / e.at("disparity").get<std::string>(), n))),
          Tensor<double>(Shape{1, h, w}, io::read_u8(dir / e.at("valid").get<std::string>(), n))});
    }
  } catch (const json::exception& e) {
    throw ConfigError((dir / "manifest.json").string() + ": " + e.what());
  }
  return out;
}

}  // namespace stereoae
