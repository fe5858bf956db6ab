#include "stereoae/evalkit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <ostream>

#include "stereoae/errors.hpp"

namespace stereoae::eval {

void write_metrics_text(std::ostream& out, const MetricsReport& m) {
  const auto old = out.precision(10);
  out << "rms=" << m.rms << '\n'
      << "log_rms=" << m.log_rms << '\n'
      << "abs_rel=" << m.abs_rel << '\n'
      << "sq_rel=" << m.sq_rel << '\n'
      << "acc_1=" << m.acc_1 << '\n'
      << "acc_2=" << m.acc_2 << '\n'
      << "acc_3=" << m.acc_3 << '\n'
      << "n_pixels=" << m.n_pixels << '\n';
  out.precision(old);
}

void write_metrics_csv_row(std::ostream& out, const MetricsReport& m) {
  const auto old = out.precision(10);
  out << m.rms << ',' << m.log_rms << ',' << m.abs_rel << ',' << m.sq_rel << ',' << m.acc_1 << ',' << m.acc_2
      << ',' << m.acc_3 << ',' << m.n_pixels << '\n';
  out.precision(old);
}

void append_metrics_csv(const std::filesystem::path& path, const MetricsReport& m) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open " + path.string() + " for appending");
  if (fresh) out << kMetricsCsvHeader << '\n';
  write_metrics_csv_row(out, m);
  if (!out) throw IoError("write failed: " + path.string());
}

MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> gt,
                              std::span<const double> valid) {
  if (pred.size() != gt.size() || (!valid.empty() && valid.size() != gt.size())) {
    throw ConfigError("metrics: prediction, ground truth and mask sizes differ");
  }
  constexpr double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  double se = 0, sle = 0, ar = 0, sr = 0;
  std::int64_t n = 0, a1 = 0, a2 = 0, a3 = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!valid.empty() && valid[i] == 0.0) continue;
    const double d = pred[i], g = gt[i];
    if (!(d > 0) || !(g > 0) || !std::isfinite(d) || !std::isfinite(g)) {
      throw ConfigError("metrics: depths must be positive and finite on valid pixels (index " + std::to_string(i) +
                        ")");
    }
    const double e = d - g;
    // log of the ratio keeps log RMS exactly invariant under joint scaling
    const double le = std::log(d / g);
    se += e * e;
    sle += le * le;
    ar += std::abs(e) / g;
    sr += e * e / g;
    const double delta = std::max(d / g, g / d);
    a1 += delta < t1;
    a2 += delta < t2;
    a3 += delta < t3;
    ++n;
  }
  if (n == 0) throw ConfigError("metrics: no valid pixels");
  const double inv = 1.0 / static_cast<double>(n);
  MetricsReport m;
  m.rms = std::sqrt(se * inv);
  m.log_rms = std::sqrt(sle * inv);
  m.abs_rel = ar * inv;
  m.sq_rel = sr * inv;
  m.acc_1 = static_cast<double>(a1) * inv;
  m.acc_2 = static_cast<double>(a2) * inv;
  m.acc_3 = static_cast<double>(a3) * inv;
  m.n_pixels = n;
  return m;
}

MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt, const Tensor<double>& valid) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw ConfigError("metrics: prediction and ground truth shapes differ");
  }
  return compute_metrics(pred.values(), gt.values(), valid.defined() ? valid.data() : std::span<const double>{});
}

DisparityMap upscale_disparity(const DisparityMap& pred, int height, int width) {
  if (pred.height() == height && pred.width() == width) return DisparityMap(pred.tensor().clone());
  Tensor<double> up = resize_bilinear(pred.tensor(), height, width);
  const double s = static_cast<double>(width) / pred.width();
  for (auto& v : up.data()) v *= s;
  return DisparityMap(up);
}

ProtocolResult evaluation_protocol(const DisparityMap& pred, const StereoSample& sample,
                                   const ProtocolOptions& options) {
  if (!sample.gt_disparity) throw ConfigError("evaluation of '" + sample.id + "' needs ground-truth disparity");
  const int h = sample.height(), w = sample.width();
  const CropRect crop = options.crop.value_or(CropRect{0, 0, h, w});
  if (crop.y0 < 0 || crop.x0 < 0 || crop.y1 > h || crop.x1 > w || crop.y0 >= crop.y1 || crop.x0 >= crop.x1) {
    throw ConfigError("crop rectangle lies outside the " + std::to_string(h) + "x" + std::to_string(w) + " image");
  }
  ProtocolResult r;
  r.pred_depth = geometry::disparity_to_depth(upscale_disparity(pred, h, w), sample.calibration, options.clamp);
  const DisparityMap& gtd = *sample.gt_disparity;
  r.gt_depth = geometry::disparity_to_depth(gtd, sample.calibration, options.clamp);

  auto& p = r.selected_pred;
  auto& g = r.selected_gt;
  for (int y = crop.y0; y < crop.y1; ++y) {
    for (int x = crop.x0; x < crop.x1; ++x) {
      const double D = gtd(y, x);
      if (!(D > 0) || !std::isfinite(D)) continue;
      p.push_back(r.pred_depth(y, x));
      g.push_back(r.gt_depth(y, x));
    }
  }
  r.metrics = compute_metrics(p, g);
  return r;
}

DepthMap abs_error(const DepthMap& pred, const DepthMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw ConfigError("abs_error: shapes differ");
  }
  DepthMap e(gt.height(), gt.width());
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) e(y, x) = std::abs(pred(y, x) - gt(y, x));
  return e;
}

Tensor<double> error_heatmap(const DepthMap& pred, const DepthMap& gt, double max_error) {
  if (!(max_error > 0)) throw ConfigError("heatmap max_error must be positive");
  static constexpr std::array<std::array<double, 3>, 6> knots{{
      {0, 0, 0},
      {0, 0, 255},
      {0, 255, 255},
      {255, 255, 0},
      {255, 0, 0},
      {255, 255, 255},
  }};
  const DepthMap e = abs_error(pred, gt);
  Tensor<double> img(Shape{3, gt.height(), gt.width()});
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      const double t = std::clamp(e(y, x) / max_error, 0.0, 1.0) * 5.0;
      const int k = std::min(static_cast<int>(t), 4);
      const double a = t - k;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::round((1 - a) * knots[k][c] + a * knots[k + 1][c]);
    }
  }
  return img;
}

Tensor<double> inverse_depth_image(const DepthMap& depth) {
  Tensor<double> img(Shape{1, depth.height(), depth.width()});
  auto v = depth.values();
  double lo = 1e300, hi = -1e300;
  for (double d : v) {
    lo = std::min(lo, 1.0 / d);
    hi = std::max(hi, 1.0 / d);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  auto out = img.data();
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::round(255.0 * (1.0 / v[i] - lo) / span);
  return img;
}

double mean_abs_error(const DisparityMap& pred, const DisparityMap& gt, const Tensor<double>& mask, bool select) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) throw ConfigError("mean_abs_error: shapes differ");
  if (mask.defined() && mask.numel() != static_cast<std::int64_t>(gt.values().size())) {
    throw ConfigError("mean_abs_error: mask size differs");
  }
  auto p = pred.values();
  auto g = gt.values();
  double s = 0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (mask.defined() && (mask.data()[i] != 0.0) != select) continue;
    s += std::abs(p[i] - g[i]);
    ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

double correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ConfigError("correlation: sizes differ or empty");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace stereoae::eval
