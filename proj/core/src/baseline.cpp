#include "stereoae/baseline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "stereoae/errors.hpp"
#include "stereoae/geometry.hpp"

namespace stereoae::baseline {

void HSConfig::validate() const {
  if (pyramid_levels < 1) throw ConfigError("hs: pyramid_levels must be >= 1");
  if (!(pyramid_scale > 0 && pyramid_scale < 1)) throw ConfigError("hs: pyramid_scale must lie in (0,1)");
  if (warp_iterations < 1 || inner_iterations < 1) throw ConfigError("hs: iteration counts must be positive");
  if (!(gamma_hs >= 0) || !std::isfinite(gamma_hs)) throw ConfigError("hs: gamma_hs must be finite and >= 0");
  if (!(inner_tolerance > 0) || !(warp_tolerance > 0)) throw ConfigError("hs: tolerances must be positive");
  if (line_search_steps < 1) throw ConfigError("hs: line_search_steps must be positive");
  if (min_level_extent < 1) throw ConfigError("hs: min_level_extent must be >= 1");
}

double hs_energy(const Tensor<double>& left, const Tensor<double>& right, const DisparityMap& disparity,
                 double gamma_hs) {
  Tape<double> tape(TapeMode::inference);
  const auto w = geometry::inverse_warp(tape, right, disparity.tensor());
  auto L = left.data();
  auto R = w.warped.data();
  double data = 0;
  for (std::size_t i = 0; i < L.size(); ++i) {
    const double r = R[i] - L[i];
    data += r * r;
  }
  double smooth = 0;
  const int H = disparity.height(), W = disparity.width();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (x + 1 < W) smooth += (disparity(y, x + 1) - disparity(y, x)) * (disparity(y, x + 1) - disparity(y, x));
      if (y + 1 < H) smooth += (disparity(y + 1, x) - disparity(y, x)) * (disparity(y + 1, x) - disparity(y, x));
    }
  }
  return data + gamma_hs * smooth;
}

namespace {

// Gauss-Seidel on the normal equations of the energy linearised around d0.
// Returns false if the sweep cap was hit before the tolerance.
bool solve_linearized(const Tensor<double>& left, const Tensor<double>& right, const DisparityMap& d0,
                      const HSConfig& cfg, DisparityMap& out) {
  const int C = left.dim(0), H = left.dim(1), W = left.dim(2);
  Tensor<double> plus = d0.tensor().clone();
  for (auto& v : plus.data()) v += 1.0;
  const Tensor<double> iw = geometry::linearized_warp(right, d0.tensor(), d0.tensor());
  const Tensor<double> iw1 = geometry::linearized_warp(right, d0.tensor(), plus);

  // Per pixel: a * D = b + gamma * sum(neighbours), a = sum Ix^2 + gamma * deg.
  std::vector<double> a(static_cast<std::size_t>(H) * W), b(a.size());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double sxx = 0, sb = 0;
      for (int c = 0; c < C; ++c) {
        const double ix = iw1.at(c, y, x) - iw.at(c, y, x);
        const double rt = iw.at(c, y, x) - left.at(c, y, x);
        sxx += ix * ix;
        sb += ix * (ix * d0(y, x) - rt);
      }
      const int deg = (x > 0) + (x + 1 < W) + (y > 0) + (y + 1 < H);
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      a[i] = sxx + cfg.gamma_hs * deg;
      b[i] = sb;
    }
  }

  out = DisparityMap(d0.tensor().clone());
  for (int it = 0; it < cfg.inner_iterations; ++it) {
    double change = 0;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        if (a[i] <= 0) continue;  // no data and no neighbours
        double nb = 0;
        if (x > 0) nb += out(y, x - 1);
        if (x + 1 < W) nb += out(y, x + 1);
        if (y > 0) nb += out(y - 1, x);
        if (y + 1 < H) nb += out(y + 1, x);
        const double v = (b[i] + cfg.gamma_hs * nb) / a[i];
        change = std::max(change, std::abs(v - out(y, x)));
        out(y, x) = v;
      }
    }
    if (change < cfg.inner_tolerance) return true;
  }
  return false;
}

void solve_level(const Tensor<double>& left, const Tensor<double>& right, const HSConfig& cfg, HSLevelTrace& level) {
  DisparityMap d(level.init.tensor().clone());
  double e = hs_energy(left, right, d, cfg.gamma_hs);
  level.energy.push_back(e);
  DisparityMap target;
  for (int step = 0; step < cfg.warp_iterations; ++step) {
    if (!solve_linearized(left, right, d, cfg, target)) ++level.unconverged_inner;
    // Backtrack until the true energy does not increase.
    bool accepted = false;
    double moved = 0;
    double t = 1.0;
    for (int k = 0; k < cfg.line_search_steps; ++k, t *= 0.5) {
      DisparityMap trial(d.tensor().clone());
      moved = 0;
      for (int y = 0; y < d.height(); ++y) {
        for (int x = 0; x < d.width(); ++x) {
          const double delta = t * (target(y, x) - d(y, x));
          trial(y, x) += delta;
          moved = std::max(moved, std::abs(delta));
        }
      }
      const double et = hs_energy(left, right, trial, cfg.gamma_hs);
      if (et <= e) {
        d = trial;
        e = et;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    level.energy.push_back(e);
    ++level.warp_steps;
    if (moved < cfg.warp_tolerance) break;
  }
  level.result = d;
}

int level_extent(int full, double scale, int level) {
  return std::max(1, static_cast<int>(std::lround(full * std::pow(scale, level))));
}

}  // namespace

HSResult hs_stereo(const Tensor<double>& left, const Tensor<double>& right, const HSConfig& cfg) {
  cfg.validate();
  if (left.rank() != 3 || left.shape() != right.shape()) {
    throw ConfigError("hs_stereo: left and right must be [C,H,W] of equal shape");
  }
  const int H = left.dim(1), W = left.dim(2);
  HSResult result;
  DisparityMap prev;
  for (int lv = cfg.pyramid_levels - 1; lv >= 0; --lv) {
    const int h = level_extent(H, cfg.pyramid_scale, lv), w = level_extent(W, cfg.pyramid_scale, lv);
    if (lv > 0 && std::min(h, w) < cfg.min_level_extent) continue;
    const Tensor<double> l = lv == 0 ? left : resize_image(left, h, w);
    const Tensor<double> r = lv == 0 ? right : resize_image(right, h, w);
    HSLevelTrace level;
    level.height = h;
    level.width = w;
    if (prev.empty()) {
      level.init = DisparityMap(h, w);
    } else {
      Tensor<double> up = resize_bilinear(prev.tensor(), h, w);
      const double s = static_cast<double>(w) / prev.width();
      for (auto& v : up.data()) v *= s;
      level.init = DisparityMap(up);
    }
    solve_level(l, r, cfg, level);
    if (level.unconverged_inner > 0) {
      result.warnings.push_back("level " + std::to_string(lv) + ": " + std::to_string(level.unconverged_inner) +
                                " inner solves hit the iteration cap");
    }
    prev = level.result;
    result.levels.push_back(std::move(level));
  }
  result.disparity = prev;
  return result;
}

HSResult hs_stereo(const StereoSample& pair, const HSConfig& cfg) { return hs_stereo(pair.left, pair.right, cfg); }

std::string to_string(ProxyEngine engine) { return engine == ProxyEngine::hs ? "hs" : "ground_truth"; }

ProxyEngine proxy_engine_from_string(const std::string& name) {
  if (name == "hs") return ProxyEngine::hs;
  if (name == "ground_truth") return ProxyEngine::ground_truth;
  throw ConfigError("unknown proxy engine '" + name + "' (expected hs or ground_truth)");
}

Tensor<double> consistency_mask(const DisparityMap& left_disp, const DisparityMap& right_disp, double threshold) {
  const int H = left_disp.height(), W = left_disp.width();
  if (right_disp.height() != H || right_disp.width() != W) throw ConfigError("consistency_mask: shapes differ");
  Tensor<double> valid(Shape{1, H, W});
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double u = x + left_disp(y, x);
      if (!(u >= 0) || u > W - 1) continue;
      double dr = right_disp(y, 0);
      if (W > 1) {
        const int x0 = std::min(static_cast<int>(u), W - 2);
        const double a = u - x0;
        dr = (1 - a) * right_disp(y, x0) + a * right_disp(y, x0 + 1);
      }
      if (std::abs(left_disp(y, x) - dr) <= threshold) valid.at(0, y, x) = 1.0;
    }
  }
  return valid;
}

namespace {

Tensor<double> mirror(const Tensor<double>& t) {
  Tensor<double> out(t.shape());
  const int C = t.dim(0), H = t.dim(1), W = t.dim(2);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) out.at(c, y, x) = t.at(c, y, W - 1 - x);
  return out;
}

}  // namespace

ProxyLabel make_proxy_label(const StereoSample& sample, const ProxyConfig& cfg) {
  ProxyLabel label;
  DisparityMap right_disp;
  if (cfg.engine == ProxyEngine::ground_truth) {
    if (!sample.gt_disparity) throw ConfigError("ground_truth proxy engine needs gt for '" + sample.id + "'");
    label.disparity = DisparityMap(sample.gt_disparity->tensor().clone());
    if (cfg.inject_holes) {
      if (!sample.gt_disparity_right) {
        throw ConfigError("hole injection with ground_truth engine needs right-view gt for '" + sample.id + "'");
      }
      right_disp = *sample.gt_disparity_right;
    }
  } else {
    label.disparity = hs_stereo(sample.left, sample.right, cfg.hs).disparity;
    if (cfg.inject_holes) {
      // The mirrored, swapped pair has the right view as its reference.
      const DisparityMap m = hs_stereo(mirror(sample.right), mirror(sample.left), cfg.hs).disparity;
      right_disp = DisparityMap(mirror(m.tensor()));
    }
  }
  label.valid = cfg.inject_holes ? consistency_mask(label.disparity, right_disp, cfg.consistency_threshold)
                                 : Tensor<double>(Shape{1, sample.height(), sample.width()}, 1.0);
  return label;
}

ProxyLabels make_proxy_labels(const std::vector<StereoSample>& data, const ProxyConfig& cfg, int threads) {
  cfg.hs.validate();
  ProxyLabels out;
  out.labels.resize(data.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(data.size());
  auto work = [&] {
    for (std::size_t i = next++; i < data.size(); i = next++) {
      try {
        out.labels[i] = make_proxy_label(data[i], cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < std::max(1, threads); ++t) pool.emplace_back(work);
    work();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  double holes = 0, total = 0;
  for (const auto& l : out.labels) {
    for (double v : l.valid.data()) holes += v == 0.0;
    total += static_cast<double>(l.valid.numel());
  }
  out.hole_fraction = total > 0 ? holes / total : 0.0;
  return out;
}

template <typename T>
void train_proxy_supervised(Network<T>& net, const std::vector<StereoSample>& data, const ProxyLabels& labels,
                            const StageSchedule& schedule, const OptimizerConfig& cfg, TrainOptions<T> options,
                            TrainState<T>& state) {
  options.objective = Objective::proxy;
  options.proxy_labels = &labels.labels;
  train_schedule(net, data, schedule, cfg, options, state, 0);
}

template void train_proxy_supervised<float>(Network<float>&, const std::vector<StereoSample>&, const ProxyLabels&,
                                            const StageSchedule&, const OptimizerConfig&, TrainOptions<float>,
                                            TrainState<float>&);
template void train_proxy_supervised<double>(Network<double>&, const std::vector<StereoSample>&, const ProxyLabels&,
                                             const StageSchedule&, const OptimizerConfig&, TrainOptions<double>,
                                             TrainState<double>&);

}  // namespace stereoae::baseline
