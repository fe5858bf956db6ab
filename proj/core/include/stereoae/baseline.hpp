#pragma once

#include <string>
#include <vector>

#include "stereoae/dataio.hpp"
#include "stereoae/trainer.hpp"

namespace stereoae::baseline {

struct HSConfig {
  int pyramid_levels = 6;
  double pyramid_scale = 0.5;
  int warp_iterations = 1000;  // per level, upper bound
  double gamma_hs = 0.01;
  double inner_tolerance = 1e-6;  // max |update| of a Gauss-Seidel sweep
  int inner_iterations = 100;
  // A level stops once an accepted warp step moves no pixel by more than this.
  double warp_tolerance = 1e-5;
  int line_search_steps = 12;
  // Levels whose shorter side would drop below this are skipped.
  int min_level_extent = 8;

  void validate() const;
};

struct HSLevelTrace {
  int height = 0;
  int width = 0;
  DisparityMap init;    // after upscaling from the coarser level
  DisparityMap result;  // returned to the next finer level
  std::vector<double> energy;  // energy[0] at init, then after each accepted step
  int warp_steps = 0;
  int unconverged_inner = 0;  // inner solves that hit the iteration cap
};

struct HSResult {
  DisparityMap disparity;
  std::vector<HSLevelTrace> levels;  // coarsest first; skipped levels absent
  std::vector<std::string> warnings;
};

// Energy of a disparity field at one resolution: summed channel-wise squared
// difference between left and the zero-padded warp of right, plus gamma times
// the summed squared forward differences.
double hs_energy(const Tensor<double>& left, const Tensor<double>& right, const DisparityMap& disparity,
                 double gamma_hs);

// Coarse-to-fine variational stereo on a rectified pair (normalized images).
HSResult hs_stereo(const Tensor<double>& left, const Tensor<double>& right, const HSConfig& cfg = {});
HSResult hs_stereo(const StereoSample& pair, const HSConfig& cfg = {});

enum class ProxyEngine { hs, ground_truth };

std::string to_string(ProxyEngine engine);
ProxyEngine proxy_engine_from_string(const std::string& name);

struct ProxyConfig {
  ProxyEngine engine = ProxyEngine::hs;
  HSConfig hs;
  // Mark left-right inconsistent and out-of-view pixels invalid.
  bool inject_holes = false;
  double consistency_threshold = 1.0;  // px
};

// Left-right check: valid where |D_l(x) - D_r(x + D_l(x))| <= threshold and
// x + D_l(x) lies inside the image. D_r is the right view's disparity in the
// same sign convention (right(x) corresponds to left(x - D_r(x))).
Tensor<double> consistency_mask(const DisparityMap& left_disp, const DisparityMap& right_disp, double threshold);

ProxyLabel make_proxy_label(const StereoSample& sample, const ProxyConfig& cfg);

struct ProxyLabels {
  std::vector<ProxyLabel> labels;
  double hole_fraction = 0.0;  // over all pixels of the dataset
};

ProxyLabels make_proxy_labels(const std::vector<StereoSample>& data, const ProxyConfig& cfg, int threads = 1);

// Least-squares supervision on the valid label pixels, using the trainer's
// schedule and stage growth.
template <typename T>
void train_proxy_supervised(Network<T>& net, const std::vector<StereoSample>& data, const ProxyLabels& labels,
                            const StageSchedule& schedule, const OptimizerConfig& cfg, TrainOptions<T> options,
                            TrainState<T>& state);

}  // namespace stereoae::baseline
