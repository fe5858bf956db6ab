#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "stereoae/dataio.hpp"
#include "stereoae/encoder.hpp"
#include "stereoae/geometry.hpp"

namespace stereoae {

struct OptimizerConfig {
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double lr0 = 0.01;
  double alpha = 0.0005;
  double stage_lr_divisor = 4.0;
  int batch_size = 16;
  // Restart the decay index at every stage instead of counting globally.
  bool reset_decay_per_stage = true;

  void validate() const;
};

// lr0 / (1 + alpha * n)^(n - 1), n >= 1.
double lr_schedule(double lr0, int n, double alpha);

// v <- momentum * v - lr * (g + weight_decay * p); p <- p + v.
// Gradients are read from each parameter's grad buffer.
template <typename T>
void sgd_step(std::vector<NamedParameter<T>>& params, std::vector<Tensor<T>>& velocity, const OptimizerConfig& cfg,
              double lr);

struct EpochRecord {
  int phase = 0;
  int stage = 0;
  int epoch = 0;
  double lr = 0.0;
  double recons = 0.0;
  double smooth = 0.0;
  double total = 0.0;
};

void write_loss_csv(std::ostream& out, const std::vector<EpochRecord>& history);

template <typename T>
struct TrainState {
  int phase = 0;   // index into the schedule; one past the end is fine-tuning
  int epoch = 0;   // completed epochs in the current phase
  int global_epoch = 0;
  std::uint64_t seed = 0;
  std::mt19937_64 rng;
  std::vector<Tensor<T>> velocity;
  std::vector<EpochRecord> history;

  explicit TrainState(std::uint64_t s = 0) : seed(s), rng(s) {}
};

enum class Objective { photometric, proxy };

// How the per-pixel mean loss is turned into the optimised objective.
// pixel_sum multiplies it by the output pixel count, giving the gradient of
// the summed cost.
enum class LossScaling { mean, pixel_sum };

std::string to_string(LossScaling s);
LossScaling loss_scaling_from_string(const std::string& name);

template <typename T>
struct TrainOptions {
  Objective objective = Objective::photometric;
  double gamma = geometry::kDefaultGamma;
  LossScaling scaling = LossScaling::pixel_sum;
  int threads = 1;
  double divergence_factor = 2.0;
  int divergence_patience = 3;
  // Native-resolution targets aligned with the dataset (proxy objective).
  const std::vector<ProxyLabel>* proxy_labels = nullptr;
  std::function<void(const Network<T>&, const TrainState<T>&)> on_epoch_end;
};

// Runs the remaining epochs of one stage. The network must already have
// plan.stage upsampling stages active.
template <typename T>
std::vector<EpochRecord> train_stage(Network<T>& net, const std::vector<StereoSample>& data, const StagePlan& plan,
                                     const OptimizerConfig& cfg, const TrainOptions<T>& options, TrainState<T>& state);

// Continues training of the fully grown network on the 8x augmented data.
template <typename T>
std::vector<EpochRecord> finetune_with_augmentation(Network<T>& net, const std::vector<StereoSample>& data,
                                                    int epochs, const OptimizerConfig& cfg,
                                                    const TrainOptions<T>& options, TrainState<T>& state);

// Walks the schedule from state.phase, growing the network between
// stages, then fine-tunes for `finetune_epochs` if positive.
template <typename T>
void train_schedule(Network<T>& net, const std::vector<StereoSample>& data, const StageSchedule& schedule,
                    const OptimizerConfig& cfg, const TrainOptions<T>& options, TrainState<T>& state,
                    int finetune_epochs = 0);

// Network input for a sample: resized to the input size, cast to T.
template <typename T>
Tensor<T> network_input(const Network<T>& net, const StereoSample& sample);

// Inference at the finest active stage.
template <typename T>
DisparityMap predict_disparity(const Network<T>& net, const StereoSample& sample);

}  // namespace stereoae
