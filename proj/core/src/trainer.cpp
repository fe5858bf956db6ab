#include "stereoae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "stereoae/errors.hpp"

namespace stereoae {
namespace {

// Decorrelates the augmentation stream from the shuffling stream so that a
// resumed fine-tune rebuilds the same augmented set.
constexpr std::uint64_t kAugmentSalt = 0x9e3779b97f4a7c15ULL;

template <typename T>
struct StageSample {
  Tensor<T> input;  // network input
  Tensor<T> left;   // at output resolution
  Tensor<T> right;
  Tensor<T> target;  // proxy objective only
  Tensor<T> valid;
};

struct SampleLoss {
  double recons = 0.0;
  double smooth = 0.0;
  double total = 0.0;
};

template <typename T>
std::vector<StageSample<T>> prepare(const Network<T>& net, const std::vector<StereoSample>& data,
                                    const TrainOptions<T>& options) {
  const auto [h, w] = net.output_resolution();
  if (options.objective == Objective::proxy &&
      (options.proxy_labels == nullptr || options.proxy_labels->size() != data.size())) {
    throw ConfigError("proxy objective needs one label per training sample");
  }
  std::vector<StageSample<T>> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    StageSample<T> p;
    p.input = network_input(net, s);
    const StereoSample small = resize_for_stage(s, h, w);
    p.left = tensor_cast<T>(small.left);
    p.right = tensor_cast<T>(small.right);
    if (options.objective == Objective::proxy) {
      const ProxyLabel label = resize_proxy_label((*options.proxy_labels)[i], h, w);
      p.target = tensor_cast<T>(label.disparity.tensor());
      p.valid = tensor_cast<T>(label.valid);
    }
    out.push_back(std::move(p));
  }
  return out;
}

// Forward/backward for one sample; leaves d(loss)/d(param) in the grads of
// `net`'s parameters, which must be zeroed by the caller.
template <typename T>
SampleLoss sample_gradient(const Network<T>& net, const StageSample<T>& s, const TrainOptions<T>& options) {
  Tape<T> tape;
  const Tensor<T> disparity = net.forward(tape, s.input);
  SampleLoss loss;
  Tensor<T> total;
  if (options.objective == Objective::photometric) {
    const auto b = geometry::total_loss(tape, s.left, s.right, disparity, options.gamma);
    loss = {static_cast<double>(b.recons.item()), static_cast<double>(b.smooth.item()),
            static_cast<double>(b.total.item())};
    total = b.total;
  } else {
    // Masked squared error against the proxy disparities.
    const auto fit = geometry::photometric_loss(tape, s.target, disparity, s.valid);
    total = fit.value;
    loss = {static_cast<double>(total.item()), 0.0, static_cast<double>(total.item())};
  }
  if (total.requires_grad()) {
    if (options.scaling == LossScaling::pixel_sum) {
      total = ops::scale(tape, total, static_cast<T>(disparity.numel()));
    }
    tape.backward(total);
  }
  return loss;
}

template <typename T>
void zero_grads(std::vector<NamedParameter<T>>& params) {
  for (auto& p : params) {
    p.value.zero_grad();
  }
}

template <typename T>
std::vector<T> flatten_grads(const std::vector<NamedParameter<T>>& params) {
  std::vector<T> out;
  for (const auto& p : params) {
    const auto g = p.value.grad();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

// Per-sample gradients of one batch, reduced in sample order so the sum
// does not depend on how samples were spread across threads.
template <typename T>
std::vector<SampleLoss> batch_gradient(Network<T>& net, std::vector<Network<T>>& workers,
                                       const std::vector<StageSample<T>>& data, std::span<const std::size_t> batch,
                                       const TrainOptions<T>& options) {
  const std::size_t n = batch.size();
  std::vector<std::vector<T>> grads(n);
  std::vector<SampleLoss> losses(n);
  const auto run = [&](Network<T>& worker, std::size_t first, std::size_t step) {
    for (std::size_t i = first; i < n; i += step) {
      zero_grads(worker.parameters());
      losses[i] = sample_gradient(worker, data[batch[i]], options);
      grads[i] = flatten_grads(worker.parameters());
    }
  };
  const std::size_t threads = std::min<std::size_t>(workers.size() + 1, n);
  if (threads <= 1) {
    run(net, 0, 1);
  } else {
    for (std::size_t t = 0; t + 1 < threads; ++t) {
      workers[t].copy_parameters_from(net);
    }
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 1; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          run(workers[t - 1], t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    try {
      run(net, 0, threads);
    } catch (...) {
      errors[0] = std::current_exception();
    }
    pool.clear();
    for (const auto& e : errors) {
      if (e) {
        std::rethrow_exception(e);
      }
    }
  }

  std::vector<T> acc = std::move(grads[0]);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < acc.size(); ++j) {
      acc[j] += grads[i][j];
    }
  }
  const T inv = T(1) / static_cast<T>(n);
  std::size_t offset = 0;
  for (auto& p : net.parameters()) {
    auto g = p.value.grad();
    for (auto& v : g) {
      v = acc[offset++] * inv;
    }
  }
  return losses;
}

template <typename T>
std::vector<EpochRecord> run_epochs(Network<T>& net, const std::vector<StageSample<T>>& data, int epochs, double initial_lr, const OptimizerConfig& cfg,
                                    const TrainOptions<T>& options, TrainState<T>& state) {
  cfg.validate();
  if (data.empty()) {
    throw ConfigError("training set is empty");
  }
  if (options.threads < 1) {
    throw ConfigError("thread count must be positive");
  }
  auto& params = net.parameters();
  if (state.epoch == 0 || state.velocity.size() != params.size()) {
    if (state.epoch != 0) {
      throw ConfigError("resumed optimizer state does not match the network's parameters");
    }
    state.velocity.clear();
    for (const auto& p : params) {
      state.velocity.emplace_back(p.value.shape());
    }
  }
  std::vector<Network<T>> workers;
  for (int t = 1; t < options.threads; ++t) {
    workers.push_back(net.clone());
  }

  // Replays the divergence detector over this phase's history so a resumed
  // run continues with the same best value and strike count.
  double best = std::numeric_limits<double>::infinity();
  int strikes = 0;
  const auto observe = [&](double total) {
    strikes = total > options.divergence_factor * best ? strikes + 1 : 0;
    best = std::min(best, total);
  };
  for (const auto& r : state.history) {
    if (r.phase == state.phase) {
      observe(r.total);
    }
  }
  const int stage_tag = net.active_stages();
  std::vector<EpochRecord> records;
  std::vector<std::size_t> order(data.size());
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  for (int n = state.epoch + 1; n <= epochs; ++n) {
    const int decay_index = cfg.reset_decay_per_stage ? n : state.global_epoch + 1;
    const double lr = lr_schedule(initial_lr, decay_index, cfg.alpha);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);

    SampleLoss sum;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      const auto losses = batch_gradient(net, workers, data, std::span<const std::size_t>(order).subspan(start, len),
                                         options);
      for (const auto& l : losses) {
        sum.recons += l.recons;
        sum.smooth += l.smooth;
        sum.total += l.total;
      }
      sgd_step(params, state.velocity, cfg, lr);
    }
    const double count = static_cast<double>(data.size());
    EpochRecord rec{state.phase, stage_tag, n, lr, sum.recons / count, sum.smooth / count, sum.total / count};
    if (!std::isfinite(rec.total)) {
      throw NumericError("stage " + std::to_string(stage_tag) + " epoch " + std::to_string(n) +
                         ": non-finite training loss");
    }
    const double best_before = best;
    observe(rec.total);
    if (strikes >= options.divergence_patience) {
      throw DivergenceError("stage " + std::to_string(stage_tag) + " epoch " + std::to_string(n) + ": loss " +
                            std::to_string(rec.total) + " exceeded " + std::to_string(options.divergence_factor) +
                            "x the best value " + std::to_string(best_before) + " for " +
                            std::to_string(options.divergence_patience) + " consecutive epochs");
    }
    state.epoch = n;
    ++state.global_epoch;
    state.history.push_back(rec);
    records.push_back(rec);
    if (options.on_epoch_end) {
      options.on_epoch_end(net, state);
    }
  }
  return records;
}

}  // namespace

std::string to_string(LossScaling s) { return s == LossScaling::mean ? "mean" : "pixel_sum"; }

LossScaling loss_scaling_from_string(const std::string& name) {
  if (name == "mean") {
    return LossScaling::mean;
  }
  if (name == "pixel_sum") {
    return LossScaling::pixel_sum;
  }
  throw ConfigError("unknown loss scaling '" + name + "' (mean, pixel_sum)");
}

void OptimizerConfig::validate() const {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0) || !(lr0 >= 0.0) || !(alpha >= 0.0)) {
    throw ConfigError("weight decay, lr0 and alpha must be non-negative");
  }
  if (!(stage_lr_divisor > 0.0)) {
    throw ConfigError("stage learning-rate divisor must be positive");
  }
  if (batch_size < 1) {
    throw ConfigError("batch size must be positive");
  }
}

double lr_schedule(double lr0, int n, double alpha) {
  if (n < 1) {
    throw UsageError("epoch index must be >= 1");
  }
  return lr0 / std::pow(1.0 + alpha * n, n - 1);
}

template <typename T>
void sgd_step(std::vector<NamedParameter<T>>& params, std::vector<Tensor<T>>& velocity, const OptimizerConfig& cfg,
              double lr) {
  if (velocity.size() != params.size()) {
    throw UsageError("velocity and parameter lists differ in length");
  }
  const T m = static_cast<T>(cfg.momentum);
  const T wd = static_cast<T>(cfg.weight_decay);
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value.data();
    const auto g = params[i].value.grad();
    auto v = velocity[i].data();
    if (v.size() != p.size()) {
      throw UsageError("velocity shape differs for '" + params[i].name + "'");
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = m * v[j] - step * (g[j] + wd * p[j]);
      p[j] += v[j];
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (!std::isfinite(p[j])) {
        throw NumericError("non-finite update of '" + params[i].name + "' at index " + std::to_string(j) +
                           " (grad " + std::to_string(g[j]) + ", lr " + std::to_string(lr) + ")");
      }
    }
  }
}

void write_loss_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,stage,lr,recons,smooth,total,phase\n";
  out << std::setprecision(17);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.stage << ',' << r.lr << ',' << r.recons << ',' << r.smooth << ',' << r.total << ','
        << r.phase << '\n';
  }
}

template <typename T>
Tensor<T> network_input(const Network<T>& net, const StereoSample& sample) {
  const auto& cfg = net.config();
  if (sample.channels() != cfg.input_channels) {
    throw ConfigError("sample '" + sample.id + "' has " + std::to_string(sample.channels()) +
                      " channels, network expects " + std::to_string(cfg.input_channels));
  }
  return tensor_cast<T>(resize_image(sample.left, cfg.input_height, cfg.input_width));
}

template <typename T>
DisparityMap predict_disparity(const Network<T>& net, const StereoSample& sample) {
  Tape<T> tape(TapeMode::inference);
  return DisparityMap(tensor_cast<double>(net.forward(tape, network_input(net, sample))));
}

template <typename T>
std::vector<EpochRecord> train_stage(Network<T>& net, const std::vector<StereoSample>& data, const StagePlan& plan,
                                     const OptimizerConfig& cfg, const TrainOptions<T>& options, TrainState<T>& state) {
  if (net.active_stages() != plan.stage) {
    throw UsageError("network has " + std::to_string(net.active_stages()) + " active stages, plan expects " +
                     std::to_string(plan.stage));
  }
  const auto prepared = prepare(net, data, options);
  return run_epochs(net, prepared, plan.epochs, plan.initial_learning_rate, cfg, options, state);
}

template <typename T>
std::vector<EpochRecord> finetune_with_augmentation(Network<T>& net, const std::vector<StereoSample>& data,
                                                    int epochs, const OptimizerConfig& cfg,
                                                    const TrainOptions<T>& options, TrainState<T>& state) {
  if (options.objective == Objective::proxy) {
    throw ConfigError("augmented fine-tuning is only defined for the photometric objective");
  }
  std::mt19937_64 aug_rng(state.seed ^ kAugmentSalt);
  std::vector<StereoSample> augmented;
  for (const auto& s : data) {
    for (auto& v : augment(s, aug_rng)) {
      augmented.push_back(std::move(v));
    }
  }
  const TrainOptions<T>& opts = options;
  const int stage = net.active_stages();
  const double lr = cfg.lr0 / std::pow(cfg.stage_lr_divisor, stage);
  const auto prepared = prepare(net, augmented, opts);
  return run_epochs(net, prepared, epochs, lr, cfg, opts, state);
}

template <typename T>
void train_schedule(Network<T>& net, const std::vector<StereoSample>& data, const StageSchedule& schedule,
                    const OptimizerConfig& cfg, const TrainOptions<T>& options, TrainState<T>& state,
                    int finetune_epochs) {
  schedule.validate();
  const int phases = static_cast<int>(schedule.stages.size());
  while (state.phase < phases) {
    const auto& plan = schedule.stages[static_cast<std::size_t>(state.phase)];
    while (net.active_stages() < plan.stage) {
      net.grow_stage();
    }
    train_stage(net, data, plan, cfg, options, state);
    ++state.phase;
    state.epoch = 0;
  }
  if (finetune_epochs > 0 && state.phase == phases) {
    finetune_with_augmentation(net, data, finetune_epochs, cfg, options, state);
    ++state.phase;
    state.epoch = 0;
  }
}

#define STEREOAE_INSTANTIATE_TRAINER(T)                                                                            \
  template void sgd_step(std::vector<NamedParameter<T>>&, std::vector<Tensor<T>>&, const OptimizerConfig&, double); \
  template Tensor<T> network_input(const Network<T>&, const StereoSample&);                                       \
  template DisparityMap predict_disparity(const Network<T>&, const StereoSample&);                                \
  template std::vector<EpochRecord> train_stage(Network<T>&, const std::vector<StereoSample>&, const StagePlan&,   \
                                                const OptimizerConfig&, const TrainOptions<T>&, TrainState<T>&);   \
  template std::vector<EpochRecord> finetune_with_augmentation(Network<T>&, const std::vector<StereoSample>&, int, \
                                                               const OptimizerConfig&, const TrainOptions<T>&,     \
                                                               TrainState<T>&);                                    \
  template void train_schedule(Network<T>&, const std::vector<StereoSample>&, const StageSchedule&,                \
                               const OptimizerConfig&, const TrainOptions<T>&, TrainState<T>&, int);

STEREOAE_INSTANTIATE_TRAINER(float)
STEREOAE_INSTANTIATE_TRAINER(double)

}  // namespace stereoae
