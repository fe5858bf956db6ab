#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stereoae/ops.hpp"
#include "stereoae/tensor.hpp"

namespace stereoae {

enum class LayerKind { conv, pool, lrn, relu, fullyconv, upsample, skip_fuse, crop_pad };
enum class InitKind { none, random, zero, bilinear };

std::string to_string(LayerKind kind);
std::string to_string(InitKind kind);

struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::conv;
  int kernel_h = 0;  // conv, fullyconv, pool window, upsample filter
  int kernel_w = 0;
  int stride = 1;  // pool/conv stride, upsample factor
  // Zero padding for conv/pool, replicate padding for upsample, signed
  // offsets for crop_pad.
  ops::Sides pad;
  int in_channels = 0;
  int out_channels = 0;
  InitKind init = InitKind::none;
  std::string source;  // skip_fuse: pool layer whose input is fused
  ops::LrnParams lrn;

  bool has_parameters() const;
  std::int64_t parameter_count() const;
  // "C1 conv 11x11/4 pad 0,0,0,0 3->96 params=34944"
  std::string describe() const;
};

struct UpsampleStage {
  std::string id;  // output name, e.g. "L8"
  int factor = 2;
  std::optional<std::string> skip_pool;
  // Crop/pad applied after upsampling; derived from the shape chain.
  ops::Sides align;
};

enum class Profile { paper, desk };

std::string to_string(Profile profile);
Profile profile_from_string(const std::string& name);

struct NetworkConfig {
  std::string profile = "desk";
  int input_channels = 1;
  int input_height = 64;
  int input_width = 192;
  std::vector<LayerSpec> trunk;
  std::vector<LayerSpec> head;
  std::vector<UpsampleStage> stages;
  // Trunk/head weights ~ U[-s, s], s = init_gain * sqrt(1 / fan_in).
  double init_gain = 1.0;
  // Head uses a kernel spanning the whole coarse map instead of 5x5.
  bool wide_head = false;

  static NetworkConfig make(Profile profile);

  // Checks the layer graph and fills each stage's alignment from the shape
  // chain. Throws ConfigError naming the offending layer.
  void resolve();
  void validate() const;

  // Executed layer sequence with `active_stages` upsampling stages.
  std::vector<LayerSpec> layers(int active_stages) const;

  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
};

struct LayerShape {
  LayerSpec spec;
  Shape output;  // [C,H,W]
};

// Shape of every executed layer. Throws ConfigError on a chain break.
std::vector<LayerShape> infer_shapes(const NetworkConfig& cfg, int active_stages);

// Spatial [H,W] of the disparity output after `active_stages` stages.
std::pair<int, int> output_resolution(const NetworkConfig& cfg, int active_stages);

template <typename T>
struct NamedParameter {
  std::string name;  // "<layer id>.weight" / "<layer id>.bias"
  Tensor<T> value;
};

struct ForwardOptions {
  bool ablate_skips = false;
  std::vector<std::string>* trace = nullptr;  // receives executed layer ids
};

template <typename T>
class Network {
 public:
  Network(NetworkConfig cfg, std::uint64_t seed);

  const NetworkConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  int active_stages() const { return active_stages_; }
  int max_stages() const { return static_cast<int>(cfg_.stages.size()); }

  // Appends the next upsampling stage: bilinear filter, zero skip branch.
  void grow_stage();

  // image [C,H,W] normalized -> disparity [1,h,w] at the finest active stage.
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& image, const ForwardOptions& options = {}) const;

  std::pair<int, int> output_resolution() const;
  std::vector<LayerSpec> layers() const { return cfg_.layers(active_stages_); }

  std::vector<NamedParameter<T>>& parameters() { return params_; }
  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  const Tensor<T>& parameter(const std::string& name) const;
  std::int64_t parameter_count() const;

  // Deep copy with independent parameter storage.
  Network clone() const;
  // Copies parameter values from a network of identical layout.
  void copy_parameters_from(const Network& other);

 private:
  void add_layer_parameters(const LayerSpec& spec, std::mt19937_64* rng);

  NetworkConfig cfg_;
  std::uint64_t seed_;
  int active_stages_ = 0;
  std::vector<NamedParameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

struct StagePlan {
  int stage = 0;  // number of active upsampling stages
  std::vector<std::string> active_layers;
  int epochs = 0;
  double initial_learning_rate = 0.0;
};

struct StageSchedule {
  std::vector<StagePlan> stages;

  // Each stage's active set must strictly contain the previous one.
  void validate() const;
};

// Coarse stage plus `finer_stages` upsampling stages. Stage k starts at
// lr0 / divisor^k.
StageSchedule make_schedule(const NetworkConfig& cfg, int finer_stages, int coarse_epochs, int finer_epochs,
                            double lr0, double stage_lr_divisor);

}  // namespace stereoae
