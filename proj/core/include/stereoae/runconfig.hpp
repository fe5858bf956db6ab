#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "stereoae/baseline.hpp"
#include "stereoae/encoder.hpp"
#include "stereoae/evalkit.hpp"
#include "stereoae/geometry.hpp"
#include "stereoae/trainer.hpp"

namespace stereoae {

enum class RunMode { unsupervised, proxy_hs };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& name);

struct TrainingSettings {
  int finer_stages = 2;
  int coarse_epochs = 200;
  int finer_epochs = 100;
  int finetune_epochs = 0;
  LossScaling scaling = LossScaling::pixel_sum;
  double divergence_factor = 2.0;
  int divergence_patience = 3;
  int checkpoint_every = 0;  // epochs; stage ends are always checkpointed
};

struct DataSettings {
  std::string train;    // dataset directory
  std::string eval;     // dataset directory
  std::string listing;  // scene listing for synth
};

struct ProxySettings {
  baseline::ProxyConfig labels;
  LossScaling scaling = LossScaling::mean;
};

struct EvalSettings {
  std::optional<eval::CropRect> crop;
  double heatmap_max_error = 10.0;  // metres at the hottest colour
};

struct RunConfig {
  Profile profile = Profile::desk;
  NetworkConfig network = NetworkConfig::make(Profile::desk);
  OptimizerConfig optimizer;
  double gamma = geometry::kDefaultGamma;
  DepthClamp clamp;
  std::optional<Calibration> calibration;  // overrides the datasets' rigs
  DataSettings data;
  RunMode mode = RunMode::unsupervised;
  ProxySettings proxy;
  TrainingSettings training;
  EvalSettings evaluation;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string output_dir = "out";

  static RunConfig defaults(Profile profile);

  // Missing keys take defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  // Fully expanded form.
  nlohmann::json to_json() const;

  // Throws ConfigError. With check_paths, non-empty data paths must exist.
  void validate(bool check_paths = false) const;

  // FNV-1a over the settings that determine the trained parameters
  // (everything except paths, output location, thread count and evaluation).
  std::uint64_t hash() const;

  StageSchedule schedule() const;
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

std::uint64_t fnv1a(std::string_view bytes);

}  // namespace stereoae
