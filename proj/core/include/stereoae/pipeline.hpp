#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stereoae/evalkit.hpp"
#include "stereoae/runconfig.hpp"

// Command implementations shared by the stereoae tool and the tests.
namespace stereoae::pipeline {

struct SynthSummary {
  int pairs = 0;
  double min_disparity = 0.0;
  double max_disparity = 0.0;
};

// Renders every scene of a listing into a dataset directory. seed_offset is
// added to every texture seed.
SynthSummary run_synth(const std::filesystem::path& listing, const std::filesystem::path& out_dir,
                       std::uint64_t seed_offset, std::ostream& log);

struct TrainOutcome {
  std::filesystem::path final_checkpoint;
  std::vector<EpochRecord> history;
};

// Writes config.json, stage_<k>.ckpt after every phase, latest.ckpt every
// training.checkpoint_every epochs, final.ckpt and loss.csv into
// cfg.output_dir. With `resume`, continues from that checkpoint, which must
// carry cfg.hash().
TrainOutcome run_train(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume, std::ostream& log);

struct EvalOutcome {
  eval::MetricsReport pooled;  // all selected pixels of all samples
  std::vector<std::pair<std::string, eval::MetricsReport>> per_sample;
  bool config_hash_matches = true;
};

// Predicts every sample of `dataset`, writes metrics.txt, appends
// metrics.csv and, with `images`, per-sample heat maps and inverse-depth
// images. A checkpoint from a different configuration is rejected unless
// `force`.
EvalOutcome run_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& dataset, bool force, bool images, std::ostream& log);

struct BaselineOutcome {
  std::optional<eval::MetricsReport> pooled;  // when ground truth exists
  int warnings = 0;
};

// HS stereo on every sample: <id>_hs.f32 disparities, <id>_hs.pgm inverse
// depth, metrics.txt/metrics.csv when ground truth is present.
BaselineOutcome run_baseline(const RunConfig& cfg, const std::filesystem::path& dataset, std::ostream& log);

// Layer table and output size of each stage.
void dump_architecture(const NetworkConfig& cfg, std::ostream& out);

// Seeds derived from RunConfig::seed.
std::uint64_t network_seed(const RunConfig& cfg);
std::uint64_t state_seed(const RunConfig& cfg);

}  // namespace stereoae::pipeline
